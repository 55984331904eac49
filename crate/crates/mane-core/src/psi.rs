//! The Psi error budget of the hyperbolic construction.
//!
//! For a start `x`, a unit non-collision direction `a` and energy `lambda`,
//! the budget charges the detour through the base point plus everything the
//! far-field envelope can extort along the way:
//!
//! ```text
//! Psi(T) = (1/sqrt(2 lambda)) m_hat(x, x*)
//!        + (N^2 / (lambda a_flat)) int_{(x*)_flat}^{2T + 2|x*|} f(s) ds
//! ```
//!
//! `PsiTilde(t)` is the tail `sum_{j > floor(log2 t)} sqrt(2^{-j} Psi(2^j))`
//! of the dyadic square-root series; summability of the envelope makes it
//! decrease to zero, and `n0` is the first dyadic scale where it is small
//! enough (relative to `a_flat`) for the induction over spheres to close.
//!
//! The series is truncated once the bound on the unsummed remainder drops
//! below `1e-6` of the running total; the constant part of the remainder is
//! summed in closed form (it is exactly geometric) and the envelope part is
//! bounded by the observed term decay and carried as an additive uncertainty.

use crate::config::{base_point, Configuration};
use crate::error::{Error, Result};
use crate::potential::PotentialSpec;
use crate::report::PsiSummary;
use crate::solver::{solve_geodesic, SolveOptions};

/// Hard cap on dyadic exponents while truncating the tail series.
const J_CAP: u32 = 220;

/// Relative truncation threshold for the envelope tail.
const TAIL_REL: f64 = 1e-6;

/// `PsiTilde(2^n0) <= 2^{-10} a_flat` defines the admissible scale.
const N0_FACTOR: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone)]
pub struct PsiTable {
    lambda: f64,
    a_flat: f64,
    masses: Vec<f64>,
    pot: PotentialSpec,
    x_star: Configuration,
    x_star_flat: f64,
    x_star_norm: f64,
    start_gap: f64,
    /// `(1/sqrt(2 lambda)) m_hat(x, x*)`.
    base_term: f64,
    /// `N^2 / (lambda a_flat)`.
    envelope_coeff: f64,
    /// `u_j = sqrt(2^{-j} Psi(2^j))` for `j = 1..=j_stop`.
    terms: Vec<f64>,
    j_stop: u32,
    /// Bound on the envelope part of the unsummed tail.
    tail_uncertainty: f64,
    n0: u32,
}

/// Builds the Psi budget. The Mane term is the solver's upper estimate, which
/// only enlarges the budget and therefore weakens (never falsifies) the
/// bounds that use it on the right-hand side.
pub fn build_psi_table(
    x: &Configuration,
    a: &Configuration,
    lambda: f64,
    pot: &PotentialSpec,
    j_max: u32,
    opts: &SolveOptions,
) -> Result<PsiTable> {
    if !(lambda > 0.0) {
        return Err(Error::InputDomain(format!("lambda = {lambda}, need lambda > 0")));
    }
    pot.validate()?;
    let a_flat = a.flat_norm();
    let x_star = base_point(x, a)?;
    let base = solve_geodesic(x, &x_star, pot, lambda, opts)?;
    let base_term = base.action.value / (2.0 * lambda).sqrt();
    let n = x.n_bodies() as f64;
    let envelope_coeff = n * n / (lambda * a_flat);

    let mut table = PsiTable {
        lambda,
        a_flat,
        masses: x.masses().to_vec(),
        pot: pot.clone(),
        x_star_flat: x_star.flat_norm(),
        x_star_norm: x_star.norm(),
        start_gap: x_star.sub(x).norm(),
        x_star,
        base_term,
        envelope_coeff,
        terms: Vec::new(),
        j_stop: 0,
        tail_uncertainty: 0.0,
        n0: 0,
    };
    table.truncate_series(j_max)?;
    table.n0 = table.find_n0()?;
    Ok(table)
}

impl PsiTable {
    /// `Psi(T)`; nondecreasing in `T`.
    pub fn psi(&self, t_cap: f64) -> Result<f64> {
        let hi = 2.0 * t_cap + 2.0 * self.x_star_norm;
        let env = if hi <= self.x_star_flat {
            0.0
        } else {
            self.pot.envelope_integral(self.x_star_flat, hi, &self.masses)?
        };
        Ok(self.base_term + self.envelope_coeff * env)
    }

    /// `u_j = sqrt(2^{-j} Psi(2^j))`.
    fn term(&self, j: u32) -> Result<f64> {
        let t = (2.0f64).powi(j as i32);
        Ok((self.psi(t)? / t).sqrt())
    }

    /// Envelope-only part of `u_j`.
    fn env_term(&self, j: u32) -> Result<f64> {
        let t = (2.0f64).powi(j as i32);
        let hi = 2.0 * t + 2.0 * self.x_star_norm;
        let env = if hi <= self.x_star_flat {
            0.0
        } else {
            self.pot.envelope_integral(self.x_star_flat, hi, &self.masses)?
        };
        Ok((self.envelope_coeff * env / t).sqrt())
    }

    fn truncate_series(&mut self, j_max: u32) -> Result<()> {
        let threshold_abs = 1e-3 * N0_FACTOR * self.a_flat;
        let mut terms = Vec::new();
        let mut env_terms = Vec::new();
        let mut j = 1u32;
        loop {
            terms.push(self.term(j)?);
            env_terms.push(self.env_term(j)?);
            let sum: f64 = terms.iter().sum::<f64>() + self.const_tail_from(j + 1);
            if j >= j_max.max(8) {
                let e_bound = env_tail_bound(&env_terms);
                match e_bound {
                    Some(b) if b <= TAIL_REL * sum || b <= threshold_abs => {
                        self.terms = terms;
                        self.j_stop = j;
                        self.tail_uncertainty = b;
                        return Ok(());
                    }
                    _ => {}
                }
            }
            j += 1;
            if j > J_CAP {
                return Err(Error::EnvelopeDivergence);
            }
        }
    }

    /// Exact geometric tail of the constant part: `sum_{j>=m} sqrt(2^{-j} base)`.
    fn const_tail_from(&self, m: u32) -> f64 {
        let ratio = std::f64::consts::FRAC_1_SQRT_2;
        self.base_term.max(0.0).sqrt() * (0.5f64).powf(m as f64 / 2.0) / (1.0 - ratio)
    }

    /// `sum_{j >= m} u_j`, lower value of the truncated series.
    pub fn tail_from(&self, m: u32) -> f64 {
        let m = m.max(1);
        if m > self.j_stop {
            // beyond the computed range only the closed-form part remains
            return self.const_tail_from(m);
        }
        let partial: f64 = self.terms.iter().skip((m - 1) as usize).sum();
        partial + self.const_tail_from(self.j_stop + 1)
    }

    /// `PsiTilde(t) = sum_{j >= floor(log2 t) + 1} u_j` for `t >= 1`.
    pub fn psi_tilde(&self, t: f64) -> f64 {
        debug_assert!(t >= 1.0);
        self.tail_from(t.log2().floor() as u32 + 1)
    }

    /// Additive uncertainty on any `psi_tilde` value from tail truncation.
    pub fn tail_uncertainty(&self) -> f64 {
        self.tail_uncertainty
    }

    fn find_n0(&self) -> Result<u32> {
        let floor = (20.0 + self.start_gap.log2()).ceil().max(1.0) as u32;
        let threshold = N0_FACTOR * self.a_flat;
        for n in floor..=J_CAP {
            if self.tail_from(n) + self.tail_uncertainty <= threshold {
                return Ok(n);
            }
        }
        Err(Error::EnvelopeDivergence)
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a_flat(&self) -> f64 {
        self.a_flat
    }

    pub fn base_term(&self) -> f64 {
        self.base_term
    }

    pub fn envelope_coeff(&self) -> f64 {
        self.envelope_coeff
    }

    pub fn x_star(&self) -> &Configuration {
        &self.x_star
    }

    pub fn summary(&self, j_max: u32) -> Result<PsiSummary> {
        let mut psi_at = Vec::new();
        let mut psi_tilde_at = Vec::new();
        for j in 1..=j_max {
            psi_at.push((j, self.psi((2.0f64).powi(j as i32))?));
            psi_tilde_at.push((j, self.tail_from(j + 1)));
        }
        Ok(PsiSummary {
            base_term: self.base_term,
            envelope_coeff: self.envelope_coeff,
            n0: self.n0,
            a_flat: self.a_flat,
            x_star_flat: self.x_star_flat,
            x_star_norm: self.x_star_norm,
            psi_at,
            psi_tilde_at,
            tail_uncertainty: self.tail_uncertainty,
        })
    }
}

/// Geometric bound on the unsummed envelope tail from the observed decay of
/// its last few terms. `None` while the decay has not settled below 0.95.
fn env_tail_bound(env_terms: &[f64]) -> Option<f64> {
    let k = env_terms.len();
    let last = env_terms[k - 1];
    if last == 0.0 {
        return Some(0.0);
    }
    if k < 4 {
        return None;
    }
    let mut rho: f64 = 0.0;
    for i in (k - 3)..k {
        if env_terms[i - 1] <= 0.0 {
            return None;
        }
        rho = rho.max(env_terms[i] / env_terms[i - 1]);
    }
    if rho >= 0.95 {
        return None;
    }
    // safety factor 2 over the plain geometric estimate
    Some(2.0 * last * rho / (1.0 - rho))
}
