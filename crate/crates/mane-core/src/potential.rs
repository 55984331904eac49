//! Pairwise potential family `F(x) = sum F_ij(x_i, x_j)`, gradients under the
//! mass scalar product, and far-field envelopes.
//!
//! Inside action functionals each pair term is clamped at zero (`max(F_ij, 0)`)
//! so the action stays bounded below by `lambda * sigma`; kinds that can go
//! negative far from collisions (Lennard-Jones, Mucket-Treder, logarithmic)
//! keep their unclamped form available for the ODE oracle.
//!
//! An envelope is a radial majorant `F_ij(x_i, x_j) <= f(|x_i - x_j|)` valid
//! from [`PotentialSpec::near_region_width`] outward, whose dyadic series
//! `sum_k (2^{-k} int_{2^k}^{2^{k+1}} f)^{1/2}` converges. The canonical
//! envelopes shipped per kind are crude but valid; user tables may override
//! them.

use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// Euclidean distance between bodies `i` and `j` in a flat coordinate slice.
pub(crate) fn slice_pair_distance(d: usize, xs: &[f64], i: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..d {
        let diff = xs[i * d + c] - xs[j * d + c];
        acc += diff * diff;
    }
    acc.sqrt()
}

/// Minimum pairwise separation in a flat coordinate slice.
pub(crate) fn slice_min_separation(d: usize, n: usize, xs: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.min(slice_pair_distance(d, xs, i, j));
        }
    }
    best
}

/// Pair separations below this raise the singular-evaluation error for
/// singular kinds; double precision blows up earlier than the math does.
pub const NEAR_COLLISION_CUTOFF: f64 = 1e-9;

/// Relative tolerance for all envelope quadrature.
pub const ENVELOPE_QUAD_TOL: f64 = 1e-10;

/// One pairwise interaction law. `m` factors below denote `m_i * m_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPotentialKind {
    /// `F_ij = 0`
    Zero,
    /// `F_ij = m / r`
    Newtonian,
    /// `F_ij = m r^{-alpha}`, `alpha > 0`
    Homogeneous { alpha: f64 },
    /// `F_ij = m (r^{-alpha} + delta r^{-beta})`, `alpha > beta > 0`, `delta > 0`
    QuasiHomogeneous { alpha: f64, beta: f64, delta: f64 },
    /// `F_ij = A r^{-12} - B r^{-6}`, `A, B > 0`
    LennardJones { a: f64, b: f64 },
    /// `F_ij = A e^{-B r} / r`, `A, B > 0`
    SeeligerYukawa { a: f64, b: f64 },
    /// `F_ij = (A - B ln r) / r`, `A, B > 0`
    MucketTreder { a: f64, b: f64 },
    /// `F_ij = m ln(1/r)`
    Logarithmic,
}

impl PairPotentialKind {
    pub fn validate(&self) -> Result<()> {
        use PairPotentialKind::*;
        let ok = match self {
            Zero | Newtonian | Logarithmic => true,
            Homogeneous { alpha } => *alpha > 0.0,
            QuasiHomogeneous { alpha, beta, delta } => {
                *alpha > *beta && *beta > 0.0 && *delta > 0.0
            }
            LennardJones { a, b } | SeeligerYukawa { a, b } | MucketTreder { a, b } => {
                *a > 0.0 && *b > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPotential(format!("{self:?}")))
        }
    }

    /// Whether the kind diverges (or is non-smooth) as `r -> 0`.
    pub fn is_singular(&self) -> bool {
        !matches!(self, PairPotentialKind::Zero)
    }

    /// Raw pair value at separation `r > 0` (may be negative far out).
    pub fn value(&self, r: f64, mi_mj: f64) -> f64 {
        use PairPotentialKind::*;
        match self {
            Zero => 0.0,
            Newtonian => mi_mj / r,
            Homogeneous { alpha } => mi_mj * r.powf(-alpha),
            QuasiHomogeneous { alpha, beta, delta } => {
                mi_mj * (r.powf(-alpha) + delta * r.powf(-beta))
            }
            LennardJones { a, b } => a * r.powi(-12) - b * r.powi(-6),
            SeeligerYukawa { a, b } => a * (-b * r).exp() / r,
            MucketTreder { a, b } => (a - b * r.ln()) / r,
            Logarithmic => -mi_mj * r.ln(),
        }
    }

    /// Raw radial derivative `dF_ij/dr` at separation `r > 0`.
    pub fn derivative(&self, r: f64, mi_mj: f64) -> f64 {
        use PairPotentialKind::*;
        match self {
            Zero => 0.0,
            Newtonian => -mi_mj / (r * r),
            Homogeneous { alpha } => -alpha * mi_mj * r.powf(-alpha - 1.0),
            QuasiHomogeneous { alpha, beta, delta } => {
                mi_mj * (-alpha * r.powf(-alpha - 1.0) - delta * beta * r.powf(-beta - 1.0))
            }
            LennardJones { a, b } => -12.0 * a * r.powi(-13) + 6.0 * b * r.powi(-7),
            SeeligerYukawa { a, b } => -a * (-b * r).exp() * (b * r + 1.0) / (r * r),
            MucketTreder { a, b } => (b * r.ln() - a - b) / (r * r),
            Logarithmic => -mi_mj / r,
        }
    }

    /// Canonical far-field envelope value at separation `s`, with
    /// `total_mass = sum m_i`. Valid majorant for both the raw and the
    /// clamped pair value whenever `s >= 1`.
    fn canonical_envelope(&self, s: f64, total_mass: f64) -> f64 {
        use PairPotentialKind::*;
        let m2 = total_mass * total_mass;
        match self {
            Zero | Logarithmic => 0.0,
            Newtonian => m2 / s,
            Homogeneous { alpha } => m2 * s.powf(-alpha),
            QuasiHomogeneous { alpha, beta, delta } => {
                m2 * (s.powf(-alpha) + delta * s.powf(-beta))
            }
            LennardJones { a, .. } => a * s.powi(-6),
            SeeligerYukawa { a, b } => a * (-b * s).exp() / s,
            MucketTreder { a, .. } => a / s,
        }
    }
}

/// Kind assignment: one law for every pair, or an explicit per-pair table
/// (missing pairs interact via `Zero`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairAssignment {
    Uniform(PairPotentialKind),
    PerPair(Vec<(usize, usize, PairPotentialKind)>),
}

impl PairAssignment {
    fn kind_for(&self, i: usize, j: usize) -> PairPotentialKind {
        match self {
            PairAssignment::Uniform(k) => k.clone(),
            PairAssignment::PerPair(t) => t
                .iter()
                .find(|(a, b, _)| (*a == i && *b == j) || (*a == j && *b == i))
                .map(|(_, _, k)| k.clone())
                .unwrap_or(PairPotentialKind::Zero),
        }
    }
}

/// Far-field envelope choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// Sum of the canonical per-kind envelopes.
    Auto,
    /// Identically zero (only valid when every pair term vanishes far out).
    Zero,
    /// Piecewise-linear `[(s, f(s)), ...]`; constant to the left of the table
    /// and decaying like `1/s` to the right so the dyadic series stays
    /// summable.
    Table(Vec<(f64, f64)>),
}

/// The potential `F = sum F_ij` with its envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(rename = "kind")]
    pub kinds: PairAssignment,
    #[serde(default = "default_envelope")]
    pub envelope: Envelope,
    /// Threshold of the near region: the envelope bound is asserted for
    /// separations at or beyond this width.
    #[serde(default = "default_near_width")]
    pub near_region_width: f64,
}

fn default_envelope() -> Envelope {
    Envelope::Auto
}

fn default_near_width() -> f64 {
    2.0
}

impl PotentialSpec {
    pub fn uniform(kind: PairPotentialKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kinds: PairAssignment::Uniform(kind),
            envelope: Envelope::Auto,
            near_region_width: 2.0,
        })
    }

    pub fn zero() -> Self {
        Self::uniform(PairPotentialKind::Zero).unwrap()
    }

    pub fn newtonian() -> Self {
        Self::uniform(PairPotentialKind::Newtonian).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kinds {
            PairAssignment::Uniform(k) => k.validate()?,
            PairAssignment::PerPair(t) => {
                for (_, _, k) in t {
                    k.validate()?;
                }
            }
        }
        if let Envelope::Table(table) = &self.envelope {
            if table.is_empty() {
                return Err(Error::InvalidPotential("empty envelope table".into()));
            }
            if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::InvalidPotential(
                    "envelope table abscissae must increase".into(),
                ));
            }
            if table.iter().any(|(s, f)| *s <= 0.0 || *f < 0.0) {
                return Err(Error::InvalidPotential("envelope table values out of range".into()));
            }
        }
        if !(self.near_region_width > 0.0) {
            return Err(Error::InvalidPotential("near_region_width must be positive".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match &self.kinds {
            PairAssignment::Uniform(k) => *k == PairPotentialKind::Zero,
            PairAssignment::PerPair(t) => t.iter().all(|(_, _, k)| *k == PairPotentialKind::Zero),
        }
    }

    /// Whether any pair law diverges at collisions (drives collision guards).
    pub fn has_singularity(&self) -> bool {
        match &self.kinds {
            PairAssignment::Uniform(k) => k.is_singular(),
            PairAssignment::PerPair(t) => t.iter().any(|(_, _, k)| k.is_singular()),
        }
    }

    /// Action-facing value: sum of pair terms clamped at zero.
    pub fn evaluate(&self, x: &Configuration) -> Result<f64> {
        self.eval_slice(x.dim(), x.masses(), x.coords())
    }

    /// Unclamped value, kept for the ODE oracle and energy bookkeeping.
    pub fn evaluate_raw(&self, x: &Configuration) -> Result<f64> {
        self.eval_raw_slice(x.dim(), x.masses(), x.coords())
    }

    /// Gradient of the clamped sum under the mass scalar product
    /// (`grad_{x_i} = (1/m_i) d/dx_i`). Pairs sitting in their clamped-off
    /// region contribute nothing.
    pub fn gradient(&self, x: &Configuration) -> Result<Configuration> {
        let mut g = x.zero_like();
        self.grad_slice(x.dim(), x.masses(), x.coords(), true, g.coords_mut())?;
        Ok(g)
    }

    /// Gradient of the unclamped sum under the mass scalar product.
    pub fn gradient_raw(&self, x: &Configuration) -> Result<Configuration> {
        let mut g = x.zero_like();
        self.grad_slice(x.dim(), x.masses(), x.coords(), false, g.coords_mut())?;
        Ok(g)
    }

    /// Clamped value over a flat body-major coordinate slice.
    pub fn eval_slice(&self, d: usize, masses: &[f64], xs: &[f64]) -> Result<f64> {
        self.fold_pairs(d, masses, xs, 0.0, |acc, _, _, kind, r, mm| {
            acc + kind.value(r, mm).max(0.0)
        })
    }

    /// Unclamped value over a flat coordinate slice.
    pub fn eval_raw_slice(&self, d: usize, masses: &[f64], xs: &[f64]) -> Result<f64> {
        self.fold_pairs(d, masses, xs, 0.0, |acc, _, _, kind, r, mm| acc + kind.value(r, mm))
    }

    /// Mass-scalar-product gradient over a flat coordinate slice, written
    /// into `out` (overwritten, same length as `xs`).
    pub fn grad_slice(
        &self,
        d: usize,
        masses: &[f64],
        xs: &[f64],
        clamped: bool,
        out: &mut [f64],
    ) -> Result<()> {
        debug_assert_eq!(out.len(), xs.len());
        out.fill(0.0);
        let n = masses.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let kind = self.kinds.kind_for(i, j);
                if kind == PairPotentialKind::Zero {
                    continue;
                }
                let r = slice_pair_distance(d, xs, i, j);
                if r < NEAR_COLLISION_CUTOFF {
                    return Err(Error::SingularEvaluation { i, j, separation: r });
                }
                let mm = masses[i] * masses[j];
                if clamped && kind.value(r, mm) <= 0.0 {
                    continue;
                }
                let slope = kind.derivative(r, mm) / r;
                for c in 0..d {
                    let diff = xs[i * d + c] - xs[j * d + c];
                    out[i * d + c] += slope * diff / masses[i];
                    out[j * d + c] -= slope * diff / masses[j];
                }
            }
        }
        Ok(())
    }

    fn fold_pairs(
        &self,
        d: usize,
        masses: &[f64],
        xs: &[f64],
        init: f64,
        f: impl Fn(f64, usize, usize, &PairPotentialKind, f64, f64) -> f64,
    ) -> Result<f64> {
        let n = masses.len();
        let mut acc = init;
        for i in 0..n {
            for j in (i + 1)..n {
                let kind = self.kinds.kind_for(i, j);
                if kind == PairPotentialKind::Zero {
                    continue;
                }
                let r = slice_pair_distance(d, xs, i, j);
                if r < NEAR_COLLISION_CUTOFF {
                    return Err(Error::SingularEvaluation { i, j, separation: r });
                }
                acc = f(acc, i, j, &kind, r, masses[i] * masses[j]);
            }
        }
        Ok(acc)
    }

    /// Envelope value at separation `s > 0` for a configuration shape given
    /// by `masses`.
    pub fn envelope_value(&self, s: f64, masses: &[f64]) -> f64 {
        match &self.envelope {
            Envelope::Zero => 0.0,
            Envelope::Auto => {
                let total: f64 = masses.iter().sum();
                match &self.kinds {
                    PairAssignment::Uniform(k) => k.canonical_envelope(s, total),
                    PairAssignment::PerPair(t) => {
                        t.iter().map(|(_, _, k)| k.canonical_envelope(s, total)).sum()
                    }
                }
            }
            Envelope::Table(table) => {
                let first = table[0];
                let last = table[table.len() - 1];
                if s <= first.0 {
                    return first.1;
                }
                if s >= last.0 {
                    return last.1 * last.0 / s;
                }
                let k = table.partition_point(|(si, _)| *si <= s) - 1;
                let (s0, f0) = table[k];
                let (s1, f1) = table[k + 1];
                f0 + (f1 - f0) * (s - s0) / (s1 - s0)
            }
        }
    }

    /// `int_a^b f(s) ds` of the envelope, by adaptive quadrature.
    pub fn envelope_integral(&self, a: f64, b: f64, masses: &[f64]) -> Result<f64> {
        if matches!(self.envelope, Envelope::Zero) {
            return Ok(0.0);
        }
        if matches!((&self.envelope, self.is_zero()), (Envelope::Auto, true)) {
            return Ok(0.0);
        }
        adaptive_simpson(|s| self.envelope_value(s, masses), a, b, ENVELOPE_QUAD_TOL)
    }

    /// `k`-th dyadic envelope term `(2^{-k} int_{2^k}^{2^{k+1}} f)^{1/2}`.
    pub fn envelope_dyadic_term(&self, k: u32, masses: &[f64]) -> Result<f64> {
        let lo = (2.0f64).powi(k as i32);
        let integral = self.envelope_integral(lo, 2.0 * lo, masses)?;
        Ok((integral / lo).max(0.0).sqrt())
    }

    /// Partial sum `sum_{k=1}^{K}` of the dyadic envelope series, the
    /// summability probe of the growth condition. Nondecreasing in `K`.
    pub fn envelope_series_partial(&self, k_max: u32, masses: &[f64]) -> Result<f64> {
        let mut sum = 0.0;
        for k in 1..=k_max {
            sum += self.envelope_dyadic_term(k, masses)?;
        }
        Ok(sum)
    }
}
