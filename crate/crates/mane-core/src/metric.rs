//! Mane-potential estimation with analytic certificates.
//!
//! The solver only ever produces upper estimates of the true infimum, so a
//! [`ManeEstimate`] reports one-sided information: the computed upper value,
//! the universal lower bound `sqrt(2 lambda) |x - y|`, and, when the straight
//! segment is collision-free, the segment upper certificate. The far-field
//! certificate bounds the Euclidean length of geodesics into the collision
//! free cone around a base point.

use serde::{Deserialize, Serialize};

use crate::config::{base_offset, Configuration};
use crate::error::{Error, Result};
use crate::potential::{PotentialSpec, NEAR_COLLISION_CUTOFF};
use crate::quad::adaptive_simpson;
use crate::solver::{solve_geodesic, GeodesicResult, SolveOptions};

/// Relative tolerance for segment potential integrals.
const SEGMENT_QUAD_TOL: f64 = 1e-10;

/// One-sided Mane potential estimate with certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManeEstimate {
    /// Best action among restarts; an upper estimate of `m_lambda(x, y)`.
    pub upper: f64,
    /// `sqrt(2 lambda) |x - y|`; no admissible path does better.
    pub analytic_lower: f64,
    /// Segment certificate, present when `[x, y]` stays collision-free.
    pub segment_bound: Option<f64>,
    /// Quadrature error carried by `upper`.
    pub quadrature_error: f64,
    /// `analytic_lower <= upper` within tolerance.
    pub lower_satisfied: bool,
    /// `upper <= segment_bound` within tolerance, when the bound applies.
    pub segment_satisfied: Option<bool>,
    /// Conjunction of the per-bound verdicts.
    pub certified: bool,
}

/// Mane potential estimate between two configurations. `x = y` returns zero
/// without solving; otherwise the geodesic solver provides the upper value.
pub fn mane_potential(
    x: &Configuration,
    y: &Configuration,
    pot: &PotentialSpec,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<(ManeEstimate, Option<GeodesicResult>)> {
    if x.sub(y).norm() == 0.0 {
        let est = ManeEstimate {
            upper: 0.0,
            analytic_lower: 0.0,
            segment_bound: Some(0.0),
            quadrature_error: 0.0,
            lower_satisfied: true,
            segment_satisfied: Some(true),
            certified: true,
        };
        return Ok((est, None));
    }
    let solved = solve_geodesic(x, y, pot, lambda, opts)?;
    let est = certify(x, y, pot, lambda, &solved)?;
    Ok((est, Some(solved)))
}

/// Builds the certificate record for an already solved geodesic.
pub fn certify(
    x: &Configuration,
    y: &Configuration,
    pot: &PotentialSpec,
    lambda: f64,
    solved: &GeodesicResult,
) -> Result<ManeEstimate> {
    let lower = (2.0 * lambda).sqrt() * y.sub(x).norm();
    let seg = match segment_upper_bound(x, y, pot, lambda) {
        Ok(b) => Some(b),
        Err(Error::InputDomain(_)) => None,
        Err(e) => return Err(e),
    };
    let tol = solved.action.quadrature_error + 1e-12 * solved.action.value.abs();
    let lower_satisfied = solved.action.value >= lower - tol;
    let segment_satisfied = seg.map(|b| solved.action.value <= b + tol);
    Ok(ManeEstimate {
        upper: solved.action.value,
        analytic_lower: lower,
        segment_bound: seg,
        quadrature_error: solved.action.quadrature_error,
        lower_satisfied,
        segment_satisfied,
        certified: lower_satisfied && segment_satisfied.unwrap_or(true),
    })
}

/// Exact minimum pair separation along the straight segment `[x, y]`
/// (each pair distance is a quadratic in the segment parameter).
pub fn segment_min_separation(x: &Configuration, y: &Configuration) -> f64 {
    let d = x.dim();
    let n = x.n_bodies();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut q2 = 0.0; // |q|^2 at s = 0
            let mut e2 = 0.0; // |e|^2 of the relative velocity
            let mut qe = 0.0;
            for c in 0..d {
                let q = x.body(i)[c] - x.body(j)[c];
                let w = (y.body(i)[c] - y.body(j)[c]) - q;
                q2 += q * q;
                e2 += w * w;
                qe += q * w;
            }
            let r2_at = |s: f64| q2 + 2.0 * s * qe + s * s * e2;
            let s_star = if e2 > 0.0 { (-qe / e2).clamp(0.0, 1.0) } else { 0.0 };
            best = best.min(r2_at(s_star).max(0.0).sqrt());
        }
    }
    best
}

/// Segment upper certificate, in action units:
/// `sqrt(2 lambda) |y - x| + (1/sqrt(2 lambda)) int_0^{|y-x|} F(segment)`.
/// Fails with an input-domain error when the segment is singular.
pub fn segment_upper_bound(
    x: &Configuration,
    y: &Configuration,
    pot: &PotentialSpec,
    lambda: f64,
) -> Result<f64> {
    let gap = y.sub(x).norm();
    if gap == 0.0 {
        return Ok(0.0);
    }
    if pot.has_singularity() && segment_min_separation(x, y) < NEAR_COLLISION_CUTOFF {
        return Err(Error::InputDomain(
            "segment bound unavailable: straight segment hits a collision".into(),
        ));
    }
    let unit = y.sub(x).scale(1.0 / gap);
    let integral = adaptive_simpson(
        |s| {
            let z = x.add_scaled(&unit, s);
            pot.evaluate(&z).unwrap_or(f64::INFINITY)
        },
        0.0,
        gap,
        SEGMENT_QUAD_TOL,
    )?;
    Ok((2.0 * lambda).sqrt() * gap + integral / (2.0 * lambda).sqrt())
}

/// Direct quadrature of `int_0^T F(z + s b) ds`.
pub fn segment_potential_integral(
    z: &Configuration,
    b: &Configuration,
    t_end: f64,
    pot: &PotentialSpec,
) -> Result<f64> {
    adaptive_simpson(
        |s| {
            let p = z.add_scaled(b, s);
            pot.evaluate(&p).unwrap_or(f64::INFINITY)
        },
        0.0,
        t_end,
        SEGMENT_QUAD_TOL,
    )
}

/// Cone envelope bound on `int_0^T F(z + s b) ds` for `z` deep in the cone of
/// a direction `a`: `N^2 (2 / a_flat) int_{z_flat}^{2T + 2|z|} f`.
pub fn cone_integral_bound(
    z: &Configuration,
    a_flat: f64,
    t_end: f64,
    pot: &PotentialSpec,
) -> Result<f64> {
    let n = z.n_bodies() as f64;
    let env = pot.envelope_integral(z.flat_norm(), 2.0 * t_end + 2.0 * z.norm(), z.masses())?;
    Ok(n * n * 2.0 / a_flat * env)
}

/// Far-field certificate and its ingredients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FarFieldBound {
    /// Bound on the Euclidean length of any geodesic from `x` to
    /// `x + s a + T b`, in length units: `T + base + envelope`.
    pub length_bound: f64,
    /// `(1/sqrt(2 lambda)) m_hat(x, x + s a)`.
    pub base_term: f64,
    /// `(1/lambda) N^2 (1/a_flat) int f` over `[(x+sa)_flat, 2T + 2|x+sa|]`.
    pub envelope_term: f64,
    pub t_horizon: f64,
}

/// Length bound for geodesics into the far cone: `x` to `x + s a + T b` with
/// unit `a`, `b`, `|a - b| <= a_flat / 20` and `s >= 50 (1 + |x|) / a_flat`.
/// The true Mane term is replaced by its computed upper estimate, which only
/// weakens the bound.
#[allow(clippy::too_many_arguments)]
pub fn far_field_upper_bound(
    x: &Configuration,
    a: &Configuration,
    s: f64,
    b: &Configuration,
    t_cap: f64,
    pot: &PotentialSpec,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<FarFieldBound> {
    if !a.is_unit() || !b.is_unit() {
        return Err(Error::InputDomain("a and b must have unit norm".into()));
    }
    let a_flat = a.flat_norm();
    if a_flat <= 0.0 {
        return Err(Error::CollisionDirection);
    }
    if b.sub(a).norm() > a_flat / 20.0 * (1.0 + 1e-12) {
        return Err(Error::InputDomain("|a - b| exceeds a_flat / 20".into()));
    }
    let s_min = base_offset(x, a)?;
    if s < s_min * (1.0 - 1e-12) {
        return Err(Error::InputDomain(format!("s = {s} below 50 (1 + |x|)/a_flat = {s_min}")));
    }
    if t_cap < 0.0 {
        return Err(Error::InputDomain("T must be nonnegative".into()));
    }
    let xsa = x.add_scaled(a, s);
    let (base_est, _) = mane_potential(x, &xsa, pot, lambda, opts)?;
    let base_term = base_est.upper / (2.0 * lambda).sqrt();
    let n = x.n_bodies() as f64;
    let env = pot.envelope_integral(xsa.flat_norm(), 2.0 * t_cap + 2.0 * xsa.norm(), x.masses())?;
    let envelope_term = n * n / (lambda * a_flat) * env;
    Ok(FarFieldBound {
        length_bound: t_cap + base_term + envelope_term,
        base_term,
        envelope_term,
        t_horizon: t_cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(xs: &[f64]) -> Configuration {
        Configuration::from_coords(2, vec![1.0, 1.0], xs.to_vec()).unwrap()
    }

    fn quick_opts() -> SolveOptions {
        SolveOptions { initial_nodes: 17, max_refinements: 2, ..SolveOptions::default() }
    }

    #[test]
    fn free_potential_is_scaled_distance() {
        let x = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let y = cfg(&[0.0, 5.0, 1.0, 5.0]);
        let lambda = 2.0;
        let (est, solved) = mane_potential(&x, &y, &PotentialSpec::zero(), lambda, &quick_opts()).unwrap();
        assert!(solved.is_some());
        let exact = (2.0 * lambda).sqrt() * y.sub(&x).norm();
        assert!((est.upper - exact).abs() < 1e-8 * exact);
        assert!(est.certified);
    }

    #[test]
    fn coincident_points_short_circuit() {
        let x = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let (est, solved) = mane_potential(&x, &x, &PotentialSpec::zero(), 1.0, &quick_opts()).unwrap();
        assert_eq!(est.upper, 0.0);
        assert!(solved.is_none());
    }

    #[test]
    fn segment_bound_constant_pair_distance() {
        // rigid translation at separation 4: F = 1/4 along the whole segment
        let x = cfg(&[0.0, 0.0, 4.0, 0.0]);
        let l = 6.0;
        let y = cfg(&[0.0, l, 4.0, l]);
        let lambda = 0.5;
        let b = segment_upper_bound(&x, &y, &PotentialSpec::newtonian(), lambda).unwrap();
        let gap = y.sub(&x).norm();
        let expect = (2.0 * lambda).sqrt() * gap + (gap / 4.0) / (2.0 * lambda).sqrt();
        assert!((b - expect).abs() < 1e-9, "bound {b}, closed form {expect}");
    }

    #[test]
    fn segment_bound_rejects_collision_segments() {
        let x = cfg(&[-1.0, 0.0, 1.0, 0.0]);
        let y = cfg(&[1.0, 0.0, -1.0, 0.0]); // swap: collision at the midpoint
        assert!(segment_min_separation(&x, &y) < 1e-12);
        assert!(matches!(
            segment_upper_bound(&x, &y, &PotentialSpec::newtonian(), 1.0),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn segment_min_separation_exact_quadratic() {
        // pair approaches then recedes: min at interior parameter
        let x = cfg(&[0.0, 1.0, 0.0, -1.0]);
        let y = cfg(&[4.0, -1.0, 4.0, 1.0]);
        // relative offset goes (0,2) -> (0,-2): minimum separation 0 at s = 1/2... actually
        // q = (0,2), e = (0,-4): min at s = 1/2 with r = 0
        assert!(segment_min_separation(&x, &y) < 1e-12);
        let y2 = cfg(&[4.0, 1.0, 4.0, -1.0]);
        assert!((segment_min_separation(&x, &y2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn far_field_free_case_is_triangle_inequality() {
        let x = cfg(&[0.2, -0.1, 0.0, 0.4]);
        let a = cfg(&[-0.5, 0.0, 0.5, 0.0]).normalized().unwrap();
        let s = base_offset(&x, &a).unwrap();
        let t_cap = 64.0;
        let pot = PotentialSpec::zero();
        let lambda = 0.5;
        let ff = far_field_upper_bound(&x, &a, s, &a, t_cap, &pot, lambda, &quick_opts()).unwrap();
        let xsa = x.add_scaled(&a, s);
        assert!((ff.length_bound - (t_cap + xsa.sub(&x).norm())).abs() < 1e-7);
        assert_eq!(ff.envelope_term, 0.0);
        // solved geodesic to the cone tip is the chord; its length obeys the bound
        let tip = xsa.add_scaled(&a, t_cap);
        let r = solve_geodesic(&x, &tip, &pot, lambda, &quick_opts()).unwrap();
        let len = r.path.euclidean_length();
        assert!(len <= ff.length_bound + 1e-8 * ff.length_bound);
        assert!(len >= t_cap * (1.0 - 1e-12));
    }

    #[test]
    fn newtonian_envelope_integral_closed_form() {
        // f(s) = M^2 / s integrates to a logarithm
        let pot = PotentialSpec::newtonian();
        let masses = [1.0, 1.0];
        let (lo, hi) = (50.0, 1000.0);
        let got = pot.envelope_integral(lo, hi, &masses).unwrap();
        let expect = 4.0 * (hi / lo).ln();
        assert!((got - expect).abs() < 1e-8 * expect);
    }
}
