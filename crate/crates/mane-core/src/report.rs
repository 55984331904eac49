//! Bound-check records and serializable report types.

use serde::{Deserialize, Serialize};

use crate::solver::GeodesicResult;

/// One verified inequality, normalized to the form `lhs <= rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Check family, named by what it asserts (e.g. "cone-length").
    pub lemma: String,
    /// The inequality in readable form.
    pub eq: String,
    /// Run index the check belongs to, when applicable.
    pub n: Option<u32>,
    /// Where along the run the check was sampled.
    #[serde(rename = "where")]
    pub location: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Relative slack granted for discretization error.
    pub slack: f64,
    pub pass: bool,
    /// Whether the overall verdict asserts this check (strict mode) or only
    /// reports it (exploratory mode).
    pub asserted: bool,
}

impl BoundCheck {
    /// Builds `lhs <= rhs` with relative slack and a roundoff floor.
    pub fn le(
        lemma: impl Into<String>,
        eq: impl Into<String>,
        location: impl Into<String>,
        lhs: f64,
        rhs: f64,
        slack: f64,
    ) -> Self {
        let floor = 1e-14 * lhs.abs().max(rhs.abs()).max(1.0);
        let pass = lhs <= rhs * (1.0 + slack) + floor;
        BoundCheck {
            lemma: lemma.into(),
            eq: eq.into(),
            n: None,
            location: location.into(),
            lhs,
            rhs,
            slack,
            pass,
            asserted: true,
        }
    }

    pub fn for_run(mut self, n: u32) -> Self {
        self.n = Some(n);
        self
    }

    pub fn informational(mut self) -> Self {
        self.asserted = false;
        self
    }
}

/// Wire form of a solved geodesic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicSummary {
    pub action: f64,
    pub quadrature_error: f64,
    pub el_residual: f64,
    pub energy_residual: f64,
    pub converged: bool,
    pub nodes: usize,
    pub sigma: f64,
    pub length: f64,
    pub iterations: usize,
    pub restart_disagreement: Option<f64>,
}

impl From<&GeodesicResult> for GeodesicSummary {
    fn from(r: &GeodesicResult) -> Self {
        GeodesicSummary {
            action: r.action.value,
            quadrature_error: r.action.quadrature_error,
            el_residual: r.el_residual,
            energy_residual: r.energy_residual,
            converged: r.converged,
            nodes: r.path.len(),
            sigma: r.sigma(),
            length: r.path.euclidean_length(),
            iterations: r.iterations,
            restart_disagreement: r.restart_disagreement,
        }
    }
}

/// Wire form of the Psi error budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiSummary {
    pub base_term: f64,
    pub envelope_coeff: f64,
    pub n0: u32,
    pub a_flat: f64,
    pub x_star_flat: f64,
    pub x_star_norm: f64,
    /// `(j, Psi(2^j))` pairs.
    pub psi_at: Vec<(u32, f64)>,
    /// `(j, PsiTilde(2^j))` pairs.
    pub psi_tilde_at: Vec<(u32, f64)>,
    /// Additive uncertainty carried by the truncated PsiTilde tail.
    pub tail_uncertainty: f64,
}

/// One row of the defect curve CSV.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DefectSample {
    pub t: f64,
    pub radius: f64,
    pub angle_error: f64,
    pub defect: f64,
    pub bound: f64,
}

/// Sup-distance between two consecutive runs on the shared horizon.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CauchyGap {
    pub n_low: u32,
    pub n_high: u32,
    pub gap: f64,
}

/// Per-run record of a hyperbolic sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: u32,
    pub endpoint_radius: f64,
    pub geodesic: GeodesicSummary,
    /// Last-crossing times `(j, sigma_j)` of the dyadic radii.
    pub crossings: Vec<(u32, f64)>,
    /// Discretization slack granted to this run's checks.
    pub slack: f64,
    /// Error if the solve failed outright.
    pub error: Option<String>,
}

/// Full report of a hyperbolic construction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperbolicReport {
    pub mode: String,
    pub lambda: f64,
    pub n_from: u32,
    pub n_to: u32,
    pub psi: PsiSummary,
    pub runs: Vec<RunRecord>,
    pub checks: Vec<BoundCheck>,
    pub cauchy_gaps: Vec<CauchyGap>,
    /// `gamma(T_h) / T_h` of the largest run, flattened coordinates.
    pub velocity_estimate: Option<Vec<f64>>,
    /// `|estimate - sqrt(2 lambda) a|`.
    pub velocity_defect: Option<f64>,
    /// Envelope the defect must stay under.
    pub velocity_bound: Option<f64>,
    pub velocity_horizon: Option<f64>,
    /// All asserted checks passed (informational ones never count).
    pub all_asserted_pass: bool,
    /// Unit masses: the bound constants are proved for this case only.
    pub constants_validated: bool,
}

impl HyperbolicReport {
    pub fn defect_curve_csv(samples: &[DefectSample]) -> String {
        let mut out = String::from("t,radius,angle_error,defect,bound\n");
        for s in samples {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                s.t, s.radius, s.angle_error, s.defect, s.bound
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_check_slack_and_floor() {
        assert!(BoundCheck::le("a", "x <= y", "", 1.0, 1.0, 0.0).pass);
        assert!(BoundCheck::le("a", "x <= y", "", 1.0 + 1e-15, 1.0, 0.0).pass);
        assert!(!BoundCheck::le("a", "x <= y", "", 1.1, 1.0, 0.0).pass);
        assert!(BoundCheck::le("a", "x <= y", "", 1.05, 1.0, 0.1).pass);
        // zero rhs with roundoff lhs passes
        assert!(BoundCheck::le("a", "x <= 0", "", 1e-16, 0.0, 0.0).pass);
    }
}
