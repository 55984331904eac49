//! Problem-spec JSON: one self-describing file per invocation.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;

use mane_core::solver::SolveOptions;
use mane_core::{Configuration, PotentialSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecMode {
    Strict,
    Exploratory,
}

/// Two named endpoint configurations for `geodesic`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

/// Tuning for the `verify` suites.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    /// Sampled triples for the metric axioms.
    pub metric_triples: usize,
    /// Random instances per gradient check.
    pub gradient_samples: usize,
    /// Random pairs for envelope domination.
    pub envelope_samples: usize,
    /// Refinement levels of the shooting oracle loop.
    pub shooting_levels: u32,
    /// Nodes of the first shooting level.
    pub shooting_nodes: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            metric_triples: 8,
            gradient_samples: 40,
            envelope_samples: 10_000,
            shooting_levels: 3,
            shooting_nodes: 129,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub d: usize,
    pub masses: Vec<f64>,
    pub potential: PotentialSpec,
    pub lambda: f64,
    #[serde(default)]
    pub endpoints: Option<Endpoints>,
    /// Start configuration of a hyperbolic run.
    #[serde(default)]
    pub start: Option<Vec<Vec<f64>>>,
    /// Escape direction of a hyperbolic run (normalized on load).
    #[serde(default)]
    pub direction: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_mode")]
    pub mode: SpecMode,
    #[serde(default)]
    pub n_from: Option<u32>,
    #[serde(default)]
    pub n_to: Option<u32>,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_mode() -> SpecMode {
    SpecMode::Exploratory
}

impl ProblemSpec {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("spec file {}: {e}", path.display()))?;
        let spec: ProblemSpec =
            serde_json::from_str(&text).map_err(|e| format!("spec parse: {e}"))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), String> {
        if self.d < 2 {
            return Err(format!("field d: {} (need d >= 2)", self.d));
        }
        if self.masses.len() < 2 {
            return Err(format!("field masses: {} bodies (need N >= 2)", self.masses.len()));
        }
        if self.masses.iter().any(|m| !(m > &0.0)) {
            return Err("field masses: entries must be strictly positive".into());
        }
        if !(self.lambda > 0.0) {
            return Err(format!("field lambda: {} (need lambda > 0)", self.lambda));
        }
        self.potential.validate().map_err(|e| format!("field potential: {e}"))?;
        self.solver.validate().map_err(|e| format!("field solver: {e}"))?;
        if let (Some(f), Some(t)) = (self.n_from, self.n_to) {
            if t < f {
                return Err(format!("field n_to: {t} below n_from = {f}"));
            }
        }
        Ok(())
    }

    fn config(&self, field: &str, bodies: &[Vec<f64>]) -> Result<Configuration, String> {
        Configuration::new(self.d, self.masses.clone(), bodies.to_vec())
            .map_err(|e| format!("field {field}: {e}"))
    }

    pub fn endpoint_configs(&self) -> Result<(Configuration, Configuration), String> {
        let e = self.endpoints.as_ref().ok_or("field endpoints: missing")?;
        Ok((self.config("endpoints.x", &e.x)?, self.config("endpoints.y", &e.y)?))
    }

    pub fn start_config(&self) -> Result<Configuration, String> {
        let s = self.start.as_ref().ok_or("field start: missing")?;
        self.config("start", s)
    }

    /// Direction, normalized to unit weighted norm.
    pub fn direction_config(&self) -> Result<Configuration, String> {
        let a = self.direction.as_ref().ok_or("field direction: missing")?;
        let cfg = self.config("direction", a)?;
        let cfg = cfg.normalized().map_err(|_| "field direction: zero vector".to_string())?;
        if cfg.flat_norm() <= 0.0 {
            return Err("field direction: has a collision (flat norm 0)".into());
        }
        Ok(cfg)
    }

    pub fn n_range(&self) -> Result<(u32, u32), String> {
        match (self.n_from, self.n_to) {
            (Some(f), Some(t)) => Ok((f, t)),
            (None, _) => Err("field n_from: missing".into()),
            (_, None) => Err("field n_to: missing".into()),
        }
    }
}
