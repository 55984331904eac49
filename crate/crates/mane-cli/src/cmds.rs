//! Subcommand implementations. Data goes to files, diagnostics to stderr.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use mane_core::hyperbolic::{run_hyperbolic, HyperbolicConfig, Mode};
use mane_core::metric::mane_potential;
use mane_core::ode::shoot_match;
use mane_core::path::{segment_path, uniform_fractions};
use mane_core::report::{GeodesicSummary, HyperbolicReport};
use mane_core::solver::{solve_geodesic, SolveOptions};
use mane_core::{Configuration, Error as CoreError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::spec::{ProblemSpec, SpecMode};

pub struct Ctx {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub quiet: bool,
    pub workers: usize,
}

impl Ctx {
    fn note(&self, msg: impl fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CmdError> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| CmdError::Spec(format!("out dir {}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CmdError::Spec(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }
}

#[derive(Debug)]
pub enum CmdError {
    /// Malformed spec or I/O trouble: exit 1.
    Spec(String),
    /// Solver ran out of budget: exit 2.
    NonConvergence,
    /// No collision-free path found: exit 3.
    CollisionObstruction(String),
    /// A verification suite failed: exit 4.
    VerifyFailed(usize),
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::Spec(_) => 1,
            CmdError::NonConvergence => 2,
            CmdError::CollisionObstruction(_) => 3,
            CmdError::VerifyFailed(_) => 4,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Spec(s) => write!(f, "{s}"),
            CmdError::NonConvergence => write!(f, "solver exhausted its budget before converging"),
            CmdError::CollisionObstruction(s) => write!(f, "collision obstruction: {s}"),
            CmdError::VerifyFailed(n) => write!(f, "{n} verification check(s) failed"),
        }
    }
}

fn core_err(e: CoreError) -> CmdError {
    match e {
        CoreError::CollisionObstruction(s) => CmdError::CollisionObstruction(format!("{s:.3e}")),
        other => CmdError::Spec(other.to_string()),
    }
}

pub fn cmd_geodesic(spec: &ProblemSpec, ctx: &Ctx) -> Result<(), CmdError> {
    let (x, y) = spec.endpoint_configs().map_err(CmdError::Spec)?;
    if x.sub(&y).norm() == 0.0 {
        return Err(CmdError::Spec("field endpoints: x and y coincide".into()));
    }
    ctx.note(format!(
        "solving geodesic: N={} d={} lambda={} ({} workers)",
        x.n_bodies(),
        x.dim(),
        spec.lambda,
        ctx.workers
    ));
    let (estimate, solved) =
        mane_potential(&x, &y, &spec.potential, spec.lambda, &spec.solver).map_err(core_err)?;
    let result = solved.expect("distinct endpoints produce a solve");
    if let Some(gap) = result.restart_disagreement {
        if gap > 1e-6 {
            ctx.note(format!("restarts disagree by {gap:.3e} relative: multiple local minima"));
        }
    }
    let summary: GeodesicSummary = (&result).into();
    ctx.write("result.json", &to_json(&summary)?)?;
    ctx.write("certificate.json", &to_json(&estimate)?)?;
    let mut csv = Vec::new();
    result
        .path
        .write_csv(&mut csv)
        .map_err(|e| CmdError::Spec(format!("path csv: {e}")))?;
    ctx.write("path.csv", &String::from_utf8_lossy(&csv))?;
    ctx.note(format!(
        "action {:.12e}, sigma {:.6e}, {} nodes, converged = {}",
        summary.action, summary.sigma, summary.nodes, summary.converged
    ));
    if !result.converged {
        return Err(CmdError::NonConvergence);
    }
    Ok(())
}

pub fn cmd_hyperbolic(spec: &ProblemSpec, ctx: &Ctx) -> Result<(), CmdError> {
    let start = spec.start_config().map_err(CmdError::Spec)?;
    let direction = spec.direction_config().map_err(CmdError::Spec)?;
    let (n_from, n_to) = spec.n_range().map_err(CmdError::Spec)?;
    let mut cfg = HyperbolicConfig::new(start, direction, spec.lambda);
    cfg.mode = match spec.mode {
        SpecMode::Strict => Mode::Strict,
        SpecMode::Exploratory => Mode::Exploratory,
    };
    cfg.n_from = n_from;
    cfg.n_to = n_to;
    cfg.solve = spec.solver;
    ctx.note(format!(
        "hyperbolic construction: n = {n_from}..={n_to}, mode {:?}, {} workers",
        cfg.mode, ctx.workers
    ));
    let outcome = run_hyperbolic(&cfg, &spec.potential).map_err(core_err)?;
    ctx.write("report.json", &to_json(&outcome.report)?)?;
    ctx.write("defect.csv", &HyperbolicReport::defect_curve_csv(&outcome.defect_curve))?;
    let asserted = outcome.report.checks.iter().filter(|c| c.asserted).count();
    let passed = outcome.report.checks.iter().filter(|c| c.asserted && c.pass).count();
    ctx.note(format!(
        "n0 = {}, {} checks ({} asserted, {} passed), all asserted pass = {}",
        outcome.psi.n0(),
        outcome.report.checks.len(),
        asserted,
        passed,
        outcome.report.all_asserted_pass
    ));
    if !outcome.report.all_asserted_pass {
        return Err(CmdError::NonConvergence);
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyCheck {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct VerifySummary {
    seed: u64,
    checks: Vec<VerifyCheck>,
    failed: usize,
}

pub fn cmd_verify(spec: &ProblemSpec, ctx: &Ctx) -> Result<(), CmdError> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut checks: Vec<VerifyCheck> = Vec::new();
    let pot = &spec.potential;
    let lambda = spec.lambda;
    let vo = &spec.verify;
    let solver = SolveOptions { initial_nodes: 33, max_refinements: 2, ..spec.solver };

    ctx.note("verify: envelope domination");
    checks.push(envelope_domination(spec, &mut rng, vo.envelope_samples));

    ctx.note("verify: envelope series monotone");
    checks.push(envelope_series_monotone(spec));

    ctx.note("verify: potential gradient vs finite differences");
    checks.push(potential_gradient_fd(spec, &mut rng, vo.gradient_samples));

    ctx.note("verify: action gradient vs finite differences");
    checks.push(action_gradient_fd(spec, &mut rng, vo.gradient_samples / 4 + 1));

    ctx.note("verify: metric axioms");
    checks.push(metric_axioms(spec, &mut rng, vo.metric_triples, &solver));

    if pot.has_singularity() || !pot.is_zero() {
        ctx.note("verify: shooting oracle loop");
        checks.push(shooting_loop(spec, &solver, vo.shooting_nodes, vo.shooting_levels));
    }

    let failed = checks.iter().filter(|c| !c.pass).count();
    let summary = VerifySummary { seed: ctx.seed, checks, failed };
    ctx.write("verify.json", &to_json(&summary)?)?;
    for c in &summary.checks {
        ctx.note(format!("  [{}] {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail));
    }
    if failed > 0 {
        return Err(CmdError::VerifyFailed(failed));
    }
    let _ = lambda;
    Ok(())
}

/// Random collision-free configuration in a box of the given half-width.
fn random_config(
    rng: &mut ChaCha8Rng,
    d: usize,
    masses: &[f64],
    half_width: f64,
    min_sep: f64,
) -> Configuration {
    loop {
        let coords: Vec<f64> =
            (0..d * masses.len()).map(|_| rng.gen_range(-half_width..half_width)).collect();
        let cfg = Configuration::from_coords(d, masses.to_vec(), coords).unwrap();
        if cfg.flat_norm() >= min_sep {
            return cfg;
        }
    }
}

fn envelope_domination(spec: &ProblemSpec, rng: &mut ChaCha8Rng, samples: usize) -> VerifyCheck {
    let d = spec.d;
    let masses = &spec.masses;
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut violations = 0usize;
    for _ in 0..samples {
        // random pair at separation >= the near-region width
        let r = spec.potential.near_region_width + rng.gen_range(0.0..100.0f64);
        let mut bodies = vec![vec![0.0; d]; masses.len()];
        bodies[1][0] = r;
        for (i, b) in bodies.iter_mut().enumerate().skip(2) {
            b[0] = -10.0 * (i as f64) * spec.potential.near_region_width;
        }
        let cfg = Configuration::new(d, masses.clone(), bodies).unwrap();
        let pair_value = match spec.potential.evaluate(&cfg) {
            Ok(v) => v,
            Err(_) => continue,
        };
        // with only the (0,1) pair near, the sum is dominated by f(r) per pair;
        // conservative check: every pair term is at most the envelope
        let f = spec.potential.envelope_value(r, masses);
        let margin = pair_value
            - f * (masses.len() * (masses.len() - 1) / 2) as f64
            - 1e-12 * f.abs().max(1.0);
        if margin > worst {
            worst = margin;
        }
        if margin > 0.0 {
            violations += 1;
        }
    }
    VerifyCheck {
        name: "envelope-domination".into(),
        pass: violations == 0,
        detail: format!("{violations} violations over {samples} samples (worst margin {worst:.3e})"),
    }
}

fn envelope_series_monotone(spec: &ProblemSpec) -> VerifyCheck {
    let mut prev = 0.0;
    let mut pass = true;
    let mut detail = String::new();
    for k in 1..=20u32 {
        match spec.potential.envelope_series_partial(k, &spec.masses) {
            Ok(s) => {
                if s + 1e-15 < prev {
                    pass = false;
                    detail = format!("partial sum decreased at K = {k}");
                    break;
                }
                prev = s;
            }
            Err(e) => {
                pass = false;
                detail = format!("quadrature failure at K = {k}: {e}");
                break;
            }
        }
    }
    if detail.is_empty() {
        detail = format!("partial sums nondecreasing to K = 20 (S_20 = {prev:.6e})");
    }
    VerifyCheck { name: "envelope-series".into(), pass, detail }
}

fn potential_gradient_fd(spec: &ProblemSpec, rng: &mut ChaCha8Rng, samples: usize) -> VerifyCheck {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = random_config(rng, spec.d, &spec.masses, 5.0, 0.6);
        let g = match spec.potential.gradient(&x) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let h = 1e-6 * (1.0 + x.norm());
        let mut fd_worst = 0.0f64;
        let scale = g.norm().max(1e-12);
        for i in 0..x.n_bodies() {
            for c in 0..spec.d {
                let mut plus = x.clone();
                plus.coords_mut()[i * spec.d + c] += h;
                let mut minus = x.clone();
                minus.coords_mut()[i * spec.d + c] -= h;
                let (fp, fm) = match (spec.potential.evaluate(&plus), spec.potential.evaluate(&minus)) {
                    (Ok(a), Ok(b)) => (a, b),
                    _ => continue,
                };
                // coordinate partial = mass * mass-gradient component
                let fd = (fp - fm) / (2.0 * h) / spec.masses[i];
                fd_worst = fd_worst.max((fd - g.body(i)[c]).abs());
            }
        }
        worst = worst.max(fd_worst / scale);
    }
    VerifyCheck {
        name: "potential-gradient-fd".into(),
        pass: worst < 1e-6,
        detail: format!("worst relative error {worst:.3e} over {samples} samples"),
    }
}

fn action_gradient_fd(spec: &ProblemSpec, rng: &mut ChaCha8Rng, samples: usize) -> VerifyCheck {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = random_config(rng, spec.d, &spec.masses, 4.0, 0.8);
        let d = spec.d;
        let mut y = x.clone();
        for (k, v) in y.coords_mut().iter_mut().enumerate() {
            *v += if k % d == 0 { 8.0 } else { 1.0 };
        }
        let base = segment_path(&x, &y, &uniform_fractions(6)).unwrap();
        let mut nodes = base.nodes().to_vec();
        for node in nodes.iter_mut().take(5).skip(1) {
            for v in node.coords_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
        }
        let path = match mane_core::DiscretePath::spatial(nodes) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let g = match mane_core::action::action_gradient(&path, &spec.potential, spec.lambda) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let scale = g.iter().map(|n| n.norm()).fold(0.0, f64::max).max(1e-12);
        let value = |p: &mane_core::DiscretePath| {
            mane_core::action::maupertuis_action(p, &spec.potential, spec.lambda)
                .map(|a| a.value)
        };
        let h = 1e-6 * (1.0 + x.norm());
        for k in 1..path.len() - 1 {
            for i in 0..x.n_bodies() {
                for c in 0..spec.d {
                    let mut plus = path.nodes().to_vec();
                    plus[k].coords_mut()[i * spec.d + c] += h;
                    let mut minus = path.nodes().to_vec();
                    minus[k].coords_mut()[i * spec.d + c] -= h;
                    let (fp, fm) = match (
                        value(&mane_core::DiscretePath::spatial(plus).unwrap()),
                        value(&mane_core::DiscretePath::spatial(minus).unwrap()),
                    ) {
                        (Ok(a), Ok(b)) => (a, b),
                        _ => continue,
                    };
                    let fd = (fp - fm) / (2.0 * h) / spec.masses[i];
                    worst = worst.max((fd - g[k].body(i)[c]).abs() / scale);
                }
            }
        }
    }
    VerifyCheck {
        name: "action-gradient-fd".into(),
        pass: worst < 1e-6,
        detail: format!("worst relative error {worst:.3e} over {samples} paths"),
    }
}

fn metric_axioms(
    spec: &ProblemSpec,
    rng: &mut ChaCha8Rng,
    triples: usize,
    solver: &SolveOptions,
) -> VerifyCheck {
    let lambda = spec.lambda;
    let mut fails = Vec::new();
    for trial in 0..triples {
        let xs: Vec<Configuration> =
            (0..3).map(|_| random_config(rng, spec.d, &spec.masses, 4.0, 1.0)).collect();
        let est = |a: &Configuration, b: &Configuration| {
            mane_potential(a, b, &spec.potential, lambda, solver)
                .map(|(e, _)| (e.upper, e.quadrature_error))
        };
        let pairs = [(0, 1), (1, 2), (0, 2)];
        let mut vals = Vec::new();
        let mut ok = true;
        for (i, j) in pairs {
            match est(&xs[i], &xs[j]) {
                Ok(v) => vals.push(v),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let tol: f64 = vals.iter().map(|v| v.1).sum::<f64>()
            + 1e-8 * vals.iter().map(|v| v.0).fold(0.0, f64::max);
        // lower bound
        for ((i, j), (v, qe)) in pairs.iter().zip(&vals) {
            let lower = (2.0 * lambda).sqrt() * xs[*i].sub(&xs[*j]).norm();
            if *v < lower - qe - 1e-9 * lower {
                fails.push(format!("trial {trial}: lower bound violated"));
            }
        }
        // symmetry on the first pair
        if let Ok((back, qe_back)) = est(&xs[1], &xs[0]) {
            let gap = (vals[0].0 - back).abs();
            if gap > 2.0 * (vals[0].1 + qe_back) + 1e-7 * vals[0].0 {
                fails.push(format!("trial {trial}: symmetry gap {gap:.3e}"));
            }
        }
        // triangle: m(x,z) <= m(x,y) + m(y,z)
        if vals[2].0 > vals[0].0 + vals[1].0 + 3.0 * tol {
            fails.push(format!("trial {trial}: triangle violated"));
        }
    }
    VerifyCheck {
        name: "metric-axioms".into(),
        pass: fails.is_empty(),
        detail: if fails.is_empty() {
            format!("{triples} triples pass")
        } else {
            fails.join("; ")
        },
    }
}

fn shooting_loop(
    spec: &ProblemSpec,
    solver: &SolveOptions,
    nodes: usize,
    levels: u32,
) -> VerifyCheck {
    // fixed well-separated endpoint pair scaled to the first two bodies
    let d = spec.d;
    let masses = &spec.masses;
    let mut bx = vec![vec![0.0; d]; masses.len()];
    let mut by = vec![vec![0.0; d]; masses.len()];
    for i in 0..masses.len() {
        bx[i][0] = 3.0 * i as f64 - 1.0;
        by[i][0] = 3.0 * i as f64 - 1.0 + 4.0;
        by[i][1] = 2.0 * if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    let x = Configuration::new(d, masses.clone(), bx).unwrap();
    let y = Configuration::new(d, masses.clone(), by).unwrap();
    let mut mismatches = Vec::new();
    for level in 0..levels {
        // refinement cascade down to nodes * 2^level
        let opts = SolveOptions { initial_nodes: nodes, max_refinements: level, ..*solver };
        let solved = match solve_geodesic(&x, &y, &spec.potential, spec.lambda, &opts) {
            Ok(s) => s,
            Err(e) => {
                return VerifyCheck {
                    name: "shooting-oracle".into(),
                    pass: false,
                    detail: format!("solve failed at level {level}: {e}"),
                }
            }
        };
        match shoot_match(&solved, &spec.potential, 1e-10) {
            Ok(r) => {
                // energy first integral along the shot trajectory
                if r.energy_drift > 1e-9 {
                    return VerifyCheck {
                        name: "shooting-oracle".into(),
                        pass: false,
                        detail: format!("energy drift {:.3e} at level {level}", r.energy_drift),
                    };
                }
                mismatches.push(r.mismatch)
            }
            Err(e) => {
                return VerifyCheck {
                    name: "shooting-oracle".into(),
                    pass: false,
                    detail: format!("shooting failed at level {level}: {e}"),
                }
            }
        }
    }
    // decreasing within 10% noise
    let decreasing = mismatches.windows(2).all(|w| w[1] <= w[0] * 1.1);
    VerifyCheck {
        name: "shooting-oracle".into(),
        pass: decreasing,
        detail: format!("mismatches {mismatches:?}"),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CmdError> {
    serde_json::to_string_pretty(value).map_err(|e| CmdError::Spec(format!("serialize: {e}")))
}
