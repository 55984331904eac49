//! The hyperbolic-motion construction and its quantitative verification.
//!
//! Given a start `x`, a unit non-collision direction `a` and an energy
//! `lambda`, the construction solves geodesics `gamma^(n)` from `x` to
//! `x* + 2^n a` for a range of dyadic exponents, then verifies the estimates
//! that force the sequence toward a motion with asymptotic velocity
//! `sqrt(2 lambda) a`:
//!
//! - cone-length: the Euclidean length of each run is at most `T + Psi(T)`;
//! - midpoint and ray-distance: between consecutive dyadic spheres the run
//!   stays within `O(sqrt(S Psi(S)))` of the chord direction;
//! - angle and cumulative length against `PsiTilde` at the current radius;
//! - kinetic, radius-vs-time window and hyperbolicity-defect bounds;
//! - the defect envelope `|gamma(t) - x* - sqrt(2 lambda) a t| /
//!   (sqrt(2 lambda) t) <= 32 PsiTilde(sqrt(2 lambda) t / 2)`.
//!
//! Strict mode requires `n > n0` and asserts every check within the per-run
//! discretization slack; exploratory mode runs at small radii where the
//! constants are not guaranteed, reporting the same checks informationally.
//! Runs are independent and execute in parallel; the report is assembled in
//! `n` order.

use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::parallel::map_collect;
use crate::potential::PotentialSpec;
use crate::psi::{build_psi_table, PsiTable};
use crate::report::{BoundCheck, CauchyGap, DefectSample, HyperbolicReport, RunRecord};
use crate::solver::{solve_geodesic, GeodesicResult, Grading, SolveOptions};

/// Direction-cap enforced on chord directions: `|a - b| <= a_flat / 20`.
/// (The midpoint estimate tolerates twice this; the induction uses the
/// tighter cap, which is the one asserted.)
pub const DIRECTION_CAP_DIVISOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `n_from > n0`; all checks asserted.
    Strict,
    /// `n_from >= 4`; checks reported but never asserted.
    Exploratory,
}

#[derive(Debug, Clone)]
pub struct HyperbolicConfig {
    pub start: Configuration,
    pub direction: Configuration,
    pub lambda: f64,
    pub mode: Mode,
    pub n_from: u32,
    pub n_to: u32,
    pub solve: SolveOptions,
    /// Depth of the dyadic tables in the report.
    pub psi_j_max: u32,
    /// Sample count for the ray-distance check per dyadic window.
    pub ray_samples: usize,
}

impl HyperbolicConfig {
    pub fn new(start: Configuration, direction: Configuration, lambda: f64) -> Self {
        HyperbolicConfig {
            start,
            direction,
            lambda,
            mode: Mode::Exploratory,
            n_from: 8,
            n_to: 12,
            solve: SolveOptions::default(),
            psi_j_max: 8,
            ray_samples: 32,
        }
    }
}

/// Everything the construction produced: the budget, the per-`n` geodesics
/// and the assembled report.
pub struct HyperbolicOutcome {
    pub psi: PsiTable,
    pub runs: Vec<(u32, Result<GeodesicResult>)>,
    pub report: HyperbolicReport,
    pub defect_curve: Vec<DefectSample>,
}

/// Runs the whole construction: budget, geodesic sequence, bound checks,
/// Cauchy gaps and the asymptotic-velocity estimate.
pub fn run_hyperbolic(cfg: &HyperbolicConfig, pot: &PotentialSpec) -> Result<HyperbolicOutcome> {
    validate_inputs(cfg)?;
    let solve_opts = far_field_options(cfg);
    let psi = build_psi_table(
        &cfg.start,
        &cfg.direction,
        cfg.lambda,
        pot,
        cfg.psi_j_max,
        &solve_opts,
    )?;
    match cfg.mode {
        Mode::Strict if cfg.n_from <= psi.n0() => {
            return Err(Error::InputDomain(format!(
                "strict mode needs n_from > n0 = {}, got {}",
                psi.n0(),
                cfg.n_from
            )));
        }
        Mode::Exploratory if cfg.n_from < 4 => {
            return Err(Error::InputDomain(format!(
                "exploratory mode needs n_from >= 4, got {}",
                cfg.n_from
            )));
        }
        _ => {}
    }

    let runs = build_sequence(cfg, pot, &solve_opts, &psi);
    let (report, defect_curve) = assemble_report(cfg, &psi, &runs)?;
    Ok(HyperbolicOutcome { psi, runs, report, defect_curve })
}

fn validate_inputs(cfg: &HyperbolicConfig) -> Result<()> {
    if !(cfg.lambda > 0.0) {
        return Err(Error::InputDomain(format!("lambda = {}, need lambda > 0", cfg.lambda)));
    }
    if !cfg.direction.is_unit() {
        return Err(Error::InputDomain("direction must have unit norm".into()));
    }
    if cfg.direction.flat_norm() <= 0.0 {
        return Err(Error::CollisionDirection);
    }
    if cfg.n_to < cfg.n_from {
        return Err(Error::InputDomain(format!(
            "empty n range {}..={}",
            cfg.n_from, cfg.n_to
        )));
    }
    Ok(())
}

/// Far-field runs replace uniform grading with a geometric mesh of fixed
/// first segment, so runs of different horizon share their near-end nodes.
fn far_field_options(cfg: &HyperbolicConfig) -> SolveOptions {
    let mut opts = cfg.solve;
    if matches!(opts.grading, Grading::Uniform) {
        let start_gap = 50.0 * (1.0 + cfg.start.norm()) / cfg.direction.flat_norm();
        let first = (1e-3 * (1.0 + start_gap)).max(20.0 * opts.collision_guard);
        opts.grading = Grading::GeometricFromFirst { ratio: 1.25, first };
    }
    opts
}

/// Solves the geodesics `x -> x* + 2^n a` for `n` in the configured range.
/// Failures are recorded per `n`; the sequence keeps going.
pub fn build_sequence(
    cfg: &HyperbolicConfig,
    pot: &PotentialSpec,
    opts: &SolveOptions,
    psi: &PsiTable,
) -> Vec<(u32, Result<GeodesicResult>)> {
    let ns: Vec<u32> = (cfg.n_from..=cfg.n_to).collect();
    map_collect(&ns, |&n| {
        let endpoint = psi.x_star().add_scaled(&cfg.direction, (2.0f64).powi(n as i32));
        (n, solve_geodesic(&cfg.start, &endpoint, pot, cfg.lambda, opts))
    })
}

/// Last time the run sits at radius `2^j` from the base point, for every `j`
/// in `j_lo..=j_hi`, by backward scan with linear interpolation of the
/// radius between nodes.
pub fn crossing_times(
    run: &GeodesicResult,
    x_star: &Configuration,
    j_lo: u32,
    j_hi: u32,
) -> Result<Vec<(u32, f64)>> {
    let times = run.path.times().ok_or_else(|| Error::InvalidPath("untimed run".into()))?;
    let radii: Vec<f64> =
        run.path.nodes().iter().map(|p| p.sub(x_star).norm()).collect();
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    for j in j_lo..=j_hi {
        let target = (2.0f64).powi(j as i32);
        if target > r_max * (1.0 + 1e-9) {
            return Err(Error::RadiusNotAttained(target));
        }
        // an endpoint radius a few ulps under the dyadic target still counts
        // as attained (unit directions carry one ulp of normalization error)
        let target = target.min(r_max);
        let mut found = None;
        for k in (0..radii.len() - 1).rev() {
            let (r0, r1) = (radii[k], radii[k + 1]);
            if (r0 - target) * (r1 - target) <= 0.0 && r0 != r1 {
                let w = (target - r0) / (r1 - r0);
                found = Some(times[k] + w * (times[k + 1] - times[k]));
                break;
            }
        }
        match found {
            Some(t) => out.push((j, t)),
            None => return Err(Error::RadiusNotAttained(target)),
        }
    }
    Ok(out)
}

/// Per-run prefix kinematics under the canonical parameter. Arclength and
/// the kinetic integral are exactly piecewise-linear in time (speed is
/// constant on every segment), so prefix interpolation is exact.
pub struct RunKinematics {
    times: Vec<f64>,
    arclen: Vec<f64>,
    kinetic: Vec<f64>,
}

impl RunKinematics {
    pub fn new(run: &GeodesicResult) -> Self {
        let times = run.path.times().expect("canonical runs are timed").to_vec();
        let nodes = run.path.nodes();
        let mut arclen = vec![0.0];
        let mut kinetic = vec![0.0];
        for k in 0..nodes.len() - 1 {
            let len = nodes[k + 1].sub(&nodes[k]).norm();
            let dt = times[k + 1] - times[k];
            arclen.push(arclen[k] + len);
            kinetic.push(kinetic[k] + len * len / dt);
        }
        RunKinematics { times, arclen, kinetic }
    }

    fn prefix(&self, values: &[f64], t: f64) -> f64 {
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p if p >= self.times.len() => self.times.len() - 2,
            p => p - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        values[k] + w * (values[k + 1] - values[k])
    }

    /// Discrete arclength of the run up to time `t`.
    pub fn arclen_at(&self, t: f64) -> f64 {
        self.prefix(&self.arclen, t)
    }

    /// `int_0^t |gamma'|^2`, which under the canonical parameter equals the
    /// running action.
    pub fn kinetic_at(&self, t: f64) -> f64 {
        self.prefix(&self.kinetic, t)
    }
}

/// Last time before `t_max` at which the run sits at the given radius from
/// the base point (backward scan, linear interpolation of the radius).
pub fn last_crossing_before(
    run: &GeodesicResult,
    x_star: &Configuration,
    radius: f64,
    t_max: f64,
) -> Result<f64> {
    let times = run.path.times().ok_or_else(|| Error::InvalidPath("untimed run".into()))?;
    let radii: Vec<f64> = run.path.nodes().iter().map(|p| p.sub(x_star).norm()).collect();
    for k in (0..radii.len() - 1).rev() {
        if times[k] >= t_max {
            continue;
        }
        let (r0, r1) = (radii[k], radii[k + 1]);
        if (r0 - radius) * (r1 - radius) <= 0.0 && r0 != r1 {
            let w = (radius - r0) / (r1 - r0);
            let t = times[k] + w * (times[k + 1] - times[k]);
            if t < t_max {
                return Ok(t);
            }
            // crossing beyond the window sits in this segment; keep scanning
        }
    }
    Err(Error::RadiusNotAttained(radius))
}

/// Midpoint and ray-distance checks for a sphere hit `gamma(tau) = x* + S b`:
/// at the half-radius time the run must sit within `2 sqrt(S Psi(S))` of
/// `x* + S b / 2`, and within `4 sqrt(S Psi(S))` of the ray `x* + R+ b` from
/// there on. The direction cap `|a - b| <= a_flat / 20` is recorded first and
/// failing it skips the dependent checks.
#[allow(clippy::too_many_arguments)]
pub fn check_midpoint_bound(
    run: &GeodesicResult,
    psi: &PsiTable,
    a: &Configuration,
    b: &Configuration,
    s_radius: f64,
    tau: f64,
    ray_samples: usize,
    slack: f64,
) -> Result<Vec<BoundCheck>> {
    let x_star = psi.x_star();
    let mut checks = Vec::new();
    let cap = BoundCheck::le(
        "direction-cap",
        "|a - b| <= a_flat / 20",
        format!("S = {s_radius:.3e}"),
        b.sub(a).norm(),
        a.flat_norm() / DIRECTION_CAP_DIVISOR,
        1e-12,
    );
    let cap_ok = cap.pass;
    checks.push(cap);
    if !cap_ok {
        return Ok(checks);
    }
    let tau_half = last_crossing_before(run, x_star, 0.5 * s_radius, tau)?;
    let spsi = (s_radius * psi.psi(s_radius)?).sqrt();
    let midpoint_target = x_star.add_scaled(b, 0.5 * s_radius);
    let gamma_half = run.path.sample(tau_half)?;
    checks.push(BoundCheck::le(
        "midpoint",
        "|gamma(tau_half) - (x* + S b / 2)| <= 2 sqrt(S Psi(S))",
        format!("S = {s_radius:.3e}, tau_half = {tau_half:.6e}"),
        gamma_half.sub(&midpoint_target).norm(),
        2.0 * spsi,
        slack,
    ));
    let ray = crate::config::Ray::new(x_star.clone(), b.normalized()?)?;
    let mut worst = 0.0f64;
    for s in 0..ray_samples {
        let t = tau_half + (tau - tau_half) * (s as f64 + 0.5) / ray_samples as f64;
        worst = worst.max(crate::config::dist_to_ray(&run.path.sample(t)?, &ray));
    }
    checks.push(BoundCheck::le(
        "ray-distance",
        "d(gamma(t), x* + R+ b) <= 4 sqrt(S Psi(S))",
        format!("S = {s_radius:.3e}, {ray_samples} samples"),
        worst,
        4.0 * spsi,
        slack,
    ));
    Ok(checks)
}

/// Angle, cumulative-arclength and separation checks at time `t`:
/// the chord direction stays within `16 PsiTilde(r)` of `a`, the discrete
/// arclength up to `t` is at most `r (1 + PsiTilde(r)^2)`, and the flat norm
/// never falls below the base point's.
pub fn check_angle_length_bounds(
    run: &GeodesicResult,
    kin: &RunKinematics,
    psi: &PsiTable,
    a: &Configuration,
    t: f64,
    slack: f64,
) -> Result<Vec<BoundCheck>> {
    let x_star = psi.x_star();
    let gamma_t = run.path.sample(t)?;
    let r = gamma_t.sub(x_star).norm();
    if r < 1.0 {
        return Err(Error::InputDomain(format!("radius {r:.3e} below the dyadic range")));
    }
    let tilde = psi.psi_tilde(r);
    let here = format!("t = {t:.6e}, r = {r:.6e}");
    Ok(vec![
        BoundCheck::le(
            "angle",
            "|(gamma(t) - x*)/r - a| <= 16 PsiTilde(r)",
            here.clone(),
            gamma_t.sub(x_star).scale(1.0 / r).sub(a).norm(),
            16.0 * tilde,
            slack,
        ),
        BoundCheck::le(
            "arc-length",
            "l(gamma|[0,t]) <= r (1 + PsiTilde(r)^2)",
            here.clone(),
            kin.arclen_at(t),
            r * (1.0 + tilde * tilde),
            slack,
        ),
        BoundCheck::le(
            "separation",
            "flat(x*) <= flat(gamma(t))",
            here,
            x_star.flat_norm(),
            gamma_t.flat_norm(),
            slack,
        ),
    ])
}

/// Kinetic-integral, radius/time-window and hyperbolicity-defect checks at
/// time `t`. The defect-vs-time envelope (the `32 PsiTilde` form) is only
/// emitted once `t` clears `2^{j_lo + 1} / sqrt(2 lambda)`.
#[allow(clippy::too_many_arguments)]
pub fn check_time_bounds(
    run: &GeodesicResult,
    kin: &RunKinematics,
    psi: &PsiTable,
    a: &Configuration,
    lambda: f64,
    t: f64,
    j_lo: u32,
    slack: f64,
) -> Result<Vec<BoundCheck>> {
    let sq2l = (2.0 * lambda).sqrt();
    let x_star = psi.x_star();
    let gamma_t = run.path.sample(t)?;
    let r = gamma_t.sub(x_star).norm();
    if r < 1.0 {
        return Err(Error::InputDomain(format!("radius {r:.3e} below the dyadic range")));
    }
    let tilde = psi.psi_tilde(r);
    let here = format!("t = {t:.6e}, r = {r:.6e}");
    let kinetic = kin.kinetic_at(t);
    let ratio = r / (sq2l * t);
    let defect = gamma_t.sub(x_star).sub(&a.scale(sq2l * t)).norm() / (sq2l * t);
    let arg = (0.5 * sq2l * t).max(1.0);
    let tilde_t = psi.psi_tilde(arg);
    let mut checks = vec![
        BoundCheck::le(
            "kinetic",
            "int |gamma'|^2 <= sqrt(2 lambda) r (1 + PsiTilde(r)^2)",
            here.clone(),
            kinetic,
            sq2l * r * (1.0 + tilde * tilde),
            slack,
        ),
        BoundCheck::le(
            "kinetic",
            "int |gamma'|^2 <= 8 lambda t",
            here.clone(),
            kinetic,
            8.0 * lambda * t,
            slack,
        ),
        BoundCheck::le(
            "radius-window",
            "1/(1 + PsiTilde^2) <= r / (sqrt(2 lambda) t)",
            here.clone(),
            1.0 / (1.0 + tilde * tilde),
            ratio,
            slack,
        ),
        BoundCheck::le(
            "radius-window",
            "r / (sqrt(2 lambda) t) <= 1 + PsiTilde^2",
            here.clone(),
            ratio,
            1.0 + tilde * tilde,
            slack,
        ),
        BoundCheck::le("radius-window", "1/2 <= r / (sqrt(2 lambda) t)", here.clone(), 0.5, ratio, slack),
        BoundCheck::le("radius-window", "r / (sqrt(2 lambda) t) <= 2", here.clone(), ratio, 2.0, slack),
        BoundCheck::le(
            "defect",
            "defect^2 <= 512 PsiTilde(r)^2",
            here.clone(),
            defect * defect,
            512.0 * tilde * tilde,
            slack,
        ),
        BoundCheck::le(
            "defect",
            "defect^2 <= 512 PsiTilde(sqrt(2 lambda) t / 2)^2",
            here.clone(),
            defect * defect,
            512.0 * tilde_t * tilde_t,
            slack,
        ),
    ];
    if t >= (2.0f64).powi(j_lo as i32 + 1) / sq2l {
        checks.push(BoundCheck::le(
            "defect",
            "defect <= 32 PsiTilde(sqrt(2 lambda) t / 2)",
            here,
            defect,
            32.0 * tilde_t,
            slack,
        ));
    }
    Ok(checks)
}

fn assemble_report(
    cfg: &HyperbolicConfig,
    psi: &PsiTable,
    runs: &[(u32, Result<GeodesicResult>)],
) -> Result<(HyperbolicReport, Vec<DefectSample>)> {
    let lambda = cfg.lambda;
    let sq2l = (2.0 * lambda).sqrt();
    let x_star = psi.x_star().clone();
    let a = &cfg.direction;
    let strict = cfg.mode == Mode::Strict;
    let j_lo = match cfg.mode {
        Mode::Strict => psi.n0(),
        Mode::Exploratory => cfg.n_from.saturating_sub(1).max(1),
    };

    let mut checks: Vec<BoundCheck> = Vec::new();
    let mut records: Vec<RunRecord> = Vec::new();

    for (n, solved) in runs {
        let n = *n;
        match solved {
            Err(e) => {
                records.push(RunRecord {
                    n,
                    endpoint_radius: (2.0f64).powi(n as i32),
                    geodesic: empty_summary(),
                    crossings: Vec::new(),
                    slack: 0.0,
                    error: Some(e.to_string()),
                });
            }
            Ok(run) => {
                let slack = 10.0 * run.action.quadrature_error
                    / run.action.value.abs().max(f64::MIN_POSITIVE);
                let crossings = crossing_times(run, &x_star, j_lo.saturating_sub(1).max(1), n)?;
                run_checks(
                    &mut checks,
                    cfg,
                    psi,
                    run,
                    n,
                    &crossings,
                    slack,
                    strict,
                    j_lo,
                )?;
                records.push(RunRecord {
                    n,
                    endpoint_radius: (2.0f64).powi(n as i32),
                    geodesic: run.into(),
                    crossings,
                    slack,
                    error: None,
                });
            }
        }
    }

    // Cauchy gaps between consecutive runs, on the largest fixed horizon
    // every run shares: the earliest last-crossing time of radius 2^{j_lo+1}.
    let ok_runs: Vec<(u32, &GeodesicResult)> = runs
        .iter()
        .filter_map(|(n, r)| r.as_ref().ok().map(|g| (*n, g)))
        .collect();
    let mut horizon = f64::INFINITY;
    for (_, run) in &ok_runs {
        let cross = crossing_times(run, &x_star, j_lo + 1, j_lo + 1)?;
        horizon = horizon.min(cross[0].1);
    }
    let mut cauchy_gaps = Vec::new();
    for w in ok_runs.windows(2) {
        let (n0, r0) = w[0];
        let (n1, r1) = w[1];
        if r0.sigma() >= horizon && r1.sigma() >= horizon {
            cauchy_gaps.push(CauchyGap {
                n_low: n0,
                n_high: n1,
                gap: sup_gap(r0, r1, horizon, 65)?,
            });
        }
    }

    // Asymptotic velocity from the largest run, on the largest horizon the
    // last two runs share.
    let mut velocity_estimate = None;
    let mut velocity_defect = None;
    let mut velocity_bound = None;
    let mut velocity_horizon = None;
    if ok_runs.len() >= 2 {
        let (_, prev) = ok_runs[ok_runs.len() - 2];
        let (n_last, last) = ok_runs[ok_runs.len() - 1];
        let t_h = prev.sigma().min(last.sigma()) * (1.0 - 1e-9);
        let run_refs: Vec<&GeodesicResult> = ok_runs.iter().map(|(_, r)| *r).collect();
        let est = asymptotic_velocity(&run_refs, psi, a, lambda, t_h)?;
        let slack = 10.0 * last.action.quadrature_error / last.action.value.abs().max(1.0);
        let mut check = BoundCheck::le(
            "velocity",
            "|gamma(T)/T - sqrt(2 lambda) a| <= 32 sqrt(2 lambda) PsiTilde(sqrt(2 lambda) T / 2)",
            format!("T = {t_h:.3e}"),
            est.defect,
            est.bound,
            slack,
        )
        .for_run(n_last);
        if !strict {
            check = check.informational();
        }
        checks.push(check);
        velocity_estimate = Some(est.velocity.coords().to_vec());
        velocity_defect = Some(est.defect);
        velocity_bound = Some(est.bound);
        velocity_horizon = Some(est.t_horizon);
    }

    // Defect curve of the largest run.
    let defect_curve = match ok_runs.last() {
        Some((_, run)) => defect_samples(run, psi, a, &x_star, sq2l, j_lo)?,
        None => Vec::new(),
    };

    let all_asserted_pass = checks.iter().filter(|c| c.asserted).all(|c| c.pass)
        && records.iter().all(|r| r.error.is_none() && r.geodesic.converged);
    let report = HyperbolicReport {
        mode: match cfg.mode {
            Mode::Strict => "strict".into(),
            Mode::Exploratory => "exploratory".into(),
        },
        lambda,
        n_from: cfg.n_from,
        n_to: cfg.n_to,
        psi: psi.summary(cfg.psi_j_max)?,
        runs: records,
        checks,
        cauchy_gaps,
        velocity_estimate,
        velocity_defect,
        velocity_bound,
        velocity_horizon,
        all_asserted_pass,
        constants_validated: cfg.start.unit_masses(),
    };
    Ok((report, defect_curve))
}

#[allow(clippy::too_many_arguments)]
fn run_checks(
    checks: &mut Vec<BoundCheck>,
    cfg: &HyperbolicConfig,
    psi: &PsiTable,
    run: &GeodesicResult,
    n: u32,
    crossings: &[(u32, f64)],
    slack: f64,
    strict: bool,
    j_lo: u32,
) -> Result<()> {
    let lambda = cfg.lambda;
    let sq2l = (2.0 * lambda).sqrt();
    let a = &cfg.direction;
    let x_star = psi.x_star();
    let kin = RunKinematics::new(run);
    let t_cap = (2.0f64).powi(n as i32);
    let mut push = |cs: Vec<BoundCheck>| {
        for c in cs {
            let c = c.for_run(n);
            checks.push(if strict { c } else { c.informational() });
        }
    };

    // cone-length: l(gamma) <= action / sqrt(2 lambda) <= T + Psi(T)
    let length = run.path.euclidean_length();
    let action_len = run.action.value / sq2l;
    push(vec![
        BoundCheck::le(
            "cone-length",
            "l(gamma) <= m_hat / sqrt(2 lambda)",
            "whole run",
            length,
            action_len,
            slack,
        ),
        BoundCheck::le(
            "cone-length",
            "m_hat / sqrt(2 lambda) <= T + Psi(T)",
            "whole run",
            action_len,
            t_cap + psi.psi(t_cap)?,
            slack,
        ),
    ]);

    // midpoint and ray-distance checks at every dyadic sphere hit
    for (j, tau) in crossings.iter().filter(|(j, _)| *j >= j_lo.max(1)) {
        let s_radius = (2.0f64).powi(*j as i32);
        let gamma_tau = run.path.sample(*tau)?;
        let b = gamma_tau.sub(x_star).scale(1.0 / s_radius);
        push(check_midpoint_bound(run, psi, a, &b, s_radius, *tau, cfg.ray_samples, slack)?);
    }

    // angle, length, separation, kinetic, window and defect checks at the
    // dyadic crossing times and intermediate samples
    let Some(sigma_lo) = crossings.iter().find(|(j, _)| *j == j_lo).map(|(_, t)| *t) else {
        return Ok(());
    };
    let sigma = run.sigma();
    let mut sample_times: Vec<f64> = crossings
        .iter()
        .filter(|(j, _)| *j >= j_lo)
        .map(|(_, t)| *t)
        .collect();
    for k in 1..8 {
        sample_times.push(sigma_lo + (sigma - sigma_lo) * k as f64 / 8.0);
    }
    sample_times.sort_by(f64::total_cmp);
    sample_times.dedup();
    for &t in &sample_times {
        push(check_angle_length_bounds(run, &kin, psi, a, t, slack)?);
        push(check_time_bounds(run, &kin, psi, a, lambda, t, j_lo, slack)?);
    }

    // crossing-time windows: 2^{j-1} <= sqrt(2 lambda) sigma_j <= 2^{j+1}
    for (j, t) in crossings.iter().filter(|(j, _)| *j >= j_lo) {
        let pow = (2.0f64).powi(*j as i32);
        push(vec![
            BoundCheck::le(
                "crossing-window",
                "2^{j-1} / sqrt(2 lambda) <= sigma_j",
                format!("j = {j}"),
                0.5 * pow / sq2l,
                *t,
                slack,
            ),
            BoundCheck::le(
                "crossing-window",
                "sigma_j <= 2^{j+1} / sqrt(2 lambda)",
                format!("j = {j}"),
                *t,
                2.0 * pow / sq2l,
                slack,
            ),
        ]);
    }
    Ok(())
}

/// Asymptotic-velocity estimate over a horizon `t_h` that at least two runs
/// cover: `gamma(t_h) / t_h` from the largest run, the defect against
/// `sqrt(2 lambda) a`, the budget envelope it must respect, and the sup gap
/// between the two largest runs on `[0, t_h]` (the numerical compactness
/// indicator of the limit construction).
#[derive(Debug, Clone)]
pub struct VelocityEstimate {
    pub velocity: Configuration,
    pub defect: f64,
    pub bound: f64,
    pub cauchy_gap: f64,
    pub t_horizon: f64,
}

pub fn asymptotic_velocity(
    runs: &[&GeodesicResult],
    psi: &PsiTable,
    a: &Configuration,
    lambda: f64,
    t_h: f64,
) -> Result<VelocityEstimate> {
    let mut covering: Vec<&GeodesicResult> =
        runs.iter().copied().filter(|r| r.sigma() >= t_h).collect();
    if covering.len() < 2 {
        return Err(Error::Unmet(format!(
            "need at least two runs covering [0, {t_h:.3e}], found {}",
            covering.len()
        )));
    }
    covering.sort_by(|x, y| x.sigma().total_cmp(&y.sigma()));
    let last = covering[covering.len() - 1];
    let prev = covering[covering.len() - 2];
    let sq2l = (2.0 * lambda).sqrt();
    let gamma_t = last.path.sample(t_h)?;
    let velocity = gamma_t.scale(1.0 / t_h);
    let defect = velocity.sub(&a.scale(sq2l)).norm();
    let arg = (0.5 * sq2l * t_h).max(1.0);
    let bound = sq2l * 32.0 * psi.psi_tilde(arg) + psi.x_star().norm() / t_h;
    let cauchy_gap = sup_gap(prev, last, t_h, 65)?;
    Ok(VelocityEstimate { velocity, defect, bound, cauchy_gap, t_horizon: t_h })
}

/// Sup distance between two runs sampled on `[0, horizon]`.
pub fn sup_gap(
    r0: &GeodesicResult,
    r1: &GeodesicResult,
    horizon: f64,
    grid: usize,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..=grid {
        let t = horizon * k as f64 / grid as f64;
        worst = worst.max(r1.path.sample(t)?.sub(&r0.path.sample(t)?).norm());
    }
    Ok(worst)
}

fn defect_samples(
    run: &GeodesicResult,
    psi: &PsiTable,
    a: &Configuration,
    x_star: &Configuration,
    sq2l: f64,
    j_lo: u32,
) -> Result<Vec<DefectSample>> {
    let times = run.path.times().expect("timed");
    let t_min = (2.0f64).powi(j_lo as i32) / sq2l;
    let candidates: Vec<f64> = times.iter().copied().filter(|t| *t >= t_min).collect();
    let stride = (candidates.len() / 400).max(1);
    let mut out = Vec::new();
    for t in candidates.iter().step_by(stride) {
        let gamma_t = run.path.sample(*t)?;
        let r = gamma_t.sub(x_star).norm();
        if r < 1.0 {
            continue;
        }
        let defect = gamma_t.sub(x_star).sub(&a.scale(sq2l * *t)).norm() / (sq2l * *t);
        let angle_error = gamma_t.sub(x_star).scale(1.0 / r).sub(a).norm();
        let bound = 32.0 * psi.psi_tilde((0.5 * sq2l * *t).max(1.0));
        out.push(DefectSample { t: *t, radius: r, angle_error, defect, bound });
    }
    Ok(out)
}

fn empty_summary() -> crate::report::GeodesicSummary {
    crate::report::GeodesicSummary {
        action: f64::NAN,
        quadrature_error: f64::NAN,
        el_residual: f64::NAN,
        energy_residual: f64::NAN,
        converged: false,
        nodes: 0,
        sigma: f64::NAN,
        length: f64::NAN,
        iterations: 0,
        restart_disagreement: None,
    }
}
