//! Independent verification channel: integrate `x'' = grad F` and compare.
//!
//! A Dormand-Prince 5(4) pair with embedded error control integrates the
//! second-order system in first-order form. The unclamped potential drives
//! the force (the clamped form only matters inside actions). Energy
//! `|v|^2 / 2 - F(x)` is tracked per sample; for a geodesic shot from its
//! canonical parametrization it must equal the energy constant.

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::potential::PotentialSpec;
use crate::solver::GeodesicResult;

/// Integration stops when a pair gets closer than this.
pub const COLLISION_STOP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ReachedEnd,
    Collision,
}

/// One integration sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub position: Configuration,
    pub velocity: Configuration,
    /// `|v|^2 / 2 - F(x)` (unclamped `F`).
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub steps: usize,
    pub rejected: usize,
    pub tolerance: f64,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }

    /// Largest energy drift relative to the first sample.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.samples[0].energy;
        self.samples.iter().map(|s| (s.energy - e0).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let x0 = &self.samples[0].position;
        writeln!(w, "# N={} d={} columns=t,positions,velocities,energy", x0.n_bodies(), x0.dim())?;
        for s in &self.samples {
            let pos: Vec<String> = s.position.coords().iter().map(|c| format!("{c:.17e}")).collect();
            let vel: Vec<String> = s.velocity.coords().iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(w, "{:.17e},{},{},{:.17e}", s.t, pos.join(","), vel.join(","), s.energy)?;
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Rhs<'a> {
    pot: &'a PotentialSpec,
    d: usize,
    masses: &'a [f64],
    dn: usize,
    grad: Vec<f64>,
}

impl<'a> Rhs<'a> {
    /// `state = (positions, velocities)`; writes the derivative into `out`.
    fn eval(&mut self, state: &[f64], out: &mut [f64]) -> Result<()> {
        let (pos, _vel) = state.split_at(self.dn);
        self.pot.grad_slice(self.d, self.masses, pos, false, &mut self.grad)?;
        out[..self.dn].copy_from_slice(&state[self.dn..]);
        out[self.dn..].copy_from_slice(&self.grad);
        Ok(())
    }
}

/// Integrates `x'' = grad F(x)` from `(x0, v0)` to `t_end` with adaptive
/// local error control at `tol`. Stops early (without error) when a pair
/// separation falls under [`COLLISION_STOP`].
pub fn integrate(
    x0: &Configuration,
    v0: &Configuration,
    pot: &PotentialSpec,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::InputDomain(format!("t_end = {t_end}, need > 0")));
    }
    if !x0.is_collision_free() {
        return Err(Error::InputDomain("initial configuration has a collision".into()));
    }
    let d = x0.dim();
    let masses = x0.masses().to_vec();
    let dn = d * x0.n_bodies();
    let mut rhs = Rhs { pot, d, masses: &masses, dn, grad: vec![0.0; dn] };

    let mut state: Vec<f64> = Vec::with_capacity(2 * dn);
    state.extend_from_slice(x0.coords());
    state.extend_from_slice(v0.coords());

    let mut t = 0.0;
    let mut h = initial_step(t_end, tol);
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; 2 * dn]; 7];
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut samples = Vec::new();
    push_sample(&mut samples, t, &state, dn, x0, pot)?;
    let mut stop = StopReason::ReachedEnd;

    rhs.eval(&state, &mut k[0])?;
    while t < t_end {
        if steps + rejected > 10_000_000 {
            return Err(Error::StepUnderflow(t));
        }
        h = h.min(t_end - t);
        if h < 1e-14 * t_end.max(1.0) {
            // near-collision stiffness shrinks steps long before the
            // separation itself reaches zero
            if crate::potential::slice_min_separation(d, x0.n_bodies(), &state[..dn])
                < 1e3 * COLLISION_STOP
            {
                stop = StopReason::Collision;
                break;
            }
            return Err(Error::StepUnderflow(t));
        }
        // stages 2..7
        let mut failed = false;
        let mut trial = vec![0.0; 2 * dn];
        for stage in 1..7 {
            for (i, tv) in trial.iter_mut().enumerate() {
                let mut acc = state[i];
                for (j, kj) in k.iter().enumerate().take(stage) {
                    let a = if stage < 6 { A[stage - 1][j] } else { B5[j] };
                    acc += h * a * kj[i];
                }
                *tv = acc;
            }
            let dest = if stage < 6 { stage } else { 6 };
            match rhs.eval(&trial, &mut k[dest]) {
                Ok(()) => {}
                Err(Error::SingularEvaluation { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            let _ = C; // stage times are implicit for an autonomous system
        }
        if failed {
            h *= 0.25;
            rejected += 1;
            continue;
        }

        // 5th-order solution is the stage-7 trial state; error vs embedded 4th
        let mut err_norm2 = 0.0;
        for i in 0..2 * dn {
            let mut e = 0.0;
            for j in 0..7 {
                e += (B5[j] - B4[j]) * k[j][i];
            }
            e *= h;
            let scale = tol * (1.0 + state[i].abs().max(trial[i].abs()));
            err_norm2 += (e / scale).powi(2);
        }
        let err = (err_norm2 / (2 * dn) as f64).sqrt();

        if err <= 1.0 {
            t += h;
            state.copy_from_slice(&trial);
            k.swap(0, 6); // FSAL
            steps += 1;
            push_sample(&mut samples, t, &state, dn, x0, pot)?;
            if crate::potential::slice_min_separation(d, x0.n_bodies(), &state[..dn])
                < COLLISION_STOP
            {
                stop = StopReason::Collision;
                break;
            }
        } else {
            rejected += 1;
        }
        let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
        h *= factor;
    }

    Ok(Trajectory { samples, steps, rejected, tolerance: tol, stop })
}

fn initial_step(t_end: f64, tol: f64) -> f64 {
    (t_end * 1e-4).min(tol.powf(0.2)).max(1e-10)
}

fn push_sample(
    samples: &mut Vec<Sample>,
    t: f64,
    state: &[f64],
    dn: usize,
    template: &Configuration,
    pot: &PotentialSpec,
) -> Result<()> {
    let d = template.dim();
    let masses = template.masses().to_vec();
    let position = Configuration::from_coords(d, masses.clone(), state[..dn].to_vec())?;
    let velocity = Configuration::from_coords(d, masses, state[dn..].to_vec())?;
    let f = pot.evaluate_raw(&position).unwrap_or(f64::INFINITY);
    let energy = 0.5 * velocity.norm().powi(2) - f;
    samples.push(Sample { t, position, velocity, energy });
    Ok(())
}

/// Shooting report: how far the integrated flow lands from the geodesic's
/// endpoint, relative to the endpoint gap.
#[derive(Debug, Clone)]
pub struct ShootReport {
    pub mismatch: f64,
    pub initial_velocity: Configuration,
    pub integrated_endpoint: Configuration,
    pub energy_drift: f64,
}

/// Extracts the initial velocity of a converged geodesic with a 3-point
/// one-sided difference on the canonical parametrization, integrates
/// `x'' = grad F` over `[0, sigma]`, and reports the relative endpoint
/// mismatch.
pub fn shoot_match(
    geodesic: &GeodesicResult,
    pot: &PotentialSpec,
    tol: f64,
) -> Result<ShootReport> {
    if !geodesic.converged {
        return Err(Error::Unmet("shoot_match needs a converged geodesic".into()));
    }
    let path = &geodesic.path;
    let times = path.times().ok_or_else(|| Error::InvalidPath("untimed geodesic".into()))?;
    if path.len() < 3 {
        return Err(Error::InvalidPath("need at least 3 nodes to extract velocity".into()));
    }
    let v0 = one_sided_velocity(path.nodes(), times)?;
    let sigma = geodesic.sigma();
    let x0 = path.first().clone();
    let traj = integrate(&x0, &v0, pot, sigma, tol)?;
    if traj.stop == StopReason::Collision {
        return Err(Error::CollisionStop {
            t: traj.last().t,
            i: 0,
            j: 0,
            separation: traj.last().position.flat_norm(),
        });
    }
    let endpoint = traj.last().position.clone();
    let gap = path.last().sub(path.first()).norm();
    let mismatch = endpoint.sub(path.last()).norm() / gap;
    Ok(ShootReport {
        mismatch,
        initial_velocity: v0,
        integrated_endpoint: endpoint,
        energy_drift: traj.energy_drift(),
    })
}

/// 3-point one-sided first derivative at `t = 0` on a nonuniform grid.
fn one_sided_velocity(nodes: &[Configuration], times: &[f64]) -> Result<Configuration> {
    let (t1, t2) = (times[1], times[2]);
    if !(t1 > 0.0 && t2 > t1) {
        return Err(Error::InvalidPath("degenerate leading time steps".into()));
    }
    // f'(0) for f(0), f(t1), f(t2):
    //   w0 = -(t1 + t2)/(t1 t2), w1 = t2/(t1 (t2 - t1)), w2 = -t1/(t2 (t2 - t1))
    let w0 = -(t1 + t2) / (t1 * t2);
    let w1 = t2 / (t1 * (t2 - t1));
    let w2 = -t1 / (t2 * (t2 - t1));
    Ok(nodes[0].scale(w0).add(&nodes[1].scale(w1)).add(&nodes[2].scale(w2)))
}

/// Asymptotic-velocity probe of an expanding trajectory.
#[derive(Debug, Clone)]
pub enum VelocityLimit {
    Converged {
        velocity: Configuration,
        /// Sup of `|v(t) - v(t_end)|` over the last decade of time.
        indicator: f64,
    },
    Inconclusive,
}

/// Last-sample velocity with a convergence indicator. Inconclusive when the
/// trajectory stopped on a collision or the minimum separation fails to
/// expand over the last decade of time.
pub fn velocity_limit(traj: &Trajectory) -> VelocityLimit {
    if traj.stop == StopReason::Collision || traj.samples.len() < 8 {
        return VelocityLimit::Inconclusive;
    }
    let t_end = traj.last().t;
    let late: Vec<&Sample> = traj.samples.iter().filter(|s| s.t >= t_end / 10.0).collect();
    if late.len() < 2 {
        return VelocityLimit::Inconclusive;
    }
    let expanding = late
        .windows(2)
        .all(|w| w[1].position.flat_norm() >= w[0].position.flat_norm() * (1.0 - 1e-9));
    if !expanding {
        return VelocityLimit::Inconclusive;
    }
    let v_end = traj.last().velocity.clone();
    let indicator =
        late.iter().map(|s| s.velocity.sub(&v_end).norm()).fold(0.0, f64::max);
    VelocityLimit::Converged { velocity: v_end, indicator }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(xs: &[f64]) -> Configuration {
        Configuration::from_coords(2, vec![1.0, 1.0], xs.to_vec()).unwrap()
    }

    #[test]
    fn free_motion_is_exact() {
        let x0 = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let v0 = cfg(&[1.0, 2.0, -0.5, 0.25]);
        let traj = integrate(&x0, &v0, &PotentialSpec::zero(), 10.0, 1e-10).unwrap();
        let expect = x0.add_scaled(&v0, 10.0);
        assert!(traj.last().position.sub(&expect).norm() < 1e-9);
        assert!(traj.last().velocity.sub(&v0).norm() < 1e-12);
    }

    #[test]
    fn hyperbolic_two_body_conserves_energy() {
        // relative orbit with positive energy
        let x0 = cfg(&[-1.0, 0.0, 1.0, 0.0]);
        let v0 = cfg(&[-0.9, 0.1, 0.9, -0.1]);
        let pot = PotentialSpec::newtonian();
        let e0 = 0.5 * v0.norm().powi(2) - pot.evaluate_raw(&x0).unwrap();
        assert!(e0 > 0.0);
        let traj = integrate(&x0, &v0, &pot, 1e3, 1e-10).unwrap();
        assert_eq!(traj.stop, StopReason::ReachedEnd);
        assert!(traj.energy_drift() < 1e-9, "drift {}", traj.energy_drift());
    }

    #[test]
    fn elliptic_two_body_returns_after_one_period() {
        // relative coordinates: u'' = -2 u / |u|^3 (mu = m1 + m2 = 2)
        let mu = 2.0f64;
        let u0 = [1.0, 0.0];
        let du0 = [0.0, 1.2];
        let eps = 0.5 * (du0[0] * du0[0] + du0[1] * du0[1]) - mu / 1.0;
        assert!(eps < 0.0);
        let a: f64 = -mu / (2.0 * eps);
        let period = 2.0 * std::f64::consts::PI * (a.powi(3) / mu).sqrt();

        let x0 = cfg(&[u0[0] / 2.0, u0[1] / 2.0, -u0[0] / 2.0, -u0[1] / 2.0]);
        let v0 = cfg(&[du0[0] / 2.0, du0[1] / 2.0, -du0[0] / 2.0, -du0[1] / 2.0]);
        let traj = integrate(&x0, &v0, &PotentialSpec::newtonian(), period, 1e-10).unwrap();
        let err_x = traj.last().position.sub(&x0).norm();
        let err_v = traj.last().velocity.sub(&v0).norm();
        assert!(err_x < 1e-6 && err_v < 1e-6, "period return errors {err_x}, {err_v}");
    }

    #[test]
    fn velocity_limit_free_and_bounded() {
        let x0 = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let v0 = cfg(&[1.0, 0.0, 1.5, 0.0]);
        let traj = integrate(&x0, &v0, &PotentialSpec::zero(), 50.0, 1e-10).unwrap();
        match velocity_limit(&traj) {
            VelocityLimit::Converged { velocity, indicator } => {
                assert!(velocity.sub(&v0).norm() < 1e-10);
                assert!(indicator < 1e-10);
            }
            VelocityLimit::Inconclusive => panic!("free motion must converge"),
        }

        // bounded elliptic pair: inconclusive
        let xe = cfg(&[0.5, 0.0, -0.5, 0.0]);
        let ve = cfg(&[0.0, 0.6, 0.0, -0.6]);
        let te = integrate(&xe, &ve, &PotentialSpec::newtonian(), 40.0, 1e-9).unwrap();
        assert!(matches!(velocity_limit(&te), VelocityLimit::Inconclusive));
    }

    #[test]
    fn trajectory_csv_has_all_columns() {
        let x0 = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let v0 = cfg(&[1.0, 0.0, 1.0, 0.0]);
        let traj = integrate(&x0, &v0, &PotentialSpec::zero(), 1.0, 1e-9).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        // t + 4 positions + 4 velocities + energy
        assert_eq!(row.split(',').count(), 10);
    }

    #[test]
    fn collision_stop_reported() {
        // head-on infall
        let x0 = cfg(&[-1.0, 0.0, 1.0, 0.0]);
        let v0 = cfg(&[0.9, 0.0, -0.9, 0.0]);
        let traj = integrate(&x0, &v0, &PotentialSpec::newtonian(), 50.0, 1e-9).unwrap();
        assert_eq!(traj.stop, StopReason::Collision);
    }
}
