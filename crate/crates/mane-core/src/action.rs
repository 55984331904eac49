//! Discretized action functionals.
//!
//! Two equivalent forms are discretized over a path's segments:
//!
//! - the fixed-time Lagrangian action `int [ |v|^2/2 + F + lambda ]`, with the
//!   kinetic term exact for the piecewise-linear interpolant and `F` sampled
//!   at segment midpoints (never at endpoints, where callers may place
//!   near-collision data);
//! - the parametrization-invariant Maupertuis form
//!   `sum |dx| sqrt(2 F(mid) + 2 lambda)`, whose minimizers coincide with the
//!   fixed-energy minimizers of the first form.
//!
//! The canonical reparametrization assigns each segment the time
//! `dt = |dx| / sqrt(2 F(mid) + 2 lambda)`, which makes the discrete energy
//! relation `|dx/dt|^2 = 2 (F + lambda)` an identity of the scheme, and turns
//! the Maupertuis value into the Lagrangian one segment by segment.

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::path::DiscretePath;
use crate::potential::PotentialSpec;

/// An action value with its quadrature error estimate (one Richardson step on
/// node doubling; `raw` marks values reported without the estimate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionValue {
    pub value: f64,
    pub quadrature_error: f64,
    pub raw: bool,
}

impl ActionValue {
    fn raw(value: f64) -> Self {
        ActionValue { value, quadrature_error: 0.0, raw: true }
    }
}

pub(crate) struct PathShape<'a> {
    pub d: usize,
    pub n: usize,
    pub masses: &'a [f64],
}

impl<'a> PathShape<'a> {
    pub fn of(x: &'a Configuration) -> Self {
        PathShape { d: x.dim(), n: x.n_bodies(), masses: x.masses() }
    }

    pub fn dn(&self) -> usize {
        self.d * self.n
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let m = self.masses[i];
            for c in 0..self.d {
                let diff = a[i * self.d + c] - b[i * self.d + c];
                acc += m * diff * diff;
            }
        }
        acc.sqrt()
    }
}

/// Flattens a path's nodes into one body-major coordinate buffer.
pub(crate) fn flatten(path: &DiscretePath) -> Vec<f64> {
    let dn = path.nodes()[0].coords().len();
    let mut out = Vec::with_capacity(dn * path.len());
    for node in path.nodes() {
        out.extend_from_slice(node.coords());
    }
    out
}

pub(crate) fn unflatten(
    shape: &PathShape,
    coords: &[f64],
) -> Result<Vec<Configuration>> {
    coords
        .chunks(shape.dn())
        .map(|c| Configuration::from_coords(shape.d, shape.masses.to_vec(), c.to_vec()))
        .collect()
}

/// Maupertuis value over flat node coordinates. `mid` is scratch of length
/// `d * n`.
pub(crate) fn maupertuis_flat(
    pot: &PotentialSpec,
    shape: &PathShape,
    coords: &[f64],
    lambda: f64,
    mid: &mut [f64],
) -> Result<f64> {
    let dn = shape.dn();
    let n_nodes = coords.len() / dn;
    let mut total = 0.0;
    for k in 0..n_nodes - 1 {
        let a = &coords[k * dn..(k + 1) * dn];
        let b = &coords[(k + 1) * dn..(k + 2) * dn];
        for (m, (x, y)) in mid.iter_mut().zip(a.iter().zip(b)) {
            *m = 0.5 * (x + y);
        }
        let f = pot.eval_slice(shape.d, shape.masses, mid)?;
        total += shape.dist(a, b) * (2.0 * f + 2.0 * lambda).sqrt();
    }
    Ok(total)
}

/// Maupertuis value and its mass-scalar-product gradient with respect to
/// every node (endpoint rows are zeroed). `mid` and `gf` are scratch of
/// length `d * n`; `grad` matches `coords`.
pub(crate) fn maupertuis_grad_flat(
    pot: &PotentialSpec,
    shape: &PathShape,
    coords: &[f64],
    lambda: f64,
    grad: &mut [f64],
    mid: &mut [f64],
    gf: &mut [f64],
) -> Result<f64> {
    let dn = shape.dn();
    let n_nodes = coords.len() / dn;
    grad.fill(0.0);
    let mut total = 0.0;
    for k in 0..n_nodes - 1 {
        let a = &coords[k * dn..(k + 1) * dn];
        let b = &coords[(k + 1) * dn..(k + 2) * dn];
        for (m, (x, y)) in mid.iter_mut().zip(a.iter().zip(b)) {
            *m = 0.5 * (x + y);
        }
        let f = pot.eval_slice(shape.d, shape.masses, mid)?;
        let w = (2.0 * f + 2.0 * lambda).sqrt();
        let len = shape.dist(a, b);
        if len == 0.0 {
            return Err(Error::InvalidPath(format!("stalled segment at node {k}")));
        }
        total += len * w;

        pot.grad_slice(shape.d, shape.masses, mid, true, gf)?;
        let fac = 0.5 * len / w;
        for c in 0..dn {
            let u = (b[c] - a[c]) / len;
            // d(len)/dx and len * d(w)/dx, both as mass gradients
            grad[k * dn + c] += -u * w + fac * gf[c];
            grad[(k + 1) * dn + c] += u * w + fac * gf[c];
        }
    }
    grad[..dn].fill(0.0);
    grad[(n_nodes - 1) * dn..].fill(0.0);
    Ok(total)
}

/// Reparametrization-invariant action of a path (times, if any, are ignored).
pub fn maupertuis_action(
    path: &DiscretePath,
    pot: &PotentialSpec,
    lambda: f64,
) -> Result<ActionValue> {
    check_lambda(lambda)?;
    let shape = PathShape::of(&path.nodes()[0]);
    let coords = flatten(path);
    let mut mid = vec![0.0; shape.dn()];
    Ok(ActionValue::raw(maupertuis_flat(pot, &shape, &coords, lambda, &mut mid)?))
}

/// Maupertuis action with a one-step Richardson quadrature estimate: the
/// value on the path and a third of its change under midpoint refinement
/// (geometry unchanged, `F` sampled twice as finely).
pub fn maupertuis_action_refined(
    path: &DiscretePath,
    pot: &PotentialSpec,
    lambda: f64,
) -> Result<ActionValue> {
    let coarse = maupertuis_action(path, pot, lambda)?;
    let fine = maupertuis_action(&path.refined(), pot, lambda)?;
    Ok(ActionValue {
        value: coarse.value,
        quadrature_error: (coarse.value - fine.value).abs() / 3.0,
        raw: false,
    })
}

/// Fixed-time Lagrangian action of a timed path.
pub fn lagrangian_action(
    path: &DiscretePath,
    pot: &PotentialSpec,
    lambda: f64,
) -> Result<ActionValue> {
    check_lambda(lambda)?;
    let times = path
        .times()
        .ok_or_else(|| Error::InvalidPath("lagrangian action needs a timed path".into()))?;
    let shape = PathShape::of(&path.nodes()[0]);
    let mut mid = vec![0.0; shape.dn()];
    let mut total = 0.0;
    for k in 0..path.len() - 1 {
        let a = path.nodes()[k].coords();
        let b = path.nodes()[k + 1].coords();
        for (m, (x, y)) in mid.iter_mut().zip(a.iter().zip(b)) {
            *m = 0.5 * (x + y);
        }
        let f = pot.eval_slice(shape.d, shape.masses, &mid)?;
        let dt = times[k + 1] - times[k];
        let len = shape.dist(a, b);
        total += len * len / (2.0 * dt) + (f + lambda) * dt;
    }
    Ok(ActionValue::raw(total))
}

/// Exact gradient of the discrete Maupertuis functional with respect to each
/// node, under the mass scalar product. Endpoint entries are zero.
pub fn action_gradient(
    path: &DiscretePath,
    pot: &PotentialSpec,
    lambda: f64,
) -> Result<Vec<Configuration>> {
    check_lambda(lambda)?;
    let shape = PathShape::of(&path.nodes()[0]);
    let coords = flatten(path);
    let mut grad = vec![0.0; coords.len()];
    let mut mid = vec![0.0; shape.dn()];
    let mut gf = vec![0.0; shape.dn()];
    maupertuis_grad_flat(pot, &shape, &coords, lambda, &mut grad, &mut mid, &mut gf)?;
    unflatten(&shape, &grad)
}

/// Times a spatial path canonically: each segment gets
/// `dt = |dx| / sqrt(2 F(mid) + 2 lambda)`, so the discrete energy relation
/// holds exactly and the Lagrangian value of the result equals the Maupertuis
/// value of the input.
pub fn canonical_reparametrize(
    path: &DiscretePath,
    pot: &PotentialSpec,
    lambda: f64,
) -> Result<DiscretePath> {
    check_lambda(lambda)?;
    let shape = PathShape::of(&path.nodes()[0]);
    let mut mid = vec![0.0; shape.dn()];
    let mut times = Vec::with_capacity(path.len());
    times.push(0.0);
    for k in 0..path.len() - 1 {
        let a = path.nodes()[k].coords();
        let b = path.nodes()[k + 1].coords();
        for (m, (x, y)) in mid.iter_mut().zip(a.iter().zip(b)) {
            *m = 0.5 * (x + y);
        }
        let f = pot.eval_slice(shape.d, shape.masses, &mid)?;
        let len = shape.dist(a, b);
        if len == 0.0 {
            return Err(Error::InvalidPath(format!(
                "stalled segment at node {k}; strip stalls first"
            )));
        }
        times.push(times[k] + len / (2.0 * f + 2.0 * lambda).sqrt());
    }
    DiscretePath::timed(path.nodes().to_vec(), times)
}

/// Largest relative violation of the discrete energy relation
/// `|dx/dt|^2 = 2 (F(mid) + lambda)` over the segments of a timed path.
pub fn energy_residual(path: &DiscretePath, pot: &PotentialSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let times = path
        .times()
        .ok_or_else(|| Error::InvalidPath("energy residual needs a timed path".into()))?;
    let shape = PathShape::of(&path.nodes()[0]);
    let mut mid = vec![0.0; shape.dn()];
    let mut worst: f64 = 0.0;
    for k in 0..path.len() - 1 {
        let a = path.nodes()[k].coords();
        let b = path.nodes()[k + 1].coords();
        for (m, (x, y)) in mid.iter_mut().zip(a.iter().zip(b)) {
            *m = 0.5 * (x + y);
        }
        let f = pot.eval_slice(shape.d, shape.masses, &mid)?;
        let dt = times[k + 1] - times[k];
        let speed2 = (shape.dist(a, b) / dt).powi(2);
        worst = worst.max((speed2 - (2.0 * f + 2.0 * lambda)).abs() / (2.0 * lambda));
    }
    Ok(worst)
}

/// Euler-Lagrange defect of a timed path: how far the second divided
/// differences sit from `grad F` at the interior nodes.
#[derive(Debug, Clone, Copy)]
pub struct ElResidual {
    /// `max_j | D2 gamma_j - grad F(gamma_j) |`
    pub raw: f64,
    /// same, divided by `|grad F| + lambda` node by node
    pub normalized: f64,
}

/// Measures the Euler-Lagrange defect `x'' = grad F` on a timed path, using
/// second divided differences on the (nonuniform) time grid. The gradient is
/// the action-facing (clamped) one.
pub fn el_residual(path: &DiscretePath, pot: &PotentialSpec, lambda: f64) -> Result<ElResidual> {
    check_lambda(lambda)?;
    let times = path
        .times()
        .ok_or_else(|| Error::InvalidPath("EL residual needs a timed path".into()))?;
    let nodes = path.nodes();
    let mut raw: f64 = 0.0;
    let mut normalized: f64 = 0.0;
    for j in 1..nodes.len() - 1 {
        let hm = times[j] - times[j - 1];
        let hp = times[j + 1] - times[j];
        let fwd = nodes[j + 1].sub(&nodes[j]).scale(1.0 / hp);
        let bwd = nodes[j].sub(&nodes[j - 1]).scale(1.0 / hm);
        let acc = fwd.sub(&bwd).scale(2.0 / (hm + hp));
        let gf = pot.gradient(&nodes[j])?;
        let defect = acc.sub(&gf).norm();
        raw = raw.max(defect);
        normalized = normalized.max(defect / (gf.norm() + lambda));
    }
    Ok(ElResidual { raw, normalized })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InputDomain(format!("lambda = {lambda}, need lambda > 0")))
    }
}
