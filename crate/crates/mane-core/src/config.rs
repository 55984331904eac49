//! Configurations of N bodies in d dimensions, the flat (minimal-separation)
//! norm, angles, base-point construction and the cone/drift predicates.
//!
//! A configuration is a point of `R^{dN}` together with the body masses. The
//! inner product is the mass scalar product `<<x,y>> = sum_i m_i <x_i, y_i>`;
//! with unit masses it reduces to the Euclidean one. The flat norm
//! `x^flat = min |x_i - x_j|` measures distance to the collision set: a
//! configuration is collision-free exactly when its flat norm is positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for unit-norm preconditions.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// N bodies in `R^d` with strictly positive masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigurationRepr", into = "ConfigurationRepr")]
pub struct Configuration {
    d: usize,
    masses: Vec<f64>,
    coords: Vec<f64>,
}

/// Wire form: `{"d": 2, "masses": [...], "bodies": [[...], ...]}`.
#[derive(Serialize, Deserialize)]
struct ConfigurationRepr {
    d: usize,
    masses: Vec<f64>,
    bodies: Vec<Vec<f64>>,
}

impl TryFrom<ConfigurationRepr> for Configuration {
    type Error = Error;
    fn try_from(r: ConfigurationRepr) -> Result<Self> {
        Configuration::new(r.d, r.masses, r.bodies)
    }
}

impl From<Configuration> for ConfigurationRepr {
    fn from(c: Configuration) -> Self {
        ConfigurationRepr {
            d: c.d,
            masses: c.masses.clone(),
            bodies: (0..c.n_bodies()).map(|i| c.body(i).to_vec()).collect(),
        }
    }
}

impl Configuration {
    /// Builds a configuration from per-body position vectors.
    pub fn new(d: usize, masses: Vec<f64>, bodies: Vec<Vec<f64>>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidConfiguration(format!("d = {d}, need d >= 2")));
        }
        if masses.len() < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "N = {}, need N >= 2",
                masses.len()
            )));
        }
        if masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidConfiguration(
                "masses must be strictly positive and finite".into(),
            ));
        }
        if bodies.len() != masses.len() {
            return Err(Error::InvalidConfiguration(format!(
                "{} bodies but {} masses",
                bodies.len(),
                masses.len()
            )));
        }
        let mut coords = Vec::with_capacity(d * masses.len());
        for b in &bodies {
            if b.len() != d {
                return Err(Error::InvalidConfiguration(format!(
                    "body with {} coordinates in dimension {d}",
                    b.len()
                )));
            }
            coords.extend_from_slice(b);
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfiguration("non-finite coordinate".into()));
        }
        Ok(Self { d, masses, coords })
    }

    /// Builds a configuration from a flat coordinate slice (body-major).
    pub fn from_coords(d: usize, masses: Vec<f64>, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != d * masses.len() {
            return Err(Error::InvalidConfiguration(format!(
                "{} coordinates for N = {}, d = {d}",
                coords.len(),
                masses.len()
            )));
        }
        let bodies = coords.chunks(d).map(|c| c.to_vec()).collect();
        Self::new(d, masses, bodies)
    }

    /// All-zero configuration with the same shape as `self`.
    pub fn zero_like(&self) -> Self {
        Self { d: self.d, masses: self.masses.clone(), coords: vec![0.0; self.coords.len()] }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn body(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    /// All masses equal to one. The bound constants of the construction are
    /// proved for unit masses; reports flag non-unit-mass runs.
    pub fn unit_masses(&self) -> bool {
        self.masses.iter().all(|&m| m == 1.0)
    }

    fn assert_compatible(&self, other: &Self) {
        debug_assert_eq!(self.d, other.d);
        debug_assert_eq!(self.masses.len(), other.masses.len());
    }

    /// Mass scalar product `<<x,y>> = sum_i m_i <x_i, y_i>`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.assert_compatible(other);
        let mut acc = 0.0;
        for i in 0..self.n_bodies() {
            let m = self.masses[i];
            let a = self.body(i);
            let b = other.body(i);
            for c in 0..self.d {
                acc += m * a[c] * b[c];
            }
        }
        acc
    }

    /// Weighted norm `(sum_i m_i |x_i|^2)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn dist(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.assert_compatible(other);
        let coords = self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect();
        Self { d: self.d, masses: self.masses.clone(), coords }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(other, 1.0)
    }

    /// `self + t * other`.
    pub fn add_scaled(&self, other: &Self, t: f64) -> Self {
        self.assert_compatible(other);
        let coords = self.coords.iter().zip(&other.coords).map(|(a, b)| a + t * b).collect();
        Self { d: self.d, masses: self.masses.clone(), coords }
    }

    pub fn scale(&self, t: f64) -> Self {
        let coords = self.coords.iter().map(|a| a * t).collect();
        Self { d: self.d, masses: self.masses.clone(), coords }
    }

    /// Normalizes to unit weighted norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOL
    }

    /// Flat norm: minimum pairwise body separation. Zero exactly at a
    /// collision; membership in the non-collision set is `flat_norm > 0`.
    pub fn flat_norm(&self) -> f64 {
        min_separation(self)
    }

    /// Pair realizing the flat norm, with the separation.
    pub fn closest_pair(&self) -> (usize, usize, f64) {
        let n = self.n_bodies();
        let mut best = (0, 1, f64::INFINITY);
        for i in 0..n {
            for j in (i + 1)..n {
                let r = body_distance(self, i, j);
                if r < best.2 {
                    best = (i, j, r);
                }
            }
        }
        best
    }

    pub fn is_collision_free(&self) -> bool {
        self.flat_norm() > 0.0
    }
}

pub(crate) fn body_distance(x: &Configuration, i: usize, j: usize) -> f64 {
    let a = x.body(i);
    let b = x.body(j);
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Minimum over all body pairs of the Euclidean separation.
pub fn min_separation(x: &Configuration) -> f64 {
    x.closest_pair().2
}

/// Angle in `[0, pi]` between two nonzero configurations, from the mass
/// scalar product. Cosines are clamped to `[-1, 1]` before `acos`.
pub fn angle_between(a: &Configuration, b: &Configuration) -> Result<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let cos = (a.inner(b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// Base point `x* = x + 50 (1 + |x|) a / a^flat` for a unit non-collision
/// direction `a`. The shift is far enough along `a` that the forward cone
/// `{x* + t b : t >= 0, |b - a| <= a^flat / 20}` stays collision-free with
/// separation at least 2.
pub fn base_point(x: &Configuration, a: &Configuration) -> Result<Configuration> {
    if !a.is_unit() {
        return Err(Error::InputDomain(format!("direction norm {} is not 1", a.norm())));
    }
    let a_flat = a.flat_norm();
    if a_flat <= 0.0 {
        return Err(Error::CollisionDirection);
    }
    let s = 50.0 * (1.0 + x.norm()) / a_flat;
    Ok(x.add_scaled(a, s))
}

/// Offset `50 (1 + |x|) / a^flat` used by [`base_point`].
pub fn base_offset(x: &Configuration, a: &Configuration) -> Result<f64> {
    if !a.is_unit() {
        return Err(Error::InputDomain(format!("direction norm {} is not 1", a.norm())));
    }
    let a_flat = a.flat_norm();
    if a_flat <= 0.0 {
        return Err(Error::CollisionDirection);
    }
    Ok(50.0 * (1.0 + x.norm()) / a_flat)
}

/// Outcome of a geometric predicate check: the asserted inequalities with
/// their two sides, and whether every one of them holds.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub checks: Vec<(String, f64, f64)>,
    pub holds: bool,
}

impl Verdict {
    fn from_checks(checks: Vec<(String, f64, f64)>) -> Self {
        // lhs <= rhs with a relative epsilon for roundoff at equality.
        let holds = checks
            .iter()
            .all(|(_, lhs, rhs)| *lhs <= *rhs + 1e-12 * rhs.abs().max(1.0));
        Verdict { checks, holds }
    }
}

/// Perturbation stability of the flat norm: if `|a - b| <= delta a^flat` with
/// `0 < delta < 1/5`, then `b^flat >= (1 - 2 delta) a^flat`, and for unit `b`
/// additionally `<a, b> >= 1 - 2 delta^2`.
pub fn separation_drift_check(
    a: &Configuration,
    b: &Configuration,
    delta: f64,
) -> Result<Verdict> {
    if !(delta > 0.0 && delta < 0.2) {
        return Err(Error::InputDomain(format!("delta = {delta}, need 0 < delta < 1/5")));
    }
    if !a.is_unit() {
        return Err(Error::InputDomain("a must have unit norm".into()));
    }
    let a_flat = a.flat_norm();
    if a_flat <= 0.0 {
        return Err(Error::CollisionDirection);
    }
    let gap = b.sub(a).norm();
    if gap > delta * a_flat * (1.0 + 1e-9) {
        return Err(Error::InputDomain(format!(
            "|a - b| = {gap:.6e} exceeds delta * a^flat = {:.6e}",
            delta * a_flat
        )));
    }
    let mut checks = vec![(
        "(1 - 2 delta) a^flat <= b^flat".into(),
        (1.0 - 2.0 * delta) * a_flat,
        b.flat_norm(),
    )];
    if b.is_unit() {
        checks.push(("1 - 2 delta^2 <= <a,b>".into(), 1.0 - 2.0 * delta * delta, a.inner(b)));
    }
    Ok(Verdict::from_checks(checks))
}

/// Cone separation: for unit `a`, `b` with `|a - b| <= a^flat / 20` and
/// `s >= 50 (1 + |x|) / a^flat`, `t >= 0`, the chained inequality
/// `(x + s a + t b)^flat >= (x + s a)^flat >= (24/25) s a^flat` holds, so the
/// whole forward cone is collision-free.
pub fn cone_separation_check(
    x: &Configuration,
    a: &Configuration,
    b: &Configuration,
    s: f64,
    t: f64,
) -> Result<Verdict> {
    if !a.is_unit() || !b.is_unit() {
        return Err(Error::InputDomain("a and b must have unit norm".into()));
    }
    let a_flat = a.flat_norm();
    if a_flat <= 0.0 {
        return Err(Error::CollisionDirection);
    }
    let gap = b.sub(a).norm();
    if gap > a_flat / 20.0 * (1.0 + 1e-9) {
        return Err(Error::InputDomain(format!(
            "|a - b| = {gap:.6e} exceeds a^flat / 20 = {:.6e}",
            a_flat / 20.0
        )));
    }
    let s_min = 50.0 * (1.0 + x.norm()) / a_flat;
    if s < s_min * (1.0 - 1e-12) {
        return Err(Error::InputDomain(format!("s = {s:.6e} below 50 (1 + |x|)/a^flat = {s_min:.6e}")));
    }
    if t < 0.0 {
        return Err(Error::InputDomain(format!("t = {t} must be nonnegative")));
    }
    let xsa = x.add_scaled(a, s);
    let xsatb = xsa.add_scaled(b, t);
    let checks = vec![
        ("(x+sa)^flat <= (x+sa+tb)^flat".into(), xsa.flat_norm(), xsatb.flat_norm()),
        ("(24/25) s a^flat <= (x+sa)^flat".into(), 24.0 / 25.0 * s * a_flat, xsa.flat_norm()),
    ];
    Ok(Verdict::from_checks(checks))
}

/// Open half ray `origin + R_+ direction` with a unit direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Configuration,
    pub direction: Configuration,
}

impl Ray {
    pub fn new(origin: Configuration, direction: Configuration) -> Result<Self> {
        if !direction.is_unit() {
            return Err(Error::InputDomain(format!(
                "ray direction norm {} is not 1",
                direction.norm()
            )));
        }
        Ok(Self { origin, direction })
    }

    pub fn point_at(&self, t: f64) -> Configuration {
        self.origin.add_scaled(&self.direction, t)
    }
}

/// Distance from `z` to the open half ray, computed as the distance to its
/// closure (the infimum over the open ray is attained there and the values
/// coincide).
pub fn dist_to_ray(z: &Configuration, ray: &Ray) -> f64 {
    let w = z.sub(&ray.origin);
    let t = w.inner(&ray.direction).max(0.0);
    w.add_scaled(&ray.direction, -t).norm()
}

/// Distance from `z` to the closed segment `[x, y]`.
pub fn dist_to_segment(z: &Configuration, x: &Configuration, y: &Configuration) -> f64 {
    let chord = y.sub(x);
    let len2 = chord.inner(&chord);
    if len2 == 0.0 {
        return z.dist(x);
    }
    let t = (z.sub(x).inner(&chord) / len2).clamp(0.0, 1.0);
    z.sub(&x.add_scaled(&chord, t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, bodies: &[&[f64]]) -> Configuration {
        Configuration::new(d, vec![1.0; bodies.len()], bodies.iter().map(|b| b.to_vec()).collect())
            .unwrap()
    }

    #[test]
    fn min_separation_single_pair() {
        let x = cfg(2, &[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(min_separation(&x), 1.0);
    }

    #[test]
    fn min_separation_collinear_three() {
        let x = cfg(2, &[&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]]);
        assert_eq!(min_separation(&x), 1.0);
    }

    #[test]
    fn min_separation_collision_is_zero() {
        let x = cfg(2, &[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(min_separation(&x), 0.0);
        assert!(!x.is_collision_free());
    }

    #[test]
    fn angle_parallel_antiparallel_orthogonal() {
        let a = cfg(2, &[&[1.0, 0.0], &[0.0, 0.0]]);
        let minus_a = a.scale(-1.0);
        assert_eq!(angle_between(&a, &a).unwrap(), 0.0);
        assert!((angle_between(&a, &minus_a).unwrap() - std::f64::consts::PI).abs() < 1e-15);

        let ua = a.normalized().unwrap();
        let b = cfg(2, &[&[0.0, 1.0], &[0.0, 0.0]]).normalized().unwrap();
        let ang = angle_between(&ua, &b).unwrap();
        assert!((ang - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        // |a-b| = sqrt(2) = 2 sin(pi/4) for orthogonal unit vectors
        assert!((ua.sub(&b).norm() - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn angle_rejects_zero_vector() {
        let a = cfg(2, &[&[1.0, 0.0], &[0.0, 0.0]]);
        let z = a.zero_like();
        assert!(matches!(angle_between(&a, &z), Err(Error::ZeroVector)));
    }

    #[test]
    fn base_point_symmetric_pair() {
        let x = cfg(2, &[&[0.0, 0.0], &[0.0, 0.0]]);
        let s = 0.5_f64.sqrt();
        let a = cfg(2, &[&[-s, 0.0], &[s, 0.0]]);
        assert!(a.is_unit());
        assert!((a.flat_norm() - 2.0_f64.sqrt()).abs() < 1e-15);
        let xs = base_point(&x, &a).unwrap();
        assert!((xs.body(0)[0] + 25.0).abs() < 1e-12);
        assert!((xs.body(1)[0] - 25.0).abs() < 1e-12);
        assert!((xs.flat_norm() - 50.0).abs() < 1e-12);
        // |x*| = 50 / a^flat for x = 0
        assert!((xs.norm() - 50.0 / a.flat_norm()).abs() < 1e-12);
    }

    #[test]
    fn base_point_rejects_collision_direction() {
        let x = cfg(2, &[&[0.0, 0.0], &[1.0, 0.0]]);
        let a = cfg(2, &[&[0.5, 0.5], &[0.5, 0.5]]).normalized().unwrap();
        assert!(matches!(base_point(&x, &a), Err(Error::CollisionDirection)));
    }

    #[test]
    fn drift_check_identity_and_bad_delta() {
        let a = cfg(2, &[&[-0.5, 0.0], &[0.5, 0.0]]).normalized().unwrap();
        let v = separation_drift_check(&a, &a, 0.1).unwrap();
        assert!(v.holds);
        assert!(matches!(
            separation_drift_check(&a, &a, 0.25),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn cone_check_trivial_case() {
        let x = cfg(2, &[&[0.0, 0.0], &[0.0, 0.0]]);
        let a = cfg(2, &[&[-0.5, 0.0], &[0.5, 0.0]]).normalized().unwrap();
        let s = 50.0 / a.flat_norm();
        let v = cone_separation_check(&x, &a, &a, s, 0.0).unwrap();
        assert!(v.holds);
    }

    #[test]
    fn ray_distance_cases() {
        let origin = cfg(2, &[&[0.0, 0.0], &[1.0, 0.0]]);
        let dir = cfg(2, &[&[1.0, 0.0], &[0.0, 0.0]]).normalized().unwrap();
        let ray = Ray::new(origin.clone(), dir.clone()).unwrap();

        // on the ray
        assert!(dist_to_ray(&ray.point_at(2.5), &ray) < 1e-15);

        // orthogonal offset of size 1 from a ray point
        let w = cfg(2, &[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!((w.norm() - 1.0).abs() < 1e-15);
        assert!((w.inner(&dir)).abs() < 1e-15);
        let z = ray.point_at(1.0).add(&w);
        assert!((dist_to_ray(&z, &ray) - 1.0).abs() < 1e-12);

        // behind the origin: distance to the closure is 1
        let behind = origin.add_scaled(&dir, -1.0);
        assert!((dist_to_ray(&behind, &ray) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let x = cfg(2, &[&[0.25, -1.0], &[3.0, 4.0]]);
        let s = serde_json::to_string(&x).unwrap();
        assert!(s.contains("\"bodies\""));
        let y: Configuration = serde_json::from_str(&s).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Configuration::new(1, vec![1.0, 1.0], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(Configuration::new(2, vec![1.0], vec![vec![0.0, 0.0]]).is_err());
        assert!(Configuration::new(2, vec![1.0, -1.0], vec![vec![0.0; 2], vec![1.0, 0.0]]).is_err());
    }
}
