//! Discrete paths: ordered node lists with optional time stamps, stall
//! stripping, midpoint refinement and CSV serialization.

use std::io::{BufRead, Write};

use crate::config::Configuration;
use crate::error::{Error, Result};

/// Relative tolerance below which consecutive nodes count as stalls.
pub const STALL_TOL: f64 = 1e-14;

/// A polyline in configuration space. Timed paths carry strictly increasing
/// stamps starting at zero; spatial-only paths carry geometry alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    nodes: Vec<Configuration>,
    times: Option<Vec<f64>>,
}

impl DiscretePath {
    pub fn spatial(nodes: Vec<Configuration>) -> Result<Self> {
        Self::check_nodes(&nodes)?;
        Ok(Self { nodes, times: None })
    }

    pub fn timed(nodes: Vec<Configuration>, times: Vec<f64>) -> Result<Self> {
        Self::check_nodes(&nodes)?;
        if times.len() != nodes.len() {
            return Err(Error::InvalidPath(format!(
                "{} time stamps for {} nodes",
                times.len(),
                nodes.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath(format!("first stamp {} is not 0", times[0])));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPath("time stamps must strictly increase".into()));
        }
        Ok(Self { nodes, times: Some(times) })
    }

    fn check_nodes(nodes: &[Configuration]) -> Result<()> {
        if nodes.len() < 2 {
            return Err(Error::InvalidPath(format!("{} nodes, need at least 2", nodes.len())));
        }
        let (d, n) = (nodes[0].dim(), nodes[0].n_bodies());
        if nodes.iter().any(|x| x.dim() != d || x.n_bodies() != n) {
            return Err(Error::InvalidPath("nodes of mixed shape".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Configuration] {
        &self.nodes
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn is_timed(&self) -> bool {
        self.times.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least two nodes
    }

    pub fn first(&self) -> &Configuration {
        &self.nodes[0]
    }

    pub fn last(&self) -> &Configuration {
        &self.nodes[self.nodes.len() - 1]
    }

    /// Total duration of a timed path.
    pub fn sigma(&self) -> Option<f64> {
        self.times.as_ref().map(|t| t[t.len() - 1])
    }

    /// Polyline length in the weighted norm.
    pub fn euclidean_length(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1].dist(&w[0])).sum()
    }

    /// Drops the time stamps.
    pub fn into_spatial(mut self) -> Self {
        self.times = None;
        self
    }

    /// Linear interpolation at time `t` of a timed path.
    pub fn sample(&self, t: f64) -> Result<Configuration> {
        let times = self
            .times
            .as_ref()
            .ok_or_else(|| Error::InvalidPath("sample needs a timed path".into()))?;
        let sigma = times[times.len() - 1];
        if !(0.0..=sigma * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::InputDomain(format!("t = {t} outside [0, {sigma}]")));
        }
        let t = t.min(sigma);
        let k = match times.partition_point(|&s| s <= t) {
            0 => 0,
            p if p >= times.len() => times.len() - 2,
            p => p - 1,
        };
        let (t0, t1) = (times[k], times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.nodes[k].add_scaled(&self.nodes[k + 1].sub(&self.nodes[k]), w))
    }

    /// Removes consecutive duplicate nodes (within [`STALL_TOL`] relative to
    /// the local scale). Timed paths drop the stamps of removed nodes. A path
    /// collapsing to a single node is degenerate.
    pub fn strip_stationary(&self) -> Result<Self> {
        let mut keep = vec![0usize];
        for k in 1..self.nodes.len() {
            let prev = &self.nodes[*keep.last().unwrap()];
            let gap = self.nodes[k].dist(prev);
            let scale = 1.0 + prev.norm().max(self.nodes[k].norm());
            if gap > STALL_TOL * scale {
                keep.push(k);
            }
        }
        if keep.len() < 2 {
            return Err(Error::DegeneratePath);
        }
        let nodes = keep.iter().map(|&k| self.nodes[k].clone()).collect();
        match &self.times {
            None => DiscretePath::spatial(nodes),
            Some(times) => {
                let ts: Vec<f64> = keep.iter().map(|&k| times[k]).collect();
                DiscretePath::timed(nodes, ts)
            }
        }
    }

    /// Inserts the geometric midpoint of every segment. Timed paths get the
    /// midpoint stamps as well; the polyline geometry is unchanged.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(self.nodes.len() * 2 - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0].clone());
            nodes.push(w[0].add(&w[1]).scale(0.5));
        }
        nodes.push(self.last().clone());
        let times = self.times.as_ref().map(|ts| {
            let mut out = Vec::with_capacity(ts.len() * 2 - 1);
            for w in ts.windows(2) {
                out.push(w[0]);
                out.push(0.5 * (w[0] + w[1]));
            }
            out.push(ts[ts.len() - 1]);
            out
        });
        Self { nodes, times }
    }

    /// Writes the path as CSV: a comment header carrying `N`, `d` and masses,
    /// a column line, then one row per node (`t` empty for spatial paths).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let x0 = &self.nodes[0];
        let masses: Vec<String> = x0.masses().iter().map(|m| format!("{m:.17e}")).collect();
        writeln!(w, "# N={} d={} masses={}", x0.n_bodies(), x0.dim(), masses.join(";"))?;
        let mut cols = vec!["t".to_string()];
        for i in 0..x0.n_bodies() {
            for c in 0..x0.dim() {
                cols.push(format!("b{i}c{c}"));
            }
        }
        writeln!(w, "{}", cols.join(","))?;
        for (k, node) in self.nodes.iter().enumerate() {
            let t = match &self.times {
                Some(ts) => format!("{:.17e}", ts[k]),
                None => String::new(),
            };
            let coords: Vec<String> = node.coords().iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(w, "{t},{}", coords.join(","))?;
        }
        Ok(())
    }

    /// Reads a path written by [`DiscretePath::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidPath("empty path file".into()))?
            .map_err(|e| Error::InvalidPath(e.to_string()))?;
        let (n, d, masses) = parse_header(&header)?;
        // column line
        lines.next().ok_or_else(|| Error::InvalidPath("missing column line".into()))?
            .map_err(|e| Error::InvalidPath(e.to_string()))?;
        let mut nodes = Vec::new();
        let mut times: Vec<Option<f64>> = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::InvalidPath(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let t_field = fields.next().unwrap_or("").trim();
            let t = if t_field.is_empty() {
                None
            } else {
                Some(t_field.parse::<f64>().map_err(|e| Error::InvalidPath(e.to_string()))?)
            };
            let coords: Vec<f64> = fields
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::InvalidPath(e.to_string())))
                .collect::<Result<_>>()?;
            if coords.len() != n * d {
                return Err(Error::InvalidPath(format!(
                    "row with {} coordinates, expected {}",
                    coords.len(),
                    n * d
                )));
            }
            nodes.push(Configuration::from_coords(d, masses.clone(), coords)?);
            times.push(t);
        }
        if times.iter().all(|t| t.is_some()) {
            DiscretePath::timed(nodes, times.into_iter().map(|t| t.unwrap()).collect())
        } else if times.iter().all(|t| t.is_none()) {
            DiscretePath::spatial(nodes)
        } else {
            Err(Error::InvalidPath("mixed timed and untimed rows".into()))
        }
    }
}

fn parse_header(header: &str) -> Result<(usize, usize, Vec<f64>)> {
    let bad = || Error::InvalidPath(format!("bad header: {header}"));
    let rest = header.strip_prefix("# ").ok_or_else(bad)?;
    let mut n = None;
    let mut d = None;
    let mut masses = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("N=") {
            n = v.parse::<usize>().ok();
        } else if let Some(v) = part.strip_prefix("d=") {
            d = v.parse::<usize>().ok();
        } else if let Some(v) = part.strip_prefix("masses=") {
            masses = v
                .split(';')
                .map(|m| m.parse::<f64>().ok())
                .collect::<Option<Vec<f64>>>();
        }
    }
    match (n, d, masses) {
        (Some(n), Some(d), Some(m)) if m.len() == n => Ok((n, d, m)),
        _ => Err(bad()),
    }
}

/// Straight-segment path from `x` to `y` whose segment lengths follow the
/// given grading fractions (`fractions` sums to 1).
pub fn segment_path(x: &Configuration, y: &Configuration, fractions: &[f64]) -> Result<DiscretePath> {
    if fractions.is_empty() {
        return Err(Error::InvalidPath("no segments".into()));
    }
    let chord = y.sub(x);
    let mut nodes = Vec::with_capacity(fractions.len() + 1);
    nodes.push(x.clone());
    let mut acc = 0.0;
    for (k, f) in fractions.iter().enumerate() {
        acc += f;
        if k + 1 == fractions.len() {
            nodes.push(y.clone());
        } else {
            nodes.push(x.add_scaled(&chord, acc));
        }
    }
    DiscretePath::spatial(nodes)
}

/// Segment-length fractions for `m` segments, geometrically graded with the
/// given ratio (adjacent lengths grow by at most `ratio`; the short segments
/// sit at the start).
pub fn geometric_fractions(m: usize, ratio: f64) -> Vec<f64> {
    assert!(m >= 1);
    assert!(ratio >= 1.0);
    let mut lens = Vec::with_capacity(m);
    let mut l = 1.0;
    for _ in 0..m {
        lens.push(l);
        l *= ratio;
    }
    let total: f64 = lens.iter().sum();
    lens.iter_mut().for_each(|l| *l /= total);
    lens
}

/// Uniform segment fractions.
pub fn uniform_fractions(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(xs: &[f64]) -> Configuration {
        Configuration::from_coords(2, vec![1.0, 1.0], xs.to_vec()).unwrap()
    }

    #[test]
    fn timed_validation() {
        let a = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let b = cfg(&[1.0, 0.0, 2.0, 0.0]);
        assert!(DiscretePath::timed(vec![a.clone(), b.clone()], vec![0.0, 1.0]).is_ok());
        assert!(DiscretePath::timed(vec![a.clone(), b.clone()], vec![0.5, 1.0]).is_err());
        assert!(DiscretePath::timed(vec![a.clone(), b.clone()], vec![0.0, 0.0]).is_err());
        assert!(DiscretePath::spatial(vec![a]).is_err());
    }

    #[test]
    fn strip_stationary_removes_duplicates() {
        let a = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let b = cfg(&[1.0, 0.0, 2.0, 0.0]);
        let p = DiscretePath::spatial(vec![a.clone(), a.clone(), a.clone(), b.clone()]).unwrap();
        let s = p.strip_stationary().unwrap();
        assert_eq!(s.len(), 2);

        let q = DiscretePath::spatial(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(q.strip_stationary().unwrap(), q);

        let degenerate = DiscretePath::spatial(vec![a.clone(), a.clone()]).unwrap();
        assert!(matches!(degenerate.strip_stationary(), Err(Error::DegeneratePath)));
    }

    #[test]
    fn refinement_preserves_geometry() {
        let a = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let b = cfg(&[3.0, 4.0, 4.0, 4.0]);
        let p = DiscretePath::timed(vec![a, b], vec![0.0, 2.0]).unwrap();
        let r = p.refined();
        assert_eq!(r.len(), 3);
        assert!((r.euclidean_length() - p.euclidean_length()).abs() < 1e-14);
        assert_eq!(r.times().unwrap(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn sample_interpolates() {
        let a = cfg(&[0.0, 0.0, 1.0, 0.0]);
        let b = cfg(&[2.0, 0.0, 3.0, 0.0]);
        let p = DiscretePath::timed(vec![a, b], vec![0.0, 4.0]).unwrap();
        let mid = p.sample(2.0).unwrap();
        assert!((mid.body(0)[0] - 1.0).abs() < 1e-15);
        assert!(p.sample(5.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let a = cfg(&[0.0, 0.0, 1.0, 0.5]);
        let b = cfg(&[2.0, -1.0, 3.0, 0.25]);
        let p = DiscretePath::timed(vec![a, b], vec![0.0, 1.5]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = DiscretePath::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn csv_round_trip_spatial() {
        let a = cfg(&[0.0, 0.0, 1.0, 0.5]);
        let b = cfg(&[2.0, -1.0, 3.0, 0.25]);
        let p = DiscretePath::spatial(vec![a, b]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with(','), "empty t column");
        let q = DiscretePath::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(p, q);
        assert!(!q.is_timed());
    }

    #[test]
    fn grading_fractions() {
        let f = geometric_fractions(8, 1.25);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for w in f.windows(2) {
            let ratio = w[1] / w[0];
            assert!((1.0..=1.25 + 1e-12).contains(&ratio));
        }
        assert_eq!(uniform_fractions(4), vec![0.25; 4]);
    }
}
