//! Finite measures on the unit sphere S^{d-1}.

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, QuadValue, Tolerance};
use crate::special::ln_gamma;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SphericalKind {
    /// Atoms stored flat: direction k occupies `dirs[k*d..(k+1)*d]`.
    Discrete { dirs: Vec<f64>, weights: Vec<f64> },
    UniformIsotropic { mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalMeasure {
    d: usize,
    kind: SphericalKind,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl SphericalMeasure {
    /// Discrete measure from (direction, weight) pairs. Directions are
    /// normalized; zero vectors and nonpositive weights are rejected.
    pub fn discrete(d: usize, atoms: &[(Vec<f64>, f64)]) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be positive");
        }
        if atoms.is_empty() {
            return invalid("discrete measure needs at least one atom");
        }
        for (_, w) in atoms {
            if !(w.is_finite() && *w > 0.0) {
                return invalid(format!("atom weight {w} must be positive and finite"));
            }
        }
        Self::discrete_nonnegative(d, atoms)
    }

    /// Like `discrete` but admits zero weights; used for derived measures
    /// such as sigma1 when c1 vanishes.
    pub(crate) fn discrete_nonnegative(d: usize, atoms: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut dirs = Vec::with_capacity(atoms.len() * d);
        let mut weights = Vec::with_capacity(atoms.len());
        for (v, w) in atoms {
            if v.len() != d {
                return invalid(format!("atom {v:?} has dimension {}, expected {d}", v.len()));
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 0.0 && n.is_finite()) {
                return invalid("atom direction must be a nonzero finite vector");
            }
            if !(w.is_finite() && *w >= 0.0) {
                return invalid(format!("atom weight {w} must be nonnegative"));
            }
            dirs.extend(v.iter().map(|x| x / n));
            weights.push(*w);
        }
        let mut m = SphericalMeasure { d, kind: SphericalKind::Discrete { dirs, weights }, cumulative: vec![] };
        m.build_cumulative();
        Ok(m)
    }

    /// Rotation-invariant measure of the given total mass. In d = 1 this is
    /// the pair of atoms +1 and -1 with mass/2 each.
    pub fn uniform(d: usize, mass: f64) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be positive");
        }
        if !(mass.is_finite() && mass > 0.0) {
            return invalid(format!("mass {mass} must be positive"));
        }
        Self::uniform_nonnegative(d, mass)
    }

    pub(crate) fn uniform_nonnegative(d: usize, mass: f64) -> Result<Self> {
        if d == 1 {
            return Self::discrete_nonnegative(1, &[(vec![1.0], mass / 2.0), (vec![-1.0], mass / 2.0)]);
        }
        Ok(SphericalMeasure { d, kind: SphericalKind::UniformIsotropic { mass }, cumulative: vec![] })
    }

    fn build_cumulative(&mut self) {
        if let SphericalKind::Discrete { weights, .. } = &self.kind {
            let mut acc = 0.0;
            self.cumulative = weights
                .iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect();
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &SphericalKind {
        &self.kind
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, SphericalKind::UniformIsotropic { .. })
    }

    pub fn total_mass(&self) -> f64 {
        match &self.kind {
            SphericalKind::Discrete { weights, .. } => weights.iter().sum(),
            SphericalKind::UniformIsotropic { mass } => *mass,
        }
    }

    /// Number of atoms of a discrete measure; zero for the uniform variant.
    pub fn num_atoms(&self) -> usize {
        match &self.kind {
            SphericalKind::Discrete { weights, .. } => weights.len(),
            SphericalKind::UniformIsotropic { .. } => 0,
        }
    }

    /// Iterates (direction, weight) of a discrete measure.
    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        let (dirs, weights): (&[f64], &[f64]) = match &self.kind {
            SphericalKind::Discrete { dirs, weights } => (dirs, weights),
            SphericalKind::UniformIsotropic { .. } => (&[], &[]),
        };
        let d = self.d;
        weights.iter().enumerate().map(move |(k, w)| (&dirs[k * d..(k + 1) * d], *w))
    }

    /// Directions on which functions of the direction are probed: the
    /// atoms, or the signed coordinate axes for the uniform variant.
    pub fn probe_directions(&self) -> Vec<Vec<f64>> {
        match &self.kind {
            SphericalKind::Discrete { .. } => self.atoms().map(|(x, _)| x.to_vec()).collect(),
            SphericalKind::UniformIsotropic { .. } => axis_directions(self.d),
        }
    }

    pub fn sample_direction_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.d);
        match &self.kind {
            SphericalKind::Discrete { dirs, .. } => {
                let k = if self.cumulative.len() == 1 {
                    0
                } else {
                    let total = *self.cumulative.last().unwrap();
                    let u = rng.random::<f64>() * total;
                    self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
                };
                out.copy_from_slice(&dirs[k * self.d..(k + 1) * self.d]);
            }
            SphericalKind::UniformIsotropic { .. } => loop {
                let mut n2 = 0.0;
                for x in out.iter_mut() {
                    *x = rng.sample(StandardNormal);
                    n2 += *x * *x;
                }
                if n2 > 1e-300 {
                    let n = n2.sqrt();
                    out.iter_mut().for_each(|x| *x /= n);
                    break;
                }
            },
        }
    }

    pub fn sample_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = vec![0.0; self.d];
        self.sample_direction_into(rng, &mut v);
        v
    }

    /// The unnormalized integral of xi over the measure. Positive and
    /// negative contributions are summed separately in sorted order, so a
    /// symmetric measure gives exactly zero.
    pub fn first_moment(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d);
        for i in 0..self.d {
            let mut pos: Vec<f64> = Vec::new();
            let mut neg: Vec<f64> = Vec::new();
            for (x, w) in self.atoms() {
                let c = w * x[i];
                if c > 0.0 {
                    pos.push(c);
                } else if c < 0.0 {
                    neg.push(-c);
                }
            }
            pos.sort_by(f64::total_cmp);
            neg.sort_by(f64::total_cmp);
            m[i] = pos.iter().sum::<f64>() - neg.iter().sum::<f64>();
        }
        m
    }

    /// The integral of xi xi' over the measure.
    pub fn second_moment(&self) -> DMatrix<f64> {
        match &self.kind {
            SphericalKind::UniformIsotropic { mass } => DMatrix::identity(self.d, self.d) * (mass / self.d as f64),
            SphericalKind::Discrete { .. } => {
                let mut m = DMatrix::zeros(self.d, self.d);
                for (x, w) in self.atoms() {
                    for i in 0..self.d {
                        for j in 0..self.d {
                            m[(i, j)] += w * x[i] * x[j];
                        }
                    }
                }
                m
            }
        }
    }

    /// True when the measure is invariant under xi -> -xi.
    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            SphericalKind::UniformIsotropic { .. } => true,
            SphericalKind::Discrete { .. } => {
                let atoms: Vec<_> = self.atoms().collect();
                let scale = self.total_mass().max(1e-300);
                let mass_at = |x: &[f64], sign: f64| -> f64 {
                    atoms
                        .iter()
                        .filter(|(y, _)| x.iter().zip(y.iter()).all(|(a, b)| (sign * a - b).abs() < UNIT_TOL))
                        .map(|(_, w)| *w)
                        .sum()
                };
                atoms.iter().all(|(x, _)| (mass_at(x, 1.0) - mass_at(x, -1.0)).abs() <= 1e-12 * scale)
            }
        }
    }

    /// New measure with weights multiplied by `c(xi)`. For the uniform
    /// variant `c` must be constant over the probe directions.
    pub fn reweighted(&self, c: impl Fn(&[f64]) -> f64) -> Result<Self> {
        match &self.kind {
            SphericalKind::Discrete { .. } => {
                let atoms: Vec<(Vec<f64>, f64)> = self.atoms().map(|(x, w)| (x.to_vec(), w * c(x))).collect();
                Self::discrete_nonnegative(self.d, &atoms)
            }
            SphericalKind::UniformIsotropic { mass } => {
                let probes = axis_directions(self.d);
                let c0 = c(&probes[0]);
                for p in &probes {
                    let cp = c(p);
                    if (cp - c0).abs() > 1e-12 * c0.abs().max(1.0) {
                        return invalid("direction-dependent density over a uniform spherical measure");
                    }
                }
                Self::uniform_nonnegative(self.d, mass * c0)
            }
        }
    }

    /// Integral over the measure of a function of xi that depends on xi
    /// only through k = <y, xi> for the uniform variant. The closure gets
    /// k and a direction (a representative one for the uniform case).
    pub fn integrate_projection<T: QuadValue>(
        &self,
        y: &[f64],
        mut g: impl FnMut(f64, &[f64]) -> T,
    ) -> Result<T> {
        match &self.kind {
            SphericalKind::Discrete { .. } => {
                let mut acc = T::zero();
                for (x, w) in self.atoms() {
                    if w == 0.0 {
                        continue;
                    }
                    let k: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                    acc = acc + g(k, x) * w;
                }
                Ok(acc)
            }
            SphericalKind::UniformIsotropic { mass } => {
                let d = self.d;
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                let e1 = axis_directions(d).swap_remove(0);
                if ny == 0.0 {
                    return Ok(g(0.0, &e1) * *mass);
                }
                // mass * E[g(|y| cos theta)], theta with density ~ sin^{d-2}
                let norm = (0.5 * std::f64::consts::PI.ln() + ln_gamma((d as f64 - 1.0) / 2.0)
                    - ln_gamma(d as f64 / 2.0))
                .exp();
                let p = d as f64 - 2.0;
                let r = integrate(
                    |th: f64| g(ny * th.cos(), &e1) * th.sin().powf(p),
                    0.0,
                    std::f64::consts::PI,
                    Tolerance::new(1e-11, 1e-11),
                )?;
                Ok(r.value * (*mass / norm))
            }
        }
    }

    /// Parses `discrete:[(x1,...,xd):w, ...]` or `uniform:d:mass`.
    pub fn parse(s: &str) -> Result<Self> {
        s.parse()
    }
}

pub(crate) fn axis_directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * d);
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = s;
            out.push(v);
        }
    }
    out
}

fn perr<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

impl FromStr for SphericalMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("uniform:") {
            let mut parts = rest.split(':');
            let d = parts.next().and_then(|v| v.trim().parse::<usize>().ok());
            let m = parts.next().and_then(|v| v.trim().parse::<f64>().ok());
            return match (d, m, parts.next()) {
                (Some(d), Some(m), None) => SphericalMeasure::uniform(d, m),
                _ => perr(format!("expected uniform:d:mass, got '{s}'")),
            };
        }
        let Some(rest) = s.strip_prefix("discrete:") else {
            return perr(format!("unknown spherical measure '{s}'"));
        };
        let body = rest.trim();
        let Some(body) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) else {
            return perr("discrete atoms must be enclosed in [...]");
        };
        let mut atoms = Vec::new();
        let mut rest = body.trim();
        while !rest.is_empty() {
            let Some(after_open) = rest.strip_prefix('(') else {
                return perr(format!("expected '(' at '{rest}'"));
            };
            let Some(close) = after_open.find(')') else {
                return perr("unclosed '('");
            };
            let coords: std::result::Result<Vec<f64>, _> =
                after_open[..close].split(',').map(|c| c.trim().parse::<f64>()).collect();
            let coords = coords.map_err(|e| Error::Parse(format!("bad coordinate: {e}")))?;
            let tail = after_open[close + 1..].trim_start();
            let Some(tail) = tail.strip_prefix(':') else {
                return perr("expected ':' after atom direction");
            };
            let end = tail.find(',').unwrap_or(tail.len());
            let w: f64 = tail[..end]
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad weight '{}': {e}", tail[..end].trim())))?;
            atoms.push((coords, w));
            rest = if end < tail.len() { tail[end + 1..].trim() } else { "" };
        }
        let Some(d) = atoms.first().map(|a| a.0.len()) else {
            return perr("no atoms");
        };
        if d == 1 && atoms.iter().any(|(v, _)| v[0].abs() != 1.0) {
            return perr("in d = 1 atom directions must be +1 or -1");
        }
        SphericalMeasure::discrete(d, &atoms)
    }
}

impl fmt::Display for SphericalMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SphericalKind::UniformIsotropic { mass } => write!(f, "uniform:{}:{}", self.d, mass),
            SphericalKind::Discrete { .. } => {
                write!(f, "discrete:[")?;
                for (k, (x, w)) in self.atoms().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
                    write!(f, "({}):{}", coords.join(","), w)?;
                }
                write!(f, "]")
            }
        }
    }
}
