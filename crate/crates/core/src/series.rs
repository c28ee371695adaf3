//! Shot-noise series for stable, layered stable and mixed stable paths.

use crate::error::{invalid, Error, Result};
use crate::parallel::path_rng;
use crate::qfunc::{pow_integral, LayeredQ};
use crate::quad::{integrate, Tolerance};
use crate::special::{zeta, EULER_GAMMA};
use crate::spherical::SphericalMeasure;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

/// Jumps smaller than this are dropped.
pub const MIN_MAGNITUDE: f64 = 1e-300;

/// Distribution of per-term stability indices for mixed stable series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mixture {
    /// (alpha, probability) atoms; probabilities are normalized.
    Discrete(Vec<(f64, f64)>),
    /// Uniform on [lo, hi] with 0 < lo < hi < 2.
    Uniform { lo: f64, hi: f64 },
}

impl Mixture {
    pub fn point(alpha: f64) -> Result<Self> {
        Self::discrete(&[(alpha, 1.0)])
    }

    pub fn discrete(atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return invalid("mixture needs at least one atom");
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        for &(a, p) in atoms {
            if !(a > 0.0 && a < 2.0) {
                return invalid(format!("mixture index {a} outside (0,2)"));
            }
            if !(p > 0.0 && p.is_finite()) {
                return invalid(format!("mixture weight {p} must be positive"));
            }
        }
        Ok(Mixture::Discrete(atoms.iter().map(|&(a, p)| (a, p / total)).collect()))
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && hi < 2.0) {
            return invalid(format!("uniform mixture needs 0 < lo < hi < 2, got [{lo}, {hi}]"));
        }
        Ok(Mixture::Uniform { lo, hi })
    }

    /// The admissibility integral of 1/(alpha(2-alpha)) against the mixture.
    pub fn admissibility_integral(&self) -> f64 {
        match self {
            Mixture::Discrete(a) => a.iter().map(|&(x, p)| p / (x * (2.0 - x))).sum(),
            Mixture::Uniform { lo, hi } => {
                // 1/(a(2-a)) = (1/a + 1/(2-a))/2
                let f = |a: f64| 0.5 * (a.ln() - (2.0 - a).ln());
                (f(*hi) - f(*lo)) / (hi - lo)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Mixture::Discrete(a) => {
                if a.len() == 1 {
                    return a[0].0;
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(x, p) in a {
                    acc += p;
                    if u < acc {
                        return x;
                    }
                }
                a[a.len() - 1].0
            }
            Mixture::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    /// Expectation of g(alpha) under the mixture.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        match self {
            Mixture::Discrete(a) => Ok(a.iter().map(|&(x, p)| p * g(x)).sum()),
            Mixture::Uniform { lo, hi } => {
                Ok(integrate(&g, *lo, *hi, Tolerance::new(1e-13, 1e-12))?.value / (hi - lo))
            }
        }
    }
}

/// Which optional sequences a draw carries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawFeatures {
    /// Uniform marks U_i for rejection series.
    pub rejects: bool,
    /// Per-term stability indices alpha_i.
    pub mix: Option<Mixture>,
    /// Replace the discarded small jumps by a Brownian term with the same
    /// covariance (a Gaussian approximation of the truncation remainder).
    pub gaussian_remainder: bool,
}

/// One realization of {Gamma_i}, {T_i}, {V_i} and optional {U_i}, {alpha_i}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseDraw {
    pub horizon: f64,
    pub gamma_cap: f64,
    pub dim: usize,
    pub gammas: Vec<f64>,
    pub times: Vec<f64>,
    /// Flat: direction i occupies `directions[i*dim..(i+1)*dim]`.
    pub directions: Vec<f64>,
    pub rejects: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub gaussian_remainder: bool,
    /// Seed for the Brownian remainder increments.
    pub aux_seed: u64,
}

impl ShotNoiseDraw {
    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// Number of terms kept (the index of the last Gamma_i <= gamma_cap T).
    pub fn cutoff_index(&self) -> usize {
        self.len()
    }

    /// The Gamma truncation level gamma_cap * T.
    pub fn gamma_level(&self) -> f64 {
        self.gamma_cap * self.horizon
    }

    #[inline]
    pub fn direction(&self, i: usize) -> &[f64] {
        &self.directions[i * self.dim..(i + 1) * self.dim]
    }
}

/// Draws a series realization from `rng`.
pub fn draw_with_rng<R: Rng + ?Sized>(
    rng: &mut R,
    t: f64,
    sigma: &SphericalMeasure,
    gamma_cap: f64,
    features: &DrawFeatures,
) -> Result<ShotNoiseDraw> {
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("horizon T = {t} must be positive"));
    }
    if !(gamma_cap > 0.0 && gamma_cap.is_finite()) {
        return invalid(format!("gamma_cap = {gamma_cap} must be positive"));
    }
    if sigma.total_mass() <= 0.0 {
        return invalid("spherical measure has zero mass");
    }
    let d = sigma.dim();
    let level = gamma_cap * t;
    let cap = (level * 1.05 + 10.0 * level.sqrt() + 16.0) as usize;
    let mut gammas = Vec::with_capacity(cap);
    let mut times = Vec::with_capacity(cap);
    let mut directions = Vec::with_capacity(cap * d);
    let mut rejects = features.rejects.then(|| Vec::with_capacity(cap));
    let mut alphas = features.mix.as_ref().map(|_| Vec::with_capacity(cap));
    let mut v = vec![0.0; d];
    let mut g = 0.0f64;
    loop {
        let e: f64 = rng.sample(Exp1);
        g += e;
        if g > level {
            break;
        }
        if g == 0.0 {
            continue;
        }
        gammas.push(g);
        times.push(t * rng.random::<f64>());
        sigma.sample_direction_into(rng, &mut v);
        directions.extend_from_slice(&v);
        if let Some(r) = rejects.as_mut() {
            r.push(rng.random::<f64>());
        }
        if let (Some(a), Some(m)) = (alphas.as_mut(), features.mix.as_ref()) {
            a.push(m.sample(rng));
        }
    }
    let aux_seed = rng.random::<u64>();
    Ok(ShotNoiseDraw {
        horizon: t,
        gamma_cap,
        dim: d,
        gammas,
        times,
        directions,
        rejects,
        alphas,
        gaussian_remainder: features.gaussian_remainder,
        aux_seed,
    })
}

/// Deterministic draw for a seed.
pub fn draw_shot_noise(
    seed: u64,
    t: f64,
    sigma: &SphericalMeasure,
    gamma_cap: f64,
    features: &DrawFeatures,
) -> Result<ShotNoiseDraw> {
    draw_for_path(seed, 0, t, sigma, gamma_cap, features)
}

/// Draw for path `index` of a run with the given seed.
pub fn draw_for_path(
    seed: u64,
    index: u64,
    t: f64,
    sigma: &SphericalMeasure,
    gamma_cap: f64,
    features: &DrawFeatures,
) -> Result<ShotNoiseDraw> {
    draw_with_rng(&mut path_rng(seed, index), t, sigma, gamma_cap, features)
}

/// n+1 equally spaced points on [0, t]; the last one is exactly t.
pub fn uniform_grid(t: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|k| if k == n { t } else { t * k as f64 / n as f64 }).collect()
}

/// A path on a time grid with its retained jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub dim: usize,
    pub grid: Vec<f64>,
    /// Flat: value at grid point g occupies `values[g*dim..(g+1)*dim]`.
    pub values: Vec<f64>,
    pub jump_times: Vec<f64>,
    /// Flat jump vectors.
    pub jump_vectors: Vec<f64>,
    /// The deterministic part of the value at time t is `drift_rate * t`.
    pub drift_rate: Vec<f64>,
    /// Brownian remainder at each grid point (flat), when enabled.
    pub gaussian: Option<Vec<f64>>,
}

impl SamplePath {
    #[inline]
    pub fn value(&self, g: usize) -> &[f64] {
        &self.values[g * self.dim..(g + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.grid.len() - 1)
    }

    pub fn num_jumps(&self) -> usize {
        self.jump_times.len()
    }

    #[inline]
    pub fn jump(&self, k: usize) -> (f64, &[f64]) {
        (self.jump_times[k], &self.jump_vectors[k * self.dim..(k + 1) * self.dim])
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, &[f64])> {
        (0..self.num_jumps()).map(move |k| self.jump(k))
    }

    /// Recomputes the value at grid point g from the drift, the retained
    /// jumps with T_i <= t_g and the Brownian term, in the same order as
    /// the constructor.
    pub fn reconstruct(&self, g: usize) -> Vec<f64> {
        let d = self.dim;
        let cells = accumulate_cells(&self.grid, &self.jump_times, &self.jump_vectors, d, g + 1);
        let mut acc = KahanVec::new(d);
        for c in 1..=g {
            acc.add(&cells[c * d..(c + 1) * d]);
        }
        let t = self.grid[g];
        let mut out: Vec<f64> = (0..d).map(|j| self.drift_rate[j] * t + acc.sum[j]).collect();
        if let Some(gs) = &self.gaussian {
            for j in 0..d {
                out[j] += gs[g * d + j];
            }
        }
        if g == 0 {
            out.iter_mut().for_each(|x| *x = 0.0);
        }
        out
    }

    /// The path restricted to a coarser grid made of every `step`-th point.
    pub fn subsample(&self, step: usize) -> SamplePath {
        let step = step.max(1);
        let idx: Vec<usize> = (0..self.grid.len()).step_by(step).collect();
        let d = self.dim;
        SamplePath {
            dim: d,
            grid: idx.iter().map(|&g| self.grid[g]).collect(),
            values: idx.iter().flat_map(|&g| self.value(g).to_vec()).collect(),
            jump_times: self.jump_times.clone(),
            jump_vectors: self.jump_vectors.clone(),
            drift_rate: self.drift_rate.clone(),
            gaussian: self.gaussian.as_ref().map(|gs| idx.iter().flat_map(|&g| gs[g * d..(g + 1) * d].to_vec()).collect()),
        }
    }
}

struct KahanVec {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl KahanVec {
    fn new(d: usize) -> Self {
        KahanVec { sum: vec![0.0; d], comp: vec![0.0; d] }
    }

    #[inline]
    fn add(&mut self, x: &[f64]) {
        for j in 0..x.len() {
            let y = x[j] - self.comp[j];
            let t = self.sum[j] + y;
            self.comp[j] = (t - self.sum[j]) - y;
            self.sum[j] = t;
        }
    }
}

/// Cell c (c >= 1) collects the jumps with t_{c-1} < T_i <= t_c, summed in
/// index order; jumps at time exactly 0 go to cell 1.
fn accumulate_cells(grid: &[f64], times: &[f64], vecs: &[f64], d: usize, ncells: usize) -> Vec<f64> {
    let mut cells: Vec<KahanVec> = (0..ncells).map(|_| KahanVec::new(d)).collect();
    for (k, &t) in times.iter().enumerate() {
        let c = grid.partition_point(|&s| s < t).max(1);
        if c < ncells {
            cells[c].add(&vecs[k * d..(k + 1) * d]);
        }
    }
    cells.into_iter().flat_map(|c| c.sum).collect()
}

fn check_grid(grid: &[f64], t: f64) -> Result<()> {
    if grid.len() < 2 {
        return invalid("grid needs at least two points");
    }
    if grid[0] != 0.0 {
        return invalid("grid must start at 0");
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("grid must be strictly increasing");
    }
    if *grid.last().unwrap() > t * (1.0 + 1e-12) {
        return invalid(format!("grid ends at {} beyond the horizon {t}", grid.last().unwrap()));
    }
    Ok(())
}

fn matrix_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let sq = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sq) * eig.eigenvectors.transpose()
}

/// Builds a path from per-term magnitudes (None = term not retained).
fn assemble(
    draw: &ShotNoiseDraw,
    grid: &[f64],
    magnitude: impl Fn(usize) -> Option<f64>,
    drift_rate: Vec<f64>,
    remainder_cov_rate: Option<DMatrix<f64>>,
) -> Result<SamplePath> {
    check_grid(grid, draw.horizon)?;
    let d = draw.dim;
    let mut jump_times = Vec::with_capacity(draw.len());
    let mut jump_vectors = Vec::with_capacity(draw.len() * d);
    for i in 0..draw.len() {
        if let Some(m) = magnitude(i) {
            if m >= MIN_MAGNITUDE && m.is_finite() {
                jump_times.push(draw.times[i]);
                jump_vectors.extend(draw.direction(i).iter().map(|x| m * x));
            }
        }
    }
    let ng = grid.len();
    let cells = accumulate_cells(grid, &jump_times, &jump_vectors, d, ng);
    let gaussian = match (draw.gaussian_remainder, remainder_cov_rate) {
        (true, Some(cov)) if cov.iter().any(|x| *x != 0.0) => {
            let a = matrix_sqrt(&cov);
            let mut rng = ChaCha8Rng::seed_from_u64(draw.aux_seed);
            let mut out = vec![0.0; ng * d];
            let mut z = DVector::zeros(d);
            for g in 1..ng {
                let dt = grid[g] - grid[g - 1];
                for j in 0..d {
                    z[j] = rng.sample::<f64, _>(StandardNormal);
                }
                let inc = &a * &z * dt.sqrt();
                for j in 0..d {
                    out[g * d + j] = out[(g - 1) * d + j] + inc[j];
                }
            }
            Some(out)
        }
        _ => None,
    };
    let mut values = vec![0.0; ng * d];
    let mut acc = KahanVec::new(d);
    for g in 1..ng {
        acc.add(&cells[g * d..(g + 1) * d]);
        for j in 0..d {
            let mut v = drift_rate[j] * grid[g] + acc.sum[j];
            if let Some(gs) = &gaussian {
                v += gs[g * d + j];
            }
            values[g * d + j] = v;
        }
    }
    Ok(SamplePath { dim: d, grid: grid.to_vec(), values, jump_times, jump_vectors, drift_rate, gaussian })
}

fn check_draw(draw: &ShotNoiseDraw, sigma: &SphericalMeasure) -> Result<()> {
    if draw.dim != sigma.dim() {
        return invalid(format!("draw has dimension {}, spherical measure {}", draw.dim, sigma.dim()));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return invalid(format!("alpha = {alpha} must lie in (0,2)"));
    }
    Ok(())
}

/// (alpha Gamma / (mass T))^{-1/alpha}.
#[inline]
pub fn stable_magnitude(alpha: f64, gamma: f64, mass_t: f64) -> f64 {
    (alpha * gamma / mass_t).powf(-1.0 / alpha)
}

/// Sum of i^{-s} for i = 1..n: direct for small n, Euler-Maclaurin beyond.
pub fn power_sum(s: f64, n: u64) -> f64 {
    const DIRECT: u64 = 48;
    if n <= DIRECT {
        return (1..=n).map(|i| (i as f64).powf(-s)).sum();
    }
    let head: f64 = (1..DIRECT).map(|i| (i as f64).powf(-s)).sum();
    let (a, b) = (DIRECT as f64, n as f64);
    let f = |x: f64| x.powf(-s);
    let integral = if s == 1.0 { (b / a).ln() } else { (b.powf(1.0 - s) - a.powf(1.0 - s)) / (1.0 - s) };
    // derivatives of x^{-s}
    let d1 = |x: f64| -s * x.powf(-s - 1.0);
    let d3 = |x: f64| -s * (s + 1.0) * (s + 2.0) * x.powf(-s - 3.0);
    let d5 = |x: f64| -s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * x.powf(-s - 5.0);
    head + integral + 0.5 * (f(a) + f(b)) + (d1(b) - d1(a)) / 12.0 - (d3(b) - d3(a)) / 720.0
        + (d5(b) - d5(a)) / 30240.0
}

/// The centering constant b_T of the stable series.
pub fn lemma_centering(alpha: f64, mass: f64, t: f64) -> f64 {
    lemma_centering_with(alpha, mass, t, zeta)
}

/// `lemma_centering` with an explicit zeta implementation.
pub fn lemma_centering_with(alpha: f64, mass: f64, t: f64, zeta_fn: impl Fn(f64) -> f64) -> f64 {
    let mt = mass * t;
    if alpha < 1.0 {
        0.0
    } else if alpha == 1.0 {
        mt * (EULER_GAMMA + mt.ln())
    } else {
        (alpha / mt).powf(-1.0 / alpha) * zeta_fn(1.0 / alpha)
    }
}

/// Total compensator sum_{i <= n} (alpha i/(mass T))^{-1/alpha}.
pub fn stable_compensator(alpha: f64, mass: f64, t: f64, n: u64) -> f64 {
    (alpha / (mass * t)).powf(-1.0 / alpha) * power_sum(1.0 / alpha, n)
}

/// Stable path: sum of (alpha Gamma_i/(sigma(S) T))^{-1/alpha} V_i 1(T_i <= t),
/// centered for alpha >= 1 by the index-matched compensator over
/// i <= floor(gamma_cap T) and b_T.
pub fn stable_path(alpha: f64, sigma: &SphericalMeasure, draw: &ShotNoiseDraw, grid: &[f64]) -> Result<SamplePath> {
    check_alpha(alpha)?;
    check_draw(draw, sigma)?;
    let d = sigma.dim();
    let mass = sigma.total_mass();
    let t = draw.horizon;
    let mt = mass * t;
    let level = draw.gamma_level();
    let mean_dir = sigma.first_moment() / mass;
    let mut drift = vec![0.0; d];
    if mean_dir.iter().any(|x| *x != 0.0) {
        let total = if alpha >= 1.0 {
            let n = level.floor() as u64;
            lemma_centering(alpha, mass, t) - stable_compensator(alpha, mass, t, n)
        } else {
            // expected contribution of the discarded terms Gamma > level
            (alpha / mt).powf(-1.0 / alpha) * level.powf(1.0 - 1.0 / alpha) / (1.0 / alpha - 1.0)
        };
        for j in 0..d {
            drift[j] = mean_dir[j] * total / t;
        }
    }
    let eps = stable_magnitude(alpha, level, mt);
    let cov = sigma.second_moment() * (eps.powf(2.0 - alpha) / (2.0 - alpha));
    assemble(draw, grid, |i| Some(stable_magnitude(alpha, draw.gammas[i], mt)), drift, Some(cov))
}

/// Layered path from the general series: magnitude q^{<-}(Gamma_i/(sigma(S)T), V_i),
/// compensated over the jumps of size at most 1.
pub fn layered_path_general(
    q: &LayeredQ,
    sigma: &SphericalMeasure,
    draw: &ShotNoiseDraw,
    grid: &[f64],
) -> Result<SamplePath> {
    check_draw(draw, sigma)?;
    q.validate_for(sigma)?;
    let mass = sigma.total_mass();
    let mt = mass * draw.horizon;
    let mut mags = Vec::with_capacity(draw.len());
    for i in 0..draw.len() {
        mags.push(q.inverse_tail(draw.gammas[i] / mt, draw.direction(i))?);
    }
    let drift = general_drift_rate(q, sigma, draw)?;
    let cov = general_remainder_cov(q, sigma, draw)?;
    assemble(draw, grid, |i| Some(mags[i]), drift.iter().copied().collect(), Some(cov))
}

/// Smallest retained radius in direction xi.
fn truncation_radius(q: &LayeredQ, sigma: &SphericalMeasure, draw: &ShotNoiseDraw, xi: &[f64]) -> Result<f64> {
    q.inverse_tail(draw.gamma_level() / (sigma.total_mass() * draw.horizon), xi)
}

/// Compensator rate: -sum_atoms w xi int_{r_L}^{1} r q(r, xi) dr.
pub fn general_drift_rate(q: &LayeredQ, sigma: &SphericalMeasure, draw: &ShotNoiseDraw) -> Result<DVector<f64>> {
    let d = sigma.dim();
    let mut drift = DVector::zeros(d);
    if sigma.is_uniform() {
        return Ok(drift);
    }
    for (xi, w) in sigma.atoms() {
        if w == 0.0 {
            continue;
        }
        let rl = truncation_radius(q, sigma, draw, xi)?;
        if rl < 1.0 {
            let m = q.power_moment(1.0, rl, 1.0, xi)?;
            for j in 0..d {
                drift[j] -= w * xi[j] * m;
            }
        }
    }
    Ok(drift)
}

/// Covariance rate of the discarded jumps: sum_atoms w xi xi' int_0^{r_L} r^2 q dr.
pub fn general_remainder_cov(q: &LayeredQ, sigma: &SphericalMeasure, draw: &ShotNoiseDraw) -> Result<DMatrix<f64>> {
    let d = sigma.dim();
    if sigma.is_uniform() {
        let e1 = &sigma.probe_directions()[0];
        let rl = truncation_radius(q, sigma, draw, e1)?;
        return Ok(sigma.second_moment() * q.power_moment(2.0, 0.0, rl, e1)?);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (xi, w) in sigma.atoms() {
        if w == 0.0 {
            continue;
        }
        let rl = truncation_radius(q, sigma, draw, xi)?;
        let m = w * q.power_moment(2.0, 0.0, rl, xi)?;
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += m * xi[a] * xi[b];
            }
        }
    }
    Ok(cov)
}

/// Centering coefficient b_i of the general series: T sum_atoms w xi times
/// the integral of r q(r, xi) 1(r <= 1) over the radii produced by
/// Gamma in [i-1, i].
pub fn general_centering_b(q: &LayeredQ, sigma: &SphericalMeasure, t: f64, i: u64) -> Result<DVector<f64>> {
    if i == 0 {
        return invalid("centering index starts at 1");
    }
    let d = sigma.dim();
    let mt = sigma.total_mass() * t;
    let mut b = DVector::zeros(d);
    if sigma.is_uniform() {
        return Ok(b);
    }
    for (xi, w) in sigma.atoms() {
        if w == 0.0 {
            continue;
        }
        let lo = q.inverse_tail(i as f64 / mt, xi)?;
        let hi = if i == 1 { f64::INFINITY } else { q.inverse_tail((i - 1) as f64 / mt, xi)? };
        let (lo, hi) = (lo, hi.min(1.0));
        if lo < hi {
            let m = q.power_moment(1.0, lo, hi, xi)?;
            for j in 0..d {
                b[j] += t * w * xi[j] * m;
            }
        }
    }
    Ok(b)
}

/// Magnitude of the canonical two-layer series with series mass m.
#[inline]
pub fn canonical_magnitude(alpha: f64, beta: f64, gamma: f64, mass_t: f64) -> f64 {
    if gamma * beta <= mass_t {
        (beta * gamma / mass_t).powf(-1.0 / beta)
    } else {
        (alpha * gamma / mass_t + 1.0 - alpha / beta).powf(-1.0 / alpha)
    }
}

/// Integral over s in [s0, s1] (clipped to the alpha branch s >= mT/beta)
/// of the alpha-branch magnitude (alpha s/(mT) + 1 - alpha/beta)^{-1/alpha}.
pub fn canonical_alpha_branch_integral(alpha: f64, beta: f64, series_mass: f64, t: f64, s0: f64, s1: f64) -> f64 {
    let mt = series_mass * t;
    let start = mt / beta;
    let (a, b) = (s0.max(start), s1.max(start));
    if b <= a {
        return 0.0;
    }
    let w = |s: f64| alpha * s / mt + 1.0 - alpha / beta;
    // ds = (mT/alpha) dw
    (mt / alpha) * pow_integral(-1.0 / alpha, w(a), w(b))
}

/// b_i of the canonical series for the alpha-branch compensator.
pub fn canonical_centering_b(alpha: f64, beta: f64, series_mass: f64, t: f64, i: u64) -> f64 {
    canonical_alpha_branch_integral(alpha, beta, series_mass, t, (i - 1) as f64, i as f64)
}

/// The beta-branch coefficient printed alongside the canonical series:
/// (beta/(mT))^{-1/beta} [(i ^ mT/beta)^{1-1/beta} - ((i-1) ^ mT/beta)^{1-1/beta}]/(1-1/beta),
/// with the logarithmic limit at beta = 1.
pub fn printed_beta_branch_b(beta: f64, series_mass: f64, t: f64, i: u64) -> f64 {
    let mt = series_mass * t;
    let cap = mt / beta;
    let hi = (i as f64).min(cap);
    let lo = ((i - 1) as f64).min(cap);
    if hi <= lo {
        return 0.0;
    }
    let scale = (beta / mt).powf(-1.0 / beta);
    if (beta - 1.0).abs() < 1e-12 {
        return scale * (hi / lo).ln();
    }
    let e = 1.0 - 1.0 / beta;
    scale * (hi.powf(e) - lo.powf(e)) / e
}

/// Canonical series with an explicit series mass m: directions from the
/// draw, magnitudes (beta Gamma/(mT))^{-1/beta} for Gamma <= mT/beta and
/// (alpha Gamma/(mT) + 1 - alpha/beta)^{-1/alpha} beyond, compensated over
/// the alpha branch.
pub fn canonical_series_path(
    alpha: f64,
    beta: f64,
    series_mass: f64,
    sigma: &SphericalMeasure,
    draw: &ShotNoiseDraw,
    grid: &[f64],
) -> Result<SamplePath> {
    check_alpha(alpha)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return invalid(format!("beta = {beta} must be positive"));
    }
    check_draw(draw, sigma)?;
    let d = sigma.dim();
    let mass = sigma.total_mass();
    let t = draw.horizon;
    let mt = series_mass * t;
    let level = draw.gamma_level();
    let mean_dir = sigma.first_moment() / mass;
    let comp = canonical_alpha_branch_integral(alpha, beta, series_mass, t, 0.0, level);
    let drift: Vec<f64> = (0..d).map(|j| -mean_dir[j] * comp / t).collect();
    // discarded jumps follow the canonical density with sigma_mass mass/m
    let q = LayeredQ::canonical(alpha, beta, mass / series_mass)?;
    let rl = canonical_magnitude(alpha, beta, level, mt);
    let cov = sigma.second_moment() * q.power_moment(2.0, 0.0, rl, &[1.0])?;
    assemble(draw, grid, |i| Some(canonical_magnitude(alpha, beta, draw.gammas[i], mt)), drift, Some(cov))
}

/// Layered path for the canonical q with sigma_mass = sigma(S), whose
/// Levy measure is sigma(d xi) q(r) dr; the series mass is sigma1(S) = 1.
pub fn layered_path_canonical(
    alpha: f64,
    beta: f64,
    sigma: &SphericalMeasure,
    draw: &ShotNoiseDraw,
    grid: &[f64],
) -> Result<SamplePath> {
    canonical_series_path(alpha, beta, 1.0, sigma, draw, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectionBase {
    /// alpha-stable candidates thinned by 1(r <= 1) + r^{alpha-beta} 1(r > 1).
    Inner,
    /// beta-stable candidates thinned by r^{beta-alpha} 1(r <= 1) + 1(r > 1).
    Outer,
}

/// Acceptance probability of a candidate of size r.
pub fn rejection_ratio(alpha: f64, beta: f64, base: RejectionBase, r: f64) -> f64 {
    match base {
        RejectionBase::Inner => {
            if r <= 1.0 {
                1.0
            } else {
                r.powf(alpha - beta)
            }
        }
        RejectionBase::Outer => {
            if r <= 1.0 {
                r.powf(beta - alpha)
            } else {
                1.0
            }
        }
    }
}

/// Canonical layered path (same law as `layered_path_canonical`) by
/// thinning a stable series; symmetric sigma and alpha < beta only.
pub fn layered_path_rejection(
    alpha: f64,
    beta: f64,
    sigma: &SphericalMeasure,
    draw: &ShotNoiseDraw,
    base: RejectionBase,
    grid: &[f64],
) -> Result<SamplePath> {
    check_alpha(alpha)?;
    check_draw(draw, sigma)?;
    if !(alpha < beta) {
        return invalid(format!("rejection series needs alpha < beta, got ({alpha}, {beta})"));
    }
    if !sigma.is_symmetric() {
        return invalid("rejection series needs a symmetric spherical measure");
    }
    let Some(u) = draw.rejects.as_ref() else {
        return invalid("draw carries no rejection marks");
    };
    let mass = sigma.total_mass();
    let series_mass = 1.0;
    let mt = series_mass * draw.horizon;
    let level = draw.gamma_level();
    let index = match base {
        RejectionBase::Inner => alpha,
        RejectionBase::Outer => beta,
    };
    let q = LayeredQ::canonical(alpha, beta, mass / series_mass)?;
    let eps = stable_magnitude(index, level, mt);
    let cov = sigma.second_moment() * q.power_moment(2.0, 0.0, eps, &[1.0])?;
    let d = sigma.dim();
    assemble(
        draw,
        grid,
        |i| {
            let r = stable_magnitude(index, draw.gammas[i], mt);
            (u[i] <= rejection_ratio(alpha, beta, base, r)).then_some(r)
        },
        vec![0.0; d],
        Some(cov),
    )
}

/// Mixed stable path: magnitudes (alpha_i Gamma_i/(sigma(S) T))^{-1/alpha_i};
/// symmetric sigma only.
pub fn mixed_path(mix: &Mixture, sigma: &SphericalMeasure, draw: &ShotNoiseDraw, grid: &[f64]) -> Result<SamplePath> {
    check_draw(draw, sigma)?;
    if !sigma.is_symmetric() {
        return invalid("mixed stable series needs a symmetric spherical measure");
    }
    let Some(alphas) = draw.alphas.as_ref() else {
        return invalid("draw carries no per-term indices");
    };
    let adm = mix.admissibility_integral();
    if !adm.is_finite() {
        return invalid("mixture violates the admissibility condition");
    }
    let mass = sigma.total_mass();
    let mt = mass * draw.horizon;
    let level = draw.gamma_level();
    let var = mix.expect(|a| stable_magnitude(a, level, mt).powf(2.0 - a) / (2.0 - a))?;
    let cov = sigma.second_moment() * var;
    let d = sigma.dim();
    assemble(draw, grid, |i| Some(stable_magnitude(alphas[i], draw.gammas[i], mt)), vec![0.0; d], Some(cov))
}

/// Errors from a path generator, mapped for callers that only need a flag.
pub fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::InvalidParameter(_) | Error::Parse(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::EULER_GAMMA;

    fn sym(m: f64) -> SphericalMeasure {
        SphericalMeasure::discrete(1, &[(vec![1.0], m / 2.0), (vec![-1.0], m / 2.0)]).unwrap()
    }

    fn one_term_draw(gamma: f64, time: f64, dir: f64, t: f64) -> ShotNoiseDraw {
        ShotNoiseDraw {
            horizon: t,
            gamma_cap: gamma / t * 1.0001,
            dim: 1,
            gammas: vec![gamma],
            times: vec![time],
            directions: vec![dir],
            rejects: None,
            alphas: Some(vec![0.5]),
            gaussian_remainder: false,
            aux_seed: 0,
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let s = sym(2.0);
        let f = DrawFeatures { rejects: true, mix: Some(Mixture::uniform(0.5, 1.5).unwrap()), gaussian_remainder: true };
        let a = draw_shot_noise(11, 1.0, &s, 500.0, &f).unwrap();
        let b = draw_shot_noise(11, 1.0, &s, 500.0, &f).unwrap();
        assert_eq!(a, b);
        let c = draw_shot_noise(12, 1.0, &s, 500.0, &f).unwrap();
        assert_ne!(a.gammas, c.gammas);
        assert!(a.gammas.windows(2).all(|w| w[1] > w[0]) && a.gammas[0] > 0.0);
        assert!(a.times.iter().all(|&t| (0.0..=1.0).contains(&t)));
        assert_eq!(a.rejects.as_ref().unwrap().len(), a.len());
        assert_eq!(a.alphas.as_ref().unwrap().len(), a.len());
        assert_eq!(a.directions.len(), a.len());
        assert!(*a.gammas.last().unwrap() <= a.gamma_level());
    }

    #[test]
    fn draw_length_is_poisson() {
        let s = sym(2.0);
        let n = 1000;
        let total: usize = (0..n)
            .map(|k| draw_for_path(5, k, 2.0, &s, 50.0, &DrawFeatures::default()).unwrap().len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 100.0).abs() < 3.0, "mean length {mean}");
    }

    #[test]
    fn gamma_increments_are_unit_exponential() {
        let s = sym(2.0);
        let draw = draw_shot_noise(21, 1.0, &s, 100_000.0, &DrawFeatures::default()).unwrap();
        let mut inc: Vec<f64> = std::iter::once(draw.gammas[0])
            .chain(draw.gammas.windows(2).map(|w| w[1] - w[0]))
            .collect();
        inc.truncate(100_000);
        let ks = crate::stats::ks_statistic(&inc, |x| 1.0 - (-x).exp());
        assert!(ks < crate::stats::ks_critical(inc.len(), 1e-3), "KS = {ks}");
    }

    #[test]
    fn b_t_examples() {
        assert!((lemma_centering(1.0, 1.0, 1.0) - EULER_GAMMA).abs() < 1e-15);
        assert_eq!(lemma_centering(0.5, 2.0, 1.0), 0.0);
        let z = crate::special::zeta(1.0 / 1.5);
        assert!((lemma_centering(1.5, 2.0, 3.0) - (1.5f64 / 6.0).powf(-1.0 / 1.5) * z).abs() < 1e-12);
    }

    #[test]
    fn power_sum_matches_direct() {
        for s in [0.5, 1.0 / 1.3, 1.0, 1.0 / 1.9, 2.0] {
            for n in [1u64, 10, 48, 49, 500, 12_345] {
                let direct: f64 = (1..=n).map(|i| (i as f64).powf(-s)).sum();
                assert!(((power_sum(s, n) - direct) / direct).abs() < 1e-13, "s {s} n {n}");
            }
        }
    }

    #[test]
    fn compensated_sum_approaches_b_t() {
        // sum_{i<=n} i^{-1/alpha} - n^{1-1/alpha}/(1-1/alpha) -> zeta(1/alpha)
        let s = 1.0 / 1.5;
        let n = 10_000_000u64;
        let lhs = power_sum(s, n) - (n as f64).powf(1.0 - s) / (1.0 - s);
        assert!((lhs - crate::special::zeta(s)).abs() < 1e-3);
    }

    #[test]
    fn single_term_stable_magnitude() {
        let d = one_term_draw(1.0, 0.5, 1.0, 1.0);
        let p = stable_path(0.5, &sym(2.0), &d, &[0.0, 0.25, 0.5, 1.0]).unwrap();
        assert_eq!(p.value(0), &[0.0]);
        assert_eq!(p.value(1), &[0.0]);
        assert_eq!(p.value(2), &[16.0]);
        assert_eq!(p.terminal(), &[16.0]);
        let m = mixed_path(&Mixture::point(0.5).unwrap(), &sym(2.0), &d, &[0.0, 1.0]).unwrap();
        assert_eq!(m.terminal(), &[16.0]);
    }

    #[test]
    fn printed_beta_branch_b_example() {
        let b1 = printed_beta_branch_b(1.5, 2.0, 1.0, 1);
        assert!((b1 - 3.0 * 0.75f64.powf(-2.0 / 3.0)).abs() < 1e-12);
        assert!((b1 - 3.6342).abs() < 1e-4);
        // saturated minimum
        assert_eq!(printed_beta_branch_b(1.5, 2.0, 1.0, 3), 0.0);
        // beta = 1 uses the logarithm
        let b = printed_beta_branch_b(1.0, 5.0, 1.0, 3);
        assert!((b - 5.0 * (3.0f64 / 2.0).ln()).abs() < 1e-12);
        let near = printed_beta_branch_b(1.0 + 1e-7, 5.0, 1.0, 3);
        assert!((near - b).abs() < 1e-5);
    }

    #[test]
    fn canonical_b_sum_equals_total_compensator() {
        let (a, b, m, t) = (1.3, 1.9, 1.0, 2.0);
        let total = canonical_alpha_branch_integral(a, b, m, t, 0.0, 50.0);
        let sum: f64 = (1..=50).map(|i| canonical_centering_b(a, b, m, t, i)).sum();
        assert!((total - sum).abs() < 1e-12 * total);
        // b_i vanish on the beta branch
        assert_eq!(canonical_centering_b(a, b, m, t, 1), 0.0);
        // alpha = 1 logarithmic antiderivative against quadrature
        let exact = canonical_alpha_branch_integral(1.0, 1.5, 1.0, 1.0, 0.0, 10.0);
        let num = integrate(|s: f64| canonical_magnitude(1.0, 1.5, s, 1.0), 1.0 / 1.5, 10.0, Tolerance::default())
            .unwrap()
            .value;
        assert!((exact - num).abs() < 1e-10);
    }

    #[test]
    fn general_b_two_routes_agree() {
        // r-substitution against direct quadrature in s of E[m V 1(m <= 1)]
        let sigma = SphericalMeasure::discrete(1, &[(vec![1.0], 2.0), (vec![-1.0], 1.0)]).unwrap();
        for q in [LayeredQ::canonical(1.3, 1.9, 3.0).unwrap(), LayeredQ::blend(0.7, 1.4, 2.0, 1).unwrap()] {
            let t = 1.5;
            let mt = sigma.total_mass() * t;
            for i in [1u64, 2, 5, 40] {
                let b = general_centering_b(&q, &sigma, t, i).unwrap()[0];
                let direct = integrate(
                    |s: f64| {
                        let mut acc = 0.0;
                        for (xi, w) in sigma.atoms() {
                            let r = q.inverse_tail(s / mt, xi).unwrap();
                            if r <= 1.0 {
                                acc += w / sigma.total_mass() * r * xi[0];
                            }
                        }
                        acc
                    },
                    (i - 1) as f64,
                    i as f64,
                    Tolerance::new(1e-11, 1e-10),
                )
                .unwrap()
                .value;
                assert!((b - direct).abs() < 1e-7, "i {i}: {b} vs {direct}");
            }
        }
    }

    #[test]
    fn general_matches_canonical_on_same_draw() {
        let sigma = SphericalMeasure::discrete(1, &[(vec![1.0], 1.5), (vec![-1.0], 0.5)]).unwrap();
        let draw = draw_shot_noise(4, 1.0, &sigma, 2000.0, &DrawFeatures::default()).unwrap();
        let grid = uniform_grid(1.0, 50);
        let q = LayeredQ::canonical(1.3, 1.9, sigma.total_mass()).unwrap();
        let g = layered_path_general(&q, &sigma, &draw, &grid).unwrap();
        let c = layered_path_canonical(1.3, 1.9, &sigma, &draw, &grid).unwrap();
        assert_eq!(g.num_jumps(), c.num_jumps());
        for k in 0..g.num_jumps() {
            let (a, b) = (g.jump(k).1[0], c.jump(k).1[0]);
            assert!((a - b).abs() <= 1e-12 * a.abs(), "jump {k}: {a} vs {b}");
        }
        assert!((g.drift_rate[0] - c.drift_rate[0]).abs() < 1e-9 * c.drift_rate[0].abs().max(1.0));
        for gi in 0..grid.len() {
            assert!((g.value(gi)[0] - c.value(gi)[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_general_path_is_raw_sum() {
        let sigma = sym(2.0);
        let draw = draw_shot_noise(8, 1.0, &sigma, 300.0, &DrawFeatures::default()).unwrap();
        let q = LayeredQ::blend(1.1, 1.7, 2.0, 1).unwrap();
        let p = layered_path_general(&q, &sigma, &draw, &[0.0, 1.0]).unwrap();
        assert_eq!(p.drift_rate, vec![0.0]);
        let raw: f64 = p.jumps().map(|(_, v)| v[0]).sum();
        assert!((p.terminal()[0] - raw).abs() < 1e-9 * raw.abs().max(1.0));
        for i in 1..4 {
            assert_eq!(general_centering_b(&q, &sigma, 1.0, i).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn coupling_shares_times_and_directions() {
        let sigma = SphericalMeasure::discrete(2, &[(vec![1.0, 0.0], 1.0), (vec![0.0, -1.0], 1.0), (vec![-1.0, 1.0], 1.0)]).unwrap();
        let draw = draw_shot_noise(3, 1.0, &sigma, 300.0, &DrawFeatures::default()).unwrap();
        let grid = uniform_grid(1.0, 10);
        let s = stable_path(1.3, &sigma, &draw, &grid).unwrap();
        let l = layered_path_canonical(1.3, 1.9, &sigma, &draw, &grid).unwrap();
        assert_eq!(s.jump_times, l.jump_times);
        for k in 0..s.num_jumps() {
            let (a, b) = (s.jump(k).1, l.jump(k).1);
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            for j in 0..2 {
                assert!((a[j] / na - b[j] / nb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruction_is_exact() {
        let sigma = SphericalMeasure::discrete(2, &[(vec![1.0, 0.0], 2.0), (vec![0.0, 1.0], 1.0), (vec![-1.0, -1.0], 1.0)]).unwrap();
        let f = DrawFeatures { gaussian_remainder: true, ..Default::default() };
        let draw = draw_shot_noise(9, 2.0, &sigma, 1000.0, &f).unwrap();
        let grid = uniform_grid(2.0, 37);
        for p in [
            stable_path(1.5, &sigma, &draw, &grid).unwrap(),
            stable_path(0.7, &sigma, &draw, &grid).unwrap(),
            layered_path_canonical(1.3, 1.9, &sigma, &draw, &grid).unwrap(),
        ] {
            assert!(p.gaussian.is_some());
            for g in 0..grid.len() {
                assert_eq!(p.reconstruct(g), p.value(g).to_vec());
            }
        }
    }

    #[test]
    fn truncation_bound() {
        // largest discarded canonical jump is below inverse_tail at the cap
        let q = LayeredQ::canonical(1.3, 1.9, 2.0).unwrap();
        let sigma = sym(2.0);
        let eps = q.inverse_tail(1e4 / 2.0, &[1.0]).unwrap();
        assert!(eps < 1e-2);
        let draw = draw_shot_noise(1, 1.0, &sigma, 1e4, &DrawFeatures::default()).unwrap();
        let p = layered_path_canonical(1.3, 1.9, &sigma, &draw, &[0.0, 1.0]).unwrap();
        let smallest = p.jumps().map(|(_, v)| v[0].abs()).fold(f64::INFINITY, f64::min);
        assert!(smallest >= canonical_magnitude(1.3, 1.9, draw.gamma_level(), 1.0));
    }

    #[test]
    fn rejection_acceptance() {
        assert_eq!(rejection_ratio(1.3, 1.9, RejectionBase::Inner, 0.7), 1.0);
        assert!((rejection_ratio(1.3, 1.9, RejectionBase::Inner, 2.0) - 0.659_753_955_386_447_1).abs() < 1e-12);
        assert_eq!(rejection_ratio(1.3, 1.9, RejectionBase::Outer, 3.0), 1.0);
        let sigma = sym(2.0);
        let draw = draw_shot_noise(1, 1.0, &sigma, 100.0, &DrawFeatures { rejects: true, ..Default::default() }).unwrap();
        assert!(layered_path_rejection(1.9, 1.3, &sigma, &draw, RejectionBase::Inner, &[0.0, 1.0]).is_err());
        let asym = SphericalMeasure::discrete(1, &[(vec![1.0], 1.0)]).unwrap();
        assert!(layered_path_rejection(1.3, 1.9, &asym, &draw, RejectionBase::Inner, &[0.0, 1.0]).is_err());
        let plain = draw_shot_noise(1, 1.0, &sigma, 100.0, &DrawFeatures::default()).unwrap();
        assert!(layered_path_rejection(1.3, 1.9, &sigma, &plain, RejectionBase::Inner, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn point_mixture_equals_stable_termwise() {
        let sigma = SphericalMeasure::discrete(2, &[(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 1.0), (vec![0.0, 1.0], 0.5), (vec![0.0, -1.0], 0.5)]).unwrap();
        let mix = Mixture::point(1.3).unwrap();
        let draw = draw_shot_noise(2, 1.0, &sigma, 2000.0, &DrawFeatures { mix: Some(mix.clone()), ..Default::default() }).unwrap();
        let grid = uniform_grid(1.0, 20);
        let s = stable_path(1.3, &sigma, &draw, &grid).unwrap();
        let m = mixed_path(&mix, &sigma, &draw, &grid).unwrap();
        assert_eq!(s.jump_vectors, m.jump_vectors);
        assert_eq!(s.values, m.values);
    }

    #[test]
    fn mixture_frequencies() {
        let mix = Mixture::discrete(&[(0.5, 1.0), (1.5, 1.0)]).unwrap();
        let sigma = sym(2.0);
        let draw = draw_shot_noise(6, 1.0, &sigma, 100_000.0, &DrawFeatures { mix: Some(mix), ..Default::default() }).unwrap();
        let a = draw.alphas.as_ref().unwrap();
        let n = a.len().min(100_000);
        let f = a[..n].iter().filter(|&&x| x == 0.5).count() as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.01);
        assert!(Mixture::uniform(0.0, 1.0).is_err());
        assert!(Mixture::discrete(&[(2.0, 1.0)]).is_err());
        assert!(mixed_path(&Mixture::point(1.0).unwrap(), &SphericalMeasure::discrete(1, &[(vec![1.0], 1.0)]).unwrap(), &draw, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn grid_validation() {
        let sigma = sym(2.0);
        let draw = draw_shot_noise(1, 1.0, &sigma, 10.0, &DrawFeatures::default()).unwrap();
        assert!(stable_path(1.5, &sigma, &draw, &[0.0]).is_err());
        assert!(stable_path(1.5, &sigma, &draw, &[0.1, 1.0]).is_err());
        assert!(stable_path(1.5, &sigma, &draw, &[0.0, 2.0]).is_err());
        assert!(stable_path(2.0, &sigma, &draw, &[0.0, 1.0]).is_err());
        assert_eq!(uniform_grid(3.0, 300).len(), 301);
    }
}
