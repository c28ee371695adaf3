//! Experiment drivers shared by the command line tool and the acceptance
//! suite: process specifications, batch simulation, limit checks,
//! importance-sampling checks, tail estimates and the self-test.

use crate::error::{invalid, Error, Result};
use crate::girsanov::{
    importance_samples, mean_and_se, reweighted_expectation, u_canonical, u_from_jumps, levy_gap, default_eps_schedule,
    DensityRatio, MeasureTag,
};
use crate::limits::{gaussian_covariance, rescale_path, LimitSpec};
use crate::parallel::{par_map_paths, par_map_paths_with};
use crate::qfunc::LayeredQ;
use crate::series::{
    canonical_magnitude, canonical_series_path, draw_for_path, lemma_centering_with, layered_path_canonical,
    layered_path_general, layered_path_rejection, mixed_path, stable_magnitude, stable_path, uniform_grid,
    DrawFeatures, Mixture, RejectionBase, SamplePath,
};
use crate::special::{zeta, EULER_GAMMA};
use crate::spherical::SphericalMeasure;
use crate::stats::{
    cf_distance, default_grid, hill_bootstrap_ci, hill_default_k, hill_tail_index, isotropic_constant, magnitudes,
    median, p_variation, CfTarget,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Radial density of a layered process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QSpec {
    /// Canonical two-layer q normalized by sigma(S).
    Canonical,
    /// The blend density with normalization `mass`.
    Blend { mass: f64 },
}

impl FromStr for QSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "canonical" {
            return Ok(QSpec::Canonical);
        }
        if let Some(m) = s.strip_prefix("blend:") {
            let mass: f64 = m.trim().parse().map_err(|_| Error::Parse(format!("bad blend mass '{m}'")))?;
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(Error::Parse(format!("blend mass must be positive, got {mass}")));
            }
            return Ok(QSpec::Blend { mass });
        }
        Err(Error::Parse(format!("unknown q '{s}' (expected canonical or blend:<mass>)")))
    }
}

impl fmt::Display for QSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QSpec::Canonical => write!(f, "canonical"),
            QSpec::Blend { mass } => write!(f, "blend:{mass}"),
        }
    }
}

impl QSpec {
    pub fn build(&self, alpha: f64, beta: f64, sigma: &SphericalMeasure) -> Result<LayeredQ> {
        match self {
            QSpec::Canonical => LayeredQ::canonical(alpha, beta, sigma.total_mass()),
            QSpec::Blend { mass } => LayeredQ::blend(alpha, beta, *mass, sigma.dim()),
        }
    }
}

/// Parses `point:a`, `discrete:a1:p1,a2:p2,...` or `uniform:lo:hi`.
pub fn parse_mixture(s: &str) -> Result<Mixture> {
    let s = s.trim();
    let num = |x: &str| -> Result<f64> { x.trim().parse().map_err(|_| Error::Parse(format!("bad number '{x}' in mixture"))) };
    if let Some(a) = s.strip_prefix("point:") {
        return Mixture::point(num(a)?);
    }
    if let Some(rest) = s.strip_prefix("uniform:") {
        let p: Vec<&str> = rest.split(':').collect();
        if p.len() != 2 {
            return Err(Error::Parse(format!("uniform mixture needs lo:hi, got '{rest}'")));
        }
        return Mixture::uniform(num(p[0])?, num(p[1])?);
    }
    if let Some(rest) = s.strip_prefix("discrete:") {
        let mut atoms = Vec::new();
        for part in rest.split(',') {
            let p: Vec<&str> = part.split(':').collect();
            if p.len() != 2 {
                return Err(Error::Parse(format!("mixture atom must be alpha:weight, got '{part}'")));
            }
            atoms.push((num(p[0])?, num(p[1])?));
        }
        return Mixture::discrete(&atoms);
    }
    Err(Error::Parse(format!("unknown mixture '{s}'")))
}

pub fn mixture_to_string(m: &Mixture) -> String {
    match m {
        Mixture::Discrete(a) if a.len() == 1 => format!("point:{}", a[0].0),
        Mixture::Discrete(a) => {
            let parts: Vec<String> = a.iter().map(|(x, p)| format!("{x}:{p}")).collect();
            format!("discrete:{}", parts.join(","))
        }
        Mixture::Uniform { lo, hi } => format!("uniform:{lo}:{hi}"),
    }
}

/// A process that can be simulated from a shot-noise draw.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessSpec {
    Stable { alpha: f64 },
    Layered { alpha: f64, beta: f64, q: QSpec },
    LayeredRejection { alpha: f64, beta: f64, base: RejectionBase },
    Mixed { mix: Mixture },
}

impl ProcessSpec {
    pub fn features(&self) -> DrawFeatures {
        match self {
            ProcessSpec::LayeredRejection { .. } => DrawFeatures { rejects: true, ..Default::default() },
            ProcessSpec::Mixed { mix } => DrawFeatures { mix: Some(mix.clone()), ..Default::default() },
            _ => DrawFeatures::default(),
        }
    }

    /// Short name used in file names.
    pub fn tag(&self) -> String {
        match self {
            ProcessSpec::Stable { alpha } => format!("stable_a{alpha}"),
            ProcessSpec::Layered { alpha, beta, .. } => format!("layered_a{alpha}_b{beta}"),
            ProcessSpec::LayeredRejection { alpha, beta, base } => {
                let b = match base {
                    RejectionBase::Inner => "inner",
                    RejectionBase::Outer => "outer",
                };
                format!("rejection_{b}_a{alpha}_b{beta}")
            }
            ProcessSpec::Mixed { .. } => "mixed".to_string(),
        }
    }

    pub fn path(&self, sigma: &SphericalMeasure, draw: &crate::series::ShotNoiseDraw, grid: &[f64]) -> Result<SamplePath> {
        match self {
            ProcessSpec::Stable { alpha } => stable_path(*alpha, sigma, draw, grid),
            ProcessSpec::Layered { alpha, beta, q: QSpec::Canonical } => {
                layered_path_canonical(*alpha, *beta, sigma, draw, grid)
            }
            ProcessSpec::Layered { alpha, beta, q } => layered_path_general(&q.build(*alpha, *beta, sigma)?, sigma, draw, grid),
            ProcessSpec::LayeredRejection { alpha, beta, base } => {
                layered_path_rejection(*alpha, *beta, sigma, draw, *base, grid)
            }
            ProcessSpec::Mixed { mix } => mixed_path(mix, sigma, draw, grid),
        }
    }

    /// Largest magnitude a discarded term can have.
    pub fn truncation_bound(&self, sigma: &SphericalMeasure, horizon: f64, gamma_cap: f64) -> Result<f64> {
        let level = gamma_cap * horizon;
        let mass_t = sigma.total_mass() * horizon;
        Ok(match self {
            ProcessSpec::Stable { alpha } => stable_magnitude(*alpha, level, mass_t),
            ProcessSpec::Layered { alpha, beta, q: QSpec::Canonical } => canonical_magnitude(*alpha, *beta, level, horizon),
            ProcessSpec::Layered { alpha, beta, q } => {
                let qq = q.build(*alpha, *beta, sigma)?;
                let mut m: f64 = 0.0;
                for xi in sigma.probe_directions() {
                    m = m.max(qq.inverse_tail(level / mass_t, &xi)?);
                }
                m
            }
            ProcessSpec::LayeredRejection { alpha, beta, base } => {
                let idx = if *base == RejectionBase::Inner { *alpha } else { *beta };
                stable_magnitude(idx, level, horizon)
            }
            ProcessSpec::Mixed { mix } => {
                let lo = match mix {
                    Mixture::Discrete(a) => a.iter().map(|x| x.0).fold(2.0, f64::min),
                    Mixture::Uniform { lo, .. } => *lo,
                };
                let hi = match mix {
                    Mixture::Discrete(a) => a.iter().map(|x| x.0).fold(0.0, f64::max),
                    Mixture::Uniform { hi, .. } => *hi,
                };
                stable_magnitude(lo, level, mass_t).max(stable_magnitude(hi, level, mass_t))
            }
        })
    }

    /// Exact characteristic function of X_t when one is available.
    pub fn cf_target(&self, sigma: &SphericalMeasure, t: f64) -> Result<Option<CfTarget>> {
        let d = sigma.dim();
        let st = sigma.reweighted(|_| t)?;
        Ok(match self {
            ProcessSpec::Stable { alpha } => Some(CfTarget::Stable { alpha: *alpha, sigma: st, eta: vec![0.0; d] }),
            ProcessSpec::Layered { alpha, beta, q } => {
                Some(CfTarget::LayeredQuadrature { q: q.build(*alpha, *beta, sigma)?, sigma: st, eta: vec![0.0; d] })
            }
            ProcessSpec::LayeredRejection { alpha, beta, .. } => Some(CfTarget::LayeredQuadrature {
                q: LayeredQ::canonical(*alpha, *beta, sigma.total_mass())?,
                sigma: st,
                eta: vec![0.0; d],
            }),
            ProcessSpec::Mixed { .. } => None,
        })
    }
}

/// Simulation settings shared by batch drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub gamma_cap: f64,
    /// Add the Brownian approximation of the discarded small jumps.
    pub gaussian_remainder: bool,
}

impl Batch {
    pub fn new(horizon: f64, paths: usize, seed: u64, gamma_cap: f64) -> Self {
        Batch { horizon, paths, seed, gamma_cap, gaussian_remainder: false }
    }

    pub fn with_gaussian_remainder(self, on: bool) -> Self {
        Batch { gaussian_remainder: on, ..self }
    }

    fn features(&self, spec: &ProcessSpec) -> DrawFeatures {
        DrawFeatures { gaussian_remainder: self.gaussian_remainder, ..spec.features() }
    }
}

/// Paths 0..n on a common grid.
pub fn simulate_paths(spec: &ProcessSpec, sigma: &SphericalMeasure, batch: &Batch, grid: &[f64]) -> Result<Vec<SamplePath>> {
    let features = batch.features(spec);
    par_map_paths(batch.paths, |i| {
        let draw = draw_for_path(batch.seed, i as u64, batch.horizon, sigma, batch.gamma_cap, &features)?;
        spec.path(sigma, &draw, grid)
    })
    .into_iter()
    .collect()
}

/// Terminal values X_T of n paths, stored flat.
pub fn terminal_samples(spec: &ProcessSpec, sigma: &SphericalMeasure, batch: &Batch) -> Result<Vec<f64>> {
    let grid = [0.0, batch.horizon];
    let features = batch.features(spec);
    let out: Result<Vec<Vec<f64>>> = par_map_paths(batch.paths, |i| {
        let draw = draw_for_path(batch.seed, i as u64, batch.horizon, sigma, batch.gamma_cap, &features)?;
        Ok(spec.path(sigma, &draw, &grid)?.terminal().to_vec())
    })
    .into_iter()
    .collect();
    Ok(out?.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitKind {
    Short,
    Long,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub mode: String,
    pub h: f64,
    pub index: f64,
    pub eta: Vec<f64>,
    pub b: Vec<f64>,
    pub paths: usize,
    pub gamma_cap_effective: f64,
    pub distance: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Sample covariance of the rescaled terminals (Brownian limit only).
    pub sample_covariance: Option<Vec<f64>>,
    pub target_covariance: Option<Vec<f64>>,
}

/// Simulates h^{-1/index}(X_h + h eta) -/+ b for n paths of the layered
/// process and compares its ECF with the limit law at t = 1. The series is
/// truncated at gamma_cap/h per unit time so that the rescaled process
/// keeps a comparable number of jumps.
#[allow(clippy::too_many_arguments)]
pub fn limit_check(
    alpha: f64,
    beta: f64,
    q: QSpec,
    sigma: &SphericalMeasure,
    kind: LimitKind,
    h: f64,
    batch: &Batch,
    y_grid: &[Vec<f64>],
    threshold: f64,
) -> Result<LimitReport> {
    let lq = q.build(alpha, beta, sigma)?;
    let spec = match kind {
        LimitKind::Short => LimitSpec::short(&lq, sigma, h)?,
        LimitKind::Long => LimitSpec::long(&lq, sigma, h)?,
    };
    let process = ProcessSpec::Layered { alpha, beta, q };
    let cap = batch.gamma_cap / h;
    let grid = [0.0, h];
    let d = sigma.dim();
    let features = batch.features(&process);
    let values: Result<Vec<Vec<f64>>> = par_map_paths(batch.paths, |i| {
        let draw = draw_for_path(batch.seed, i as u64, h, sigma, cap, &features)?;
        let p = process.path(sigma, &draw, &grid)?;
        Ok(rescale_path(&p, &spec)?.terminal().to_vec())
    })
    .into_iter()
    .collect();
    let samples = values?.concat();
    let target = spec.target.cf_target(1.0)?;
    let distance = cf_distance(&samples, d, &target, y_grid)?;
    let (sample_covariance, target_covariance) = match &target {
        CfTarget::Gaussian { cov } => (
            Some(crate::stats::sample_covariance(&samples, d).iter().copied().collect()),
            Some(cov.iter().copied().collect()),
        ),
        _ => (None, None),
    };
    Ok(LimitReport {
        mode: format!("{:?}", spec.mode),
        h,
        index: spec.index,
        eta: spec.eta.iter().copied().collect(),
        b: spec.b.iter().copied().collect(),
        paths: batch.paths,
        gamma_cap_effective: cap,
        distance,
        threshold,
        pass: distance < threshold,
        sample_covariance,
        target_covariance,
    })
}

/// Path functionals for importance-sampling checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Functional {
    /// 1(max over the grid of |X_t| > c).
    SupExceeds(f64),
    /// 1(|X_T| > c).
    TerminalExceeds(f64),
    /// min(1, |X_T|), bounded and Lipschitz.
    ClippedNorm,
    One,
}

impl FromStr for Functional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let level = |x: &str| -> Result<f64> { x.parse().map_err(|_| Error::Parse(format!("bad level '{x}'"))) };
        if let Some(c) = s.strip_prefix("sup-exceeds:") {
            return Ok(Functional::SupExceeds(level(c)?));
        }
        if let Some(c) = s.strip_prefix("terminal-exceeds:") {
            return Ok(Functional::TerminalExceeds(level(c)?));
        }
        match s {
            "clipped-norm" => Ok(Functional::ClippedNorm),
            "one" => Ok(Functional::One),
            _ => Err(Error::Parse(format!("unknown functional '{s}'"))),
        }
    }
}

impl Functional {
    pub fn eval(&self, p: &SamplePath) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        match self {
            Functional::SupExceeds(c) => {
                let hit = (0..p.grid.len()).any(|g| norm(p.value(g)) > *c);
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            Functional::TerminalExceeds(c) => {
                if norm(p.terminal()) > *c {
                    1.0
                } else {
                    0.0
                }
            }
            Functional::ClippedNorm => norm(p.terminal()).min(1.0),
            Functional::One => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnReport {
    pub paths: usize,
    pub mean_weight: f64,
    pub mean_weight_se: f64,
    pub mean_inverse_weight: f64,
    pub mean_inverse_weight_se: f64,
    pub reweighted: f64,
    pub reweighted_se: f64,
    pub direct: f64,
    pub direct_se: f64,
    pub clipped: usize,
    /// |reweighted - direct| / sqrt(se_r^2 + se_d^2).
    pub z: f64,
    pub weights_normalized: bool,
    pub estimates_agree: bool,
}

/// Coupled check of the change of measure for the canonical q: e^{U'_T}
/// on stable paths and e^{-U''_T} on layered paths average to 1, and the
/// reweighted stable-path estimate of E f(X) matches direct layered paths
/// drawn from an independent seed.
#[allow(clippy::too_many_arguments)]
pub fn rn_check(
    alpha: f64,
    beta: f64,
    sigma: &SphericalMeasure,
    batch: &Batch,
    grid_n: usize,
    functional: Functional,
) -> Result<RnReport> {
    if alpha == beta {
        return invalid("alpha = beta makes the change of measure trivial");
    }
    if batch.gaussian_remainder {
        return invalid("the density process is defined for pure-jump paths; disable the Gaussian remainder");
    }
    let grid = uniform_grid(batch.horizon, grid_n);
    let n = batch.paths;
    let p = importance_samples(alpha, beta, sigma, batch.horizon, batch.gamma_cap, &grid, n, batch.seed, MeasureTag::P)?;
    let w = reweighted_expectation(&p, |_| 1.0)?;
    let r = reweighted_expectation(&p, |x| functional.eval(x))?;
    drop(p);
    let qs = importance_samples(alpha, beta, sigma, batch.horizon, batch.gamma_cap, &grid, n, batch.seed, MeasureTag::Q)?;
    let wi = reweighted_expectation(&qs, |_| 1.0)?;
    drop(qs);
    // direct layered paths with the same Levy measure, independent seed
    let mass = sigma.total_mass();
    let direct_seed = batch.seed ^ 0x9e37_79b9_7f4a_7c15;
    let direct: Result<Vec<f64>> = par_map_paths(n, |i| {
        let draw = draw_for_path(direct_seed, i as u64, batch.horizon, sigma, batch.gamma_cap, &DrawFeatures::default())?;
        Ok(functional.eval(&canonical_series_path(alpha, beta, mass, sigma, &draw, &grid)?))
    })
    .into_iter()
    .collect();
    let (dm, dse) = mean_and_se(&direct?);
    let z = (r.estimate - dm).abs() / (r.std_error.powi(2) + dse.powi(2)).sqrt();
    let weights_normalized = (w.estimate - 1.0).abs() < 4.0 * w.std_error && (wi.estimate - 1.0).abs() < 4.0 * wi.std_error;
    Ok(RnReport {
        paths: n,
        mean_weight: w.estimate,
        mean_weight_se: w.std_error,
        mean_inverse_weight: wi.estimate,
        mean_inverse_weight_se: wi.std_error,
        reweighted: r.estimate,
        reweighted_se: r.std_error,
        direct: dm,
        direct_se: dse,
        clipped: w.clipped + r.clipped + wi.clipped,
        z,
        weights_normalized,
        estimates_agree: z < 4.0 || (r.std_error == 0.0 && dse == 0.0 && r.estimate == dm),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub paths: usize,
    pub k: usize,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

/// Hill estimate of the tail index of |X_T| with a percentile bootstrap CI.
pub fn tail_check(spec: &ProcessSpec, sigma: &SphericalMeasure, batch: &Batch, k: Option<usize>) -> Result<TailReport> {
    if batch.paths < 1000 {
        return invalid(format!("tail estimation needs at least 1000 paths, got {}", batch.paths));
    }
    let k = k.unwrap_or_else(|| hill_default_k(batch.paths));
    if k == 0 || k >= batch.paths {
        return invalid(format!("Hill k = {k} must satisfy 1 <= k < N = {}", batch.paths));
    }
    let x = terminal_samples(spec, sigma, batch)?;
    let m: Vec<f64> = magnitudes(&x, sigma.dim()).into_iter().filter(|v| *v > 0.0).collect();
    let estimate = hill_tail_index(&m, k)?;
    let (ci_low, ci_high) = hill_bootstrap_ci(&m, k, 200, 0.95, batch.seed ^ 0x5bd1_e995)?;
    Ok(TailReport { paths: batch.paths, k, estimate, ci_low, ci_high, level: 0.95 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub p: f64,
    /// Median p-variation over paths at base, x4 and x16 grid refinement.
    pub medians: [f64; 3],
    pub ratio4: f64,
    pub ratio16: f64,
}

/// Median grid p-variation of layered paths on a base grid of `base_n`
/// intervals and its x4 and x16 refinements (subsampled from one fine grid).
pub fn variation_check(
    alpha: f64,
    beta: f64,
    sigma: &SphericalMeasure,
    batch: &Batch,
    base_n: usize,
    ps: &[f64],
) -> Result<Vec<VariationReport>> {
    let fine = uniform_grid(batch.horizon, base_n * 16);
    let spec = ProcessSpec::Layered { alpha, beta, q: QSpec::Canonical };
    let features = batch.features(&spec);
    let per_path: Result<Vec<Vec<[f64; 3]>>> = par_map_paths(batch.paths, |i| {
        let draw = draw_for_path(batch.seed, i as u64, batch.horizon, sigma, batch.gamma_cap, &features)?;
        let path = spec.path(sigma, &draw, &fine)?;
        let levels = [path.subsample(16), path.subsample(4), path];
        ps.iter()
            .map(|&p| Ok([p_variation(&levels[0], p)?, p_variation(&levels[1], p)?, p_variation(&levels[2], p)?]))
            .collect()
    })
    .into_iter()
    .collect();
    let per_path = per_path?;
    Ok(ps
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let col = |l: usize| median(&per_path.iter().map(|v| v[j][l]).collect::<Vec<_>>());
            let medians = [col(0), col(1), col(2)];
            VariationReport { p, medians, ratio4: medians[1] / medians[0], ratio16: medians[2] / medians[0] }
        })
        .collect())
}

/// One line of the self-test table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.to_string(), value, threshold, pass: value.is_finite() && value < threshold }
    }

    /// threshold - value, positive when passing.
    pub fn margin(&self) -> f64 {
        self.threshold - self.value
    }
}

/// zeta(s) for s in (0,1) from partial sums with Euler-Maclaurin end
/// corrections; independent of the eta-series implementation.
fn zeta_by_partial_sums(s: f64) -> f64 {
    let n = 100_000u64;
    let nf = n as f64;
    let mut acc = 0.0;
    for i in (1..=n).rev() {
        acc += (i as f64).powf(-s);
    }
    acc - nf.powf(1.0 - s) / (1.0 - s) - 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
}

/// Invariant suite at reduced sample sizes. `zeta_fn` replaces the zeta
/// function in the centering constant (a negative-control hook).
pub fn selftest(zeta_fn: &(dyn Fn(f64) -> f64 + Sync)) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let sym = SphericalMeasure::discrete(1, &[(vec![1.0], 1.0), (vec![-1.0], 1.0)])?;

    // centering constant b_T against partial sums of the series it stands for
    let mut err: f64 = 0.0;
    for (a, m, t) in [(1.3f64, 2.0f64, 1.0f64), (1.7, 1.0, 3.0), (1.5, 0.5, 2.0)] {
        let s = 1.0 / a;
        let want = (a / (m * t)).powf(-s) * zeta_by_partial_sums(s);
        let got = lemma_centering_with(a, m, t, zeta_fn);
        err = err.max(((got - want) / want).abs());
    }
    let g = lemma_centering_with(1.0, 1.0, 1.0, zeta_fn);
    err = err.max((g - EULER_GAMMA).abs());
    out.push(Check::below("b_T centering constant (relative error)", err, 1e-9));

    let z = (zeta(2.0 / 3.0) + 2.447_580_736_233_658).abs();
    out.push(Check::below("zeta(2/3) frozen value", z, 1e-12));

    // inverse tail round trip
    let mut worst: f64 = 0.0;
    for q in [LayeredQ::canonical(1.3, 1.9, 2.0)?, LayeredQ::blend(1.3, 1.9, 2.0, 1)?] {
        for k in 0..200 {
            let r = 10f64.powf(-6.0 + 12.0 * k as f64 / 199.0);
            let back = q.inverse_tail(q.tail_integral(r, &[1.0])?, &[1.0])?;
            worst = worst.max((back - r).abs() / r);
        }
    }
    out.push(Check::below("inverse tail round trip (relative)", worst, 1e-8));

    // marginal laws at reduced N
    let n = 2000;
    let thr = 6.0 / (n as f64).sqrt();
    let grid = default_grid(1);
    for spec in [ProcessSpec::Stable { alpha: 1.5 }, ProcessSpec::Layered { alpha: 1.3, beta: 1.9, q: QSpec::Canonical }] {
        let batch = Batch::new(1.0, n, 2024, 2000.0);
        let x = terminal_samples(&spec, &sym, &batch)?;
        let target = spec.cf_target(&sym, 1.0)?.expect("target");
        let d = cf_distance(&x, 1, &target, &grid)?;
        out.push(Check::below(&format!("{} ECF distance", spec.tag()), d, thr));
    }

    // jump-sum U against the closed form
    let q = LayeredQ::canonical(1.3, 1.9, 1.0)?;
    let ratio = DensityRatio::new(q.clone());
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let draw = draw_for_path(7, i, 1.0, &sym, 500.0, &DrawFeatures::default())?;
        let p = canonical_series_path(1.3, 1.9, 2.0, &sym, &draw, &[0.0, 1.0])?;
        let u = u_from_jumps(&ratio, p.jumps(), |e| levy_gap(&q, &sym, e), 1.0, &default_eps_schedule())?;
        worst = worst.max((u.value - u_canonical(1.3, 1.9, 2.0, p.jumps(), 1.0)).abs());
    }
    out.push(Check::below("U jump sum vs closed form", worst, 1e-8));

    // density-process normalization
    let w = importance_samples(1.3, 1.9, &sym, 1.0, 200.0, &[0.0, 1.0], n, 99, MeasureTag::P)?;
    let r = reweighted_expectation(&w, |_| 1.0)?;
    out.push(Check::below("E exp(U'_T) - 1 in standard errors", (r.estimate - 1.0).abs() / r.std_error, 4.0));

    // degenerate mixture equals the stable series
    let mix = Mixture::point(1.2)?;
    let features = DrawFeatures { mix: Some(mix.clone()), ..Default::default() };
    let draw = draw_for_path(5, 0, 1.0, &sym, 500.0, &features)?;
    let a = mixed_path(&mix, &sym, &draw, &[0.0, 0.5, 1.0])?;
    let b = stable_path(1.2, &sym, &draw, &[0.0, 0.5, 1.0])?;
    let diff = if a.jump_vectors == b.jump_vectors { 0.0 } else { 1.0 };
    out.push(Check::below("mixed point mass equals stable series", diff, 0.5));

    // reconstruction and thread-count independence
    let spec = ProcessSpec::Layered { alpha: 1.3, beta: 1.9, q: QSpec::Canonical };
    let draw = draw_for_path(3, 0, 2.0, &sym, 1000.0, &DrawFeatures::default())?;
    let p = spec.path(&sym, &draw, &uniform_grid(2.0, 64))?;
    let rec = (0..p.grid.len()).map(|g| (p.reconstruct(g)[0] - p.value(g)[0]).abs()).fold(0.0, f64::max);
    out.push(Check::below("path reconstruction", rec, 1e-300));
    let run = |threads: usize| -> Vec<f64> {
        par_map_paths_with(threads, 64, |i| {
            let draw = draw_for_path(11, i as u64, 1.0, &sym, 200.0, &DrawFeatures::default()).expect("draw");
            spec.path(&sym, &draw, &[0.0, 1.0]).expect("path").terminal()[0]
        })
    };
    let same = run(1).iter().zip(run(3).iter()).all(|(a, b)| a.to_bits() == b.to_bits());
    out.push(Check::below("thread-count independence", if same { 0.0 } else { 1.0 }, 0.5));

    // limit constants
    let c = isotropic_constant(1.999, 2, 2.0 * (2.0 - 1.999));
    out.push(Check::below("c_(beta,d) near beta = 2", (c - 0.5).abs(), 2e-3));
    let cov = gaussian_covariance(&LayeredQ::canonical(1.1, 2.5, 2.0)?, &sym)?;
    out.push(Check::below("Gaussian limit covariance", (cov[(0, 0)] - 28.0 / 9.0).abs(), 1e-12));
    Ok(out)
}

/// The default self-test with the library zeta.
pub fn selftest_default() -> Result<Vec<Check>> {
    selftest(&zeta)
}
