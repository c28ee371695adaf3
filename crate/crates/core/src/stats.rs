//! Characteristic-function oracles, empirical CF distances, tail-index and
//! moment estimators, p-variation and Kolmogorov-Smirnov utilities.

use crate::error::{invalid, Error, Result};
use crate::parallel::path_rng;
use crate::qfunc::LayeredQ;
use crate::quad::{integrate, integrate_log, Tolerance};
use crate::series::SamplePath;
use crate::special::{gamma, ln_gamma, EULER_GAMMA};
use crate::spherical::SphericalMeasure;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// c_alpha = |Gamma(-alpha) cos(pi alpha/2)|, with c_1 = pi/2.
pub fn c_alpha(alpha: f64) -> f64 {
    if alpha == 1.0 {
        PI / 2.0
    } else {
        (gamma(-alpha) * (PI * alpha / 2.0).cos()).abs()
    }
}

/// Characteristic function at y of the stable law with spherical measure
/// sigma and shift eta (Levy-Khintchine center 1(|z| <= 1)).
pub fn stable_cf(alpha: f64, sigma: &SphericalMeasure, eta: &[f64], y: &[f64]) -> Result<Complex64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return invalid(format!("alpha = {alpha} must lie in (0,2)"));
    }
    if y.iter().all(|v| *v == 0.0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let m1 = sigma.first_moment();
    let ca = c_alpha(alpha);
    let (tau, integral) = if alpha != 1.0 {
        let tan = (PI * alpha / 2.0).tan();
        let tau: Vec<f64> = (0..y.len()).map(|j| eta[j] - m1[j] / (1.0 - alpha)).collect();
        let v = sigma.integrate_projection(y, |k, _| {
            Complex64::new(k.abs().powf(alpha), -k.abs().powf(alpha) * tan * k.signum())
        })?;
        (tau, v)
    } else {
        let tau: Vec<f64> = (0..y.len()).map(|j| eta[j] + (1.0 - EULER_GAMMA) * m1[j]).collect();
        let v = sigma.integrate_projection(y, |k, _| {
            let l = if k == 0.0 { 0.0 } else { k * k.abs().ln() };
            Complex64::new(k.abs(), 2.0 / PI * l)
        })?;
        (tau, v)
    };
    Ok((I * dot(y, &tau) - integral * ca).exp())
}

/// c_{beta,d} = Gamma(d/2) Gamma((2-beta)/2) / (2^beta beta Gamma((beta+d)/2)) * mass.
pub fn isotropic_constant(beta: f64, d: usize, mass: f64) -> f64 {
    let d = d as f64;
    (ln_gamma(d / 2.0) + ln_gamma((2.0 - beta) / 2.0) - ln_gamma((beta + d) / 2.0)).exp()
        / (2f64.powf(beta) * beta)
        * mass
}

/// exp(-c_{beta,d} |y|^beta) for the rotation-invariant beta-stable law.
pub fn isotropic_stable_cf(beta: f64, d: usize, mass: f64, y: &[f64]) -> Result<Complex64> {
    if !(beta > 0.0 && beta < 2.0) {
        return invalid(format!("beta = {beta} must lie in (0,2)"));
    }
    let n = dot(y, y).sqrt();
    Ok(Complex64::new((-isotropic_constant(beta, d, mass) * n.powf(beta)).exp(), 0.0))
}

/// exp(-y' cov y / 2).
pub fn gaussian_cf(cov: &DMatrix<f64>, y: &[f64]) -> Complex64 {
    let d = y.len();
    let mut s = 0.0;
    for a in 0..d {
        for b in 0..d {
            s += y[a] * cov[(a, b)] * y[b];
        }
    }
    Complex64::new((-0.5 * s).exp(), 0.0)
}

fn radial_tol() -> Tolerance {
    Tolerance::new(1e-13, 1e-12)
}

/// Integral over r > 0 of (e^{ikr} - 1 - ikr 1(r <= 1)) q(r, xi).
pub fn radial_exponent(q: &LayeredQ, k: f64, xi: &[f64]) -> Result<Complex64> {
    if k == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let alpha = q.alpha();
    let kap = k.abs();
    let a = (1.0 / kap).min(1.0);
    let c1 = q.c1(xi);
    let kernel = |r: f64| {
        let x = kap * r;
        let re = if x < 1e-4 { -x * x / 2.0 + x.powi(4) / 24.0 } else { -2.0 * (x / 2.0).sin().powi(2) };
        let im = if x < 1e-3 { -x.powi(3) / 6.0 + x.powi(5) / 120.0 } else { x.sin() - x };
        Complex64::new(re, im)
    };
    // c1 r^{-alpha-1} on (0, a] by its power series in kappa a <= 1
    let mut re = 0.0;
    let mut im = 0.0;
    let mut fact = 1.0;
    for n in 1..40 {
        let (e2, e3) = ((2 * n) as f64, (2 * n + 1) as f64);
        fact *= (e2 - 1.0) * e2;
        let sgn = if n % 2 == 0 { 1.0 } else { -1.0 };
        let t_re = sgn * kap.powf(e2) * a.powf(e2 - alpha) / (fact * (e2 - alpha));
        let t_im = sgn * kap.powf(e3) * a.powf(e3 - alpha) / (fact * e3 * (e3 - alpha));
        re += t_re;
        im += t_im;
        if t_re.abs() < 1e-18 && t_im.abs() < 1e-18 {
            break;
        }
    }
    let mut total = Complex64::new(re, im) * c1;
    if !q.is_canonical() {
        let r_min = 1e-12 * a;
        let diff = integrate_log(
            |r: f64| kernel(r) * (q.q(r, xi) - c1 * r.powf(-alpha - 1.0)),
            r_min,
            a,
            radial_tol(),
        )?;
        total += diff.value;
    }
    if a < 1.0 {
        total += integrate(|r: f64| kernel(r) * q.q(r, xi), a, 1.0, radial_tol())?.value;
    }
    total += oscillatory_tail(q, kap, xi)? - q.tail_integral(1.0, xi)?;
    Ok(if k < 0.0 { total.conj() } else { total })
}

/// Integral over [1, inf) of e^{i kappa r} q(r, xi), summed over half-period
/// pieces with repeated averaging of the partial sums.
fn oscillatory_tail(q: &LayeredQ, kap: f64, xi: &[f64]) -> Result<Complex64> {
    let h = PI / kap;
    let piece = |j: usize| -> Result<Complex64> {
        let lo = 1.0 + j as f64 * h;
        let f = |r: f64| Complex64::new((kap * r).cos(), (kap * r).sin()) * q.q(r, xi);
        Ok(integrate(f, lo, lo + h, Tolerance::new(1e-15, 1e-13))?.value)
    };
    const HEAD: usize = 16;
    const LEVELS: usize = 24;
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..HEAD {
        s += piece(j)?;
    }
    let mut partial = Vec::with_capacity(LEVELS + 1);
    partial.push(s);
    for j in HEAD..HEAD + LEVELS {
        s += piece(j)?;
        partial.push(s);
    }
    let mut prev = partial[partial.len() - 1];
    let mut row = partial;
    let mut change = f64::INFINITY;
    while row.len() > 1 {
        row = row.windows(2).map(|w| (w[0] + w[1]) * 0.5).collect();
        let last = row[row.len() - 1];
        change = (last - prev).norm();
        prev = last;
    }
    if change > 1e-8 {
        return Err(Error::Quadrature(format!("oscillatory tail did not settle (change {change:e})")));
    }
    Ok(row[0])
}

/// exp(i<y,eta> + integral of (e^{i<y,z>} - 1 - i<y,z> 1(|z| <= 1)) nu(dz))
/// with nu(dz) = sigma(d xi) q(r, xi) dr, by radial quadrature per direction.
pub fn levy_khintchine_cf(q: &LayeredQ, sigma: &SphericalMeasure, eta: &[f64], y: &[f64]) -> Result<Complex64> {
    q.validate_for(sigma)?;
    let mut err = None;
    let e = sigma.integrate_projection(y, |k, xi| match radial_exponent(q, k, xi) {
        Ok(v) => v,
        Err(x) => {
            err = Some(x);
            Complex64::new(0.0, 0.0)
        }
    })?;
    if let Some(x) = err {
        return Err(x);
    }
    Ok((I * dot(y, eta) + e).exp())
}

/// Characteristic-function targets used in the verification suite.
#[derive(Debug, Clone)]
pub enum CfTarget {
    Stable { alpha: f64, sigma: SphericalMeasure, eta: Vec<f64> },
    IsotropicStable { beta: f64, d: usize, mass: f64 },
    Gaussian { cov: DMatrix<f64> },
    LayeredQuadrature { q: LayeredQ, sigma: SphericalMeasure, eta: Vec<f64> },
}

impl CfTarget {
    pub fn eval(&self, y: &[f64]) -> Result<Complex64> {
        match self {
            CfTarget::Stable { alpha, sigma, eta } => stable_cf(*alpha, sigma, eta, y),
            CfTarget::IsotropicStable { beta, d, mass } => isotropic_stable_cf(*beta, *d, *mass, y),
            CfTarget::Gaussian { cov } => Ok(gaussian_cf(cov, y)),
            CfTarget::LayeredQuadrature { q, sigma, eta } => levy_khintchine_cf(q, sigma, eta, y),
        }
    }
}

/// (1/N) sum_k exp(i<y, X_k>) for samples stored flat with dimension d.
pub fn ecf(samples: &[f64], d: usize, y: &[f64]) -> Result<Complex64> {
    if samples.is_empty() || d == 0 {
        return Err(Error::Empty("no samples for the empirical characteristic function".into()));
    }
    let n = samples.len() / d;
    let mut s = Complex64::new(0.0, 0.0);
    for x in samples.chunks_exact(d) {
        let a = dot(x, y);
        s += Complex64::new(a.cos(), a.sin());
    }
    Ok(s / n as f64)
}

/// max over the grid of |ecf(y) - target(y)|.
pub fn cf_distance(samples: &[f64], d: usize, target: &CfTarget, grid: &[Vec<f64>]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Empty("empty y-grid".into()));
    }
    let mut m: f64 = 0.0;
    for y in grid {
        m = m.max((ecf(samples, d, y)? - target.eval(y)?).norm());
    }
    Ok(m)
}

/// max over the grid of |ecf_a(y) - ecf_b(y)|.
pub fn ecf_distance(a: &[f64], b: &[f64], d: usize, grid: &[Vec<f64>]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for y in grid {
        m = m.max((ecf(a, d, y)? - ecf(b, d, y)?).norm());
    }
    Ok(m)
}

/// 21 equally spaced points per axis on [-5, 5] (0 included), as a
/// cartesian product in dimension d.
pub fn default_grid(d: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..21).map(|k| -5.0 + 0.5 * k as f64).collect();
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

/// Hill estimate of the tail index from the k largest magnitudes.
pub fn hill_tail_index(magnitudes: &[f64], k: usize) -> Result<f64> {
    let n = magnitudes.len();
    if k == 0 || k >= n {
        return invalid(format!("Hill estimator needs 1 <= k < N, got k = {k}, N = {n}"));
    }
    if magnitudes.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return invalid("Hill estimator needs positive finite magnitudes");
    }
    let mut v = magnitudes.to_vec();
    hill_from_buffer(&mut v, k)
}

fn hill_from_buffer(v: &mut [f64], k: usize) -> Result<f64> {
    let n = v.len();
    // put the k+1 largest values at the end
    v.select_nth_unstable_by(n - k - 1, f64::total_cmp);
    let threshold = v[n - k - 1];
    let mean: f64 = v[n - k..].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    if !(mean > 0.0) {
        return invalid("Hill estimator is undefined: the top order statistics are all equal");
    }
    Ok(1.0 / mean)
}

/// Default Hill k = floor(sqrt(N)).
pub fn hill_default_k(n: usize) -> usize {
    (n as f64).sqrt().floor() as usize
}

/// Percentile bootstrap interval for the Hill estimate.
pub fn hill_bootstrap_ci(magnitudes: &[f64], k: usize, resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    hill_tail_index(magnitudes, k)?;
    let n = magnitudes.len();
    let mut rng = path_rng(seed, 0);
    let mut buf = vec![0.0; n];
    let mut est = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = magnitudes[rng.random_range(0..n)];
        }
        if let Ok(h) = hill_from_buffer(&mut buf, k) {
            est.push(h);
        }
    }
    if est.is_empty() {
        return invalid("every bootstrap resample was degenerate");
    }
    est.sort_by(f64::total_cmp);
    let q = |p: f64| est[((p * (est.len() - 1) as f64).round() as usize).min(est.len() - 1)];
    Ok((q((1.0 - level) / 2.0), q((1.0 + level) / 2.0)))
}

/// (1/N) sum_k |X_k|^p.
pub fn empirical_moment(samples: &[f64], d: usize, p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    if !(p > 0.0) {
        return invalid("moment order must be positive");
    }
    let n = samples.len() / d;
    Ok(samples.chunks_exact(d).map(|x| dot(x, x).sqrt().powf(p)).sum::<f64>() / n as f64)
}

/// Euclidean norms of samples stored flat.
pub fn magnitudes(samples: &[f64], d: usize) -> Vec<f64> {
    samples.chunks_exact(d).map(|x| dot(x, x).sqrt()).collect()
}

/// Sample covariance (divisor N - 1).
pub fn sample_covariance(samples: &[f64], d: usize) -> DMatrix<f64> {
    let n = samples.len() / d;
    let mut mean = vec![0.0; d];
    for x in samples.chunks_exact(d) {
        for j in 0..d {
            mean[j] += x[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut c = DMatrix::zeros(d, d);
    for x in samples.chunks_exact(d) {
        for a in 0..d {
            for b in 0..d {
                c[(a, b)] += (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    c / (n as f64 - 1.0)
}

/// Sum of |X_{t_{i+1}} - X_{t_i}|^p over the grid.
pub fn p_variation(path: &SamplePath, p: f64) -> Result<f64> {
    if path.grid.len() < 2 {
        return invalid("p-variation needs at least two grid points");
    }
    let d = path.dim;
    let mut s = 0.0;
    for g in 1..path.grid.len() {
        let (a, b) = (path.value(g - 1), path.value(g));
        let n2: f64 = (0..d).map(|j| (b[j] - a[j]).powi(2)).sum();
        s += n2.sqrt().powf(p);
    }
    Ok(s)
}

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value sqrt(-ln(a/2)/2)/sqrt(n).
pub fn ks_critical(n: usize, significance: f64) -> f64 {
    (-(significance / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Median of a slice (copies and sorts).
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Composite-trapezoid reference for the radial exponent of the canonical
/// q, on a geometric grid: an independent check of `radial_exponent`.
pub fn radial_exponent_trapezoid(q: &LayeredQ, k: f64, xi: &[f64], nodes_per_decade: usize) -> Complex64 {
    let alpha = q.alpha();
    let c1 = q.c1(xi);
    let kap = k.abs();
    // inner selects the compensated branch, so r = 1 is taken from the correct side
    let f = |r: f64, inner: bool| {
        let x = kap * r;
        let re = -2.0 * (x / 2.0).sin().powi(2);
        let im = x.sin() - if inner { x } else { 0.0 };
        Complex64::new(re, im) * q.q(r, xi)
    };
    // head below r0 from the leading Taylor terms
    let r0 = 1e-6 / kap.max(1.0);
    let mut s = Complex64::new(-kap * kap * r0.powf(2.0 - alpha) / (2.0 * (2.0 - alpha)), -kap.powi(3) * r0.powf(3.0 - alpha) / (6.0 * (3.0 - alpha))) * c1;
    // trapezoid in log r on [r0, 1], uniform grid on [1, R]
    let n = ((1.0 / r0).log10() * nodes_per_decade as f64).ceil() as usize;
    let ratio = (1.0 / r0).powf(1.0 / n as f64);
    let mut r = r0;
    for _ in 0..n {
        let r2 = (r * ratio).min(1.0);
        s += (f(r, true) * r + f(r2, true) * r2) * (0.5 * (r2 / r).ln());
        r = r2;
    }
    // beyond 1: fine trapezoid up to R, where the tail is below tolerance
    let big_r = 1.0 + 2000.0 * PI / kap;
    let steps = 8_000_000;
    let h = (big_r - 1.0) / steps as f64;
    for j in 0..steps {
        let a = 1.0 + j as f64 * h;
        s += (f(a, false) + f(a + h, false)) * (0.5 * h);
    }
    // remaining -Q(R) for the cosine part; the oscillatory remainder is O(q(R)/kappa)
    s -= Complex64::new(q.tail_integral(big_r, xi).unwrap_or(0.0), 0.0);
    if k < 0.0 {
        s.conj()
    } else {
        s
    }
}
