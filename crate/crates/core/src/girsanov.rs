//! Change of measure between a layered stable process and the stable
//! process sharing its small jumps: log-density ratio, the density
//! process U in jump-sum and series form, and importance sampling.

use crate::error::{invalid, Error, Result};
use crate::limits::directional_sum;
use crate::parallel::par_map_paths;
use crate::qfunc::LayeredQ;
use crate::series::{canonical_series_path, draw_for_path, stable_path, DrawFeatures, SamplePath, ShotNoiseDraw};
use crate::spherical::SphericalMeasure;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Log-weights are clipped to this magnitude before exponentiation.
pub const LOG_WEIGHT_CLIP: f64 = 500.0;

/// phi(z) = ln(q(|z|, z/|z|) / (c1(z/|z|) |z|^{-alpha-1})).
#[derive(Debug, Clone)]
pub struct DensityRatio {
    pub q: LayeredQ,
}

impl DensityRatio {
    pub fn new(q: LayeredQ) -> Self {
        DensityRatio { q }
    }

    pub fn phi(&self, z: &[f64]) -> Result<f64> {
        let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(r > 0.0) {
            return invalid("phi is undefined at the origin");
        }
        let xi: Vec<f64> = z.iter().map(|x| x / r).collect();
        if !(self.q.c1(&xi) > 0.0) {
            return invalid("c1 vanishes in this direction");
        }
        Ok(self.q.log_ratio_inner(r, &xi))
    }
}

/// Free function form of [`DensityRatio::phi`].
pub fn phi(ratio: &DensityRatio, z: &[f64]) -> Result<f64> {
    ratio.phi(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compatibility {
    pub compatible: bool,
    /// k0 - k1 required by the three-case criterion.
    pub required: DVector<f64>,
    pub actual: DVector<f64>,
}

/// Tolerance on |k0 - k1 - required| for compatibility.
pub const COMPATIBILITY_TOL: f64 = 1e-9;

/// The k0 - k1 required for mutual absolute continuity, by case:
/// alpha < 1: int xi sigma int_0^1 r q; alpha = 1: int xi sigma int_0^1 r (q - c1 r^{-2});
/// alpha in (1,2): (1/(alpha-1)) int xi sigma1 plus the same gap integral.
pub fn required_drift_difference(q: &LayeredQ, sigma: &SphericalMeasure) -> Result<DVector<f64>> {
    let a = q.alpha();
    if a < 1.0 {
        return directional_sum(q, sigma, |xi| q.power_moment(1.0, 0.0, 1.0, xi));
    }
    let gap = directional_sum(q, sigma, |xi| q.inner_gap_moment(xi))?;
    if a == 1.0 {
        return Ok(gap);
    }
    let s1 = directional_sum(q, sigma, |xi| Ok(q.c1(xi)))?;
    Ok(s1 / (a - 1.0) + gap)
}

/// The drift difference under which both triplets, written with the
/// truncation 1(|z| <= 1) on each side, have equal drift after removing
/// the jumps of size at most 1: int xi sigma int_0^1 r (q - c1 r^{-alpha-1}).
pub fn truncated_drift_difference(q: &LayeredQ, sigma: &SphericalMeasure) -> Result<DVector<f64>> {
    directional_sum(q, sigma, |xi| q.inner_gap_moment(xi))
}

pub fn drift_compatibility(q: &LayeredQ, sigma: &SphericalMeasure, k0: &[f64], k1: &[f64]) -> Result<Compatibility> {
    let d = sigma.dim();
    if k0.len() != d || k1.len() != d {
        return invalid(format!("drift vectors must have dimension {d}"));
    }
    let required = required_drift_difference(q, sigma)?;
    let actual = DVector::from_iterator(d, k0.iter().zip(k1).map(|(a, b)| a - b));
    let compatible = (0..d).all(|j| (actual[j] - required[j]).abs() <= COMPATIBILITY_TOL);
    Ok(Compatibility { compatible, required, actual })
}

/// (nu_{sigma,q} - nu_{sigma1})({|z| > eps}).
pub fn levy_gap(q: &LayeredQ, sigma: &SphericalMeasure, eps: f64) -> Result<f64> {
    q.validate_for(sigma)?;
    if sigma.is_uniform() {
        let mut e1 = vec![0.0; sigma.dim()];
        e1[0] = 1.0;
        return Ok(sigma.total_mass() * q.tail_gap(eps, &e1)?);
    }
    let mut acc = 0.0;
    for (xi, w) in sigma.atoms() {
        if w != 0.0 {
            acc += w * q.tail_gap(eps, xi)?;
        }
    }
    Ok(acc)
}

/// eps = 1, 1/2, ..., 2^{-20}.
pub fn default_eps_schedule() -> Vec<f64> {
    (0..=20).map(|k| 0.5f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UEstimate {
    /// U_t at the smallest eps.
    pub value: f64,
    /// |U(eps_last) - U(eps_second_last)|.
    pub cauchy_increment: f64,
    pub per_eps: Vec<f64>,
}

/// U_t = sum over jumps up to t with |dX| > eps of phi(dX) minus
/// t nu_gap(eps), along a decreasing eps schedule.
pub fn u_from_jumps<'a>(
    ratio: &DensityRatio,
    jumps: impl IntoIterator<Item = (f64, &'a [f64])>,
    nu_gap: impl Fn(f64) -> Result<f64>,
    t: f64,
    schedule: &[f64],
) -> Result<UEstimate> {
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] < w[0])) || !(schedule[schedule.len() - 1] > 0.0) {
        return invalid("eps schedule must be positive and strictly decreasing");
    }
    let mut terms: Vec<(f64, f64)> = Vec::new();
    for (s, z) in jumps {
        if s > t {
            continue;
        }
        let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > schedule[schedule.len() - 1] {
            terms.push((r, ratio.phi(z)?));
        }
    }
    // largest jumps first so each eps adds a contiguous block
    terms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut per_eps = Vec::with_capacity(schedule.len());
    let mut k = 0;
    let mut sum = 0.0;
    for &eps in schedule {
        while k < terms.len() && terms[k].0 > eps {
            sum += terms[k].1;
            k += 1;
        }
        per_eps.push(sum - t * nu_gap(eps)?);
    }
    let n = per_eps.len();
    let cauchy_increment = if n > 1 { (per_eps[n - 1] - per_eps[n - 2]).abs() } else { 0.0 };
    Ok(UEstimate { value: per_eps[n - 1], cauchy_increment, per_eps })
}

/// Closed form for the canonical q with Levy scale `mass` (the total mass
/// of sigma divided by the normalization of q):
/// (alpha-beta) sum_{|dX|>1} ln|dX| - t (1/beta - 1/alpha) mass.
pub fn u_canonical<'a>(alpha: f64, beta: f64, mass: f64, jumps: impl IntoIterator<Item = (f64, &'a [f64])>, t: f64) -> f64 {
    let mut s = 0.0;
    if alpha != beta {
        for (time, z) in jumps {
            if time <= t {
                let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
                if r > 1.0 {
                    s += r.ln();
                }
            }
        }
    }
    (alpha - beta) * s - t * (1.0 / beta - 1.0 / alpha) * mass
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesForm {
    /// U' from the jumps of the stable series, weights the stable paths.
    Prime,
    /// U'' from the jumps of the layered series.
    DoublePrime,
}

/// U'_t = -((alpha-beta)/alpha) sum ln(alpha Gamma_i/(mass T)) 1(Gamma_i <= mass T/alpha) 1(T_i <= t)
/// - t (1/beta - 1/alpha) mass, and U''_t with beta in place of alpha.
pub fn u_series(draw: &ShotNoiseDraw, alpha: f64, beta: f64, mass: f64, t: f64, which: SeriesForm) -> Result<f64> {
    let horizon = draw.horizon;
    let idx = match which {
        SeriesForm::Prime => alpha,
        SeriesForm::DoublePrime => beta,
    };
    let mt = mass * horizon;
    let cut = mt / idx;
    if draw.gamma_level() < cut {
        return invalid(format!("draw truncated at Gamma = {} below mass T/index = {cut}", draw.gamma_level()));
    }
    let mut s = 0.0;
    if alpha != beta {
        for i in 0..draw.len() {
            let g = draw.gammas[i];
            if g > cut {
                break;
            }
            if draw.times[i] <= t {
                s += (idx * g / mt).ln();
            }
        }
    }
    Ok(-((alpha - beta) / idx) * s - t * (1.0 / beta - 1.0 / alpha) * mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureTag {
    /// Stable paths weighted by e^{U'_T}: expectations under the layered law.
    P,
    /// Layered paths weighted by e^{-U''_T}: expectations under the stable law.
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPathSample {
    pub path: SamplePath,
    /// U'_T for tag P, -U''_T for tag Q.
    pub log_weight: f64,
    pub tag: MeasureTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reweighted {
    pub estimate: f64,
    pub std_error: f64,
    pub clipped: usize,
}

/// Weighted Monte Carlo mean of f with weights e^{log_weight}.
pub fn reweighted_expectation(samples: &[WeightedPathSample], f: impl Fn(&SamplePath) -> f64) -> Result<Reweighted> {
    let Some(first) = samples.first() else {
        return Err(Error::Empty("no weighted samples".into()));
    };
    if samples.iter().any(|s| s.tag != first.tag) {
        return invalid("weighted samples mix measure tags");
    }
    let mut clipped = 0;
    let vals: Vec<f64> = samples
        .iter()
        .map(|s| {
            let mut lw = s.log_weight;
            if lw.abs() > LOG_WEIGHT_CLIP {
                clipped += 1;
                lw = lw.clamp(-LOG_WEIGHT_CLIP, LOG_WEIGHT_CLIP);
            }
            lw.exp() * f(&s.path)
        })
        .collect();
    let (estimate, std_error) = mean_and_se(&vals);
    Ok(Reweighted { estimate, std_error, clipped })
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Coupled importance samples for the canonical q with unit normalization
/// (Levy measure sigma(d xi) q(r) dr, stable reference sigma(d xi) r^{-alpha-1} dr).
/// Tag P: stable paths with log-weight U'_T. Tag Q: layered paths with -U''_T.
#[allow(clippy::too_many_arguments)]
pub fn importance_samples(
    alpha: f64,
    beta: f64,
    sigma: &SphericalMeasure,
    horizon: f64,
    gamma_cap: f64,
    grid: &[f64],
    n: usize,
    seed: u64,
    tag: MeasureTag,
) -> Result<Vec<WeightedPathSample>> {
    let mass = sigma.total_mass();
    let out = par_map_paths(n, |i| -> Result<WeightedPathSample> {
        let draw = draw_for_path(seed, i as u64, horizon, sigma, gamma_cap, &DrawFeatures::default())?;
        Ok(match tag {
            MeasureTag::P => WeightedPathSample {
                path: stable_path(alpha, sigma, &draw, grid)?,
                log_weight: u_series(&draw, alpha, beta, mass, horizon, SeriesForm::Prime)?,
                tag,
            },
            MeasureTag::Q => WeightedPathSample {
                path: canonical_series_path(alpha, beta, mass, sigma, &draw, grid)?,
                log_weight: -u_series(&draw, alpha, beta, mass, horizon, SeriesForm::DoublePrime)?,
                tag,
            },
        })
    });
    out.into_iter().collect()
}

/// Levy tail of U_1 along the stable reference paths (the jumps of U'),
/// canonical q: mass/alpha e^{-alpha y/(alpha-beta)}, as nu(-inf, y) for
/// y <= 0 when alpha < beta and nu(y, inf) for y >= 0 when alpha > beta.
pub fn u_levy_tail(alpha: f64, beta: f64, mass: f64, y: f64) -> Result<f64> {
    if alpha == beta {
        return invalid("U vanishes when alpha = beta");
    }
    if (alpha < beta && y > 0.0) || (alpha > beta && y < 0.0) {
        return invalid(format!("y = {y} lies outside the support of the Levy measure of U"));
    }
    Ok(mass / alpha * (-alpha * y / (alpha - beta)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Divergence {
    PlusInfinity,
    MinusInfinity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityWitness {
    pub radii: Vec<f64>,
    /// psi = ln(q/(c2 r^{-beta-1})) at each radius.
    pub psi: Vec<f64>,
    pub divergence: Divergence,
    /// Whether the values on the grid move monotonically in the stated
    /// direction over the last decades.
    pub confirmed: bool,
    pub failing_condition: String,
}

/// psi on a log grid 1, 1e-1, ..., 1e-12 toward the origin. For alpha > beta
/// psi tends to +inf and the exponential-moment condition fails; for
/// alpha < beta psi tends to -inf and the square-integrability of psi fails.
pub fn singularity_witness(q: &LayeredQ, xi: &[f64]) -> Result<SingularityWitness> {
    let (a, b) = (q.alpha(), q.beta());
    if a == b {
        return invalid("singularity needs alpha != beta");
    }
    let radii: Vec<f64> = (0..=12).map(|k| 10f64.powi(-k)).collect();
    let psi: Vec<f64> = radii.iter().map(|&r| q.log_ratio_outer(r, xi)).collect();
    let (divergence, failing_condition) = if a > b {
        (Divergence::PlusInfinity, "integral of e^psi - 1 - psi against the beta-stable measure diverges near 0")
    } else {
        (Divergence::MinusInfinity, "integral of psi^2 against the beta-stable measure diverges near 0")
    };
    let tail = &psi[6..];
    let confirmed = tail.windows(2).all(|w| match divergence {
        Divergence::PlusInfinity => w[1] > w[0],
        Divergence::MinusInfinity => w[1] < w[0],
    });
    Ok(SingularityWitness { radii, psi, divergence, confirmed, failing_condition: failing_condition.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{layered_path_canonical, uniform_grid};
    use crate::stats::{ks_critical, ks_statistic};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn sym(m: f64) -> SphericalMeasure {
        SphericalMeasure::discrete(1, &[(vec![1.0], m / 2.0), (vec![-1.0], m / 2.0)]).unwrap()
    }

    #[test]
    fn phi_examples() {
        let r = DensityRatio::new(LayeredQ::canonical(1.3, 1.9, 2.0).unwrap());
        assert_eq!(r.phi(&[0.7]).unwrap(), 0.0);
        assert_eq!(r.phi(&[-1.0]).unwrap(), 0.0);
        assert!((r.phi(&[2.0]).unwrap() + 0.6 * 2f64.ln()).abs() < 1e-15);
        assert!((r.phi(&[-2.0]).unwrap() + 0.415_888_308_335_967).abs() < 1e-12);
        assert!(r.phi(&[0.0]).is_err());
        let b = DensityRatio::new(LayeredQ::blend(1.3, 1.9, 2.0, 1).unwrap());
        assert!(b.phi(&[1e-6]).unwrap().abs() < 0.06);
        assert!(b.phi(&[1e-6]).unwrap().abs() < 1e-5);
    }

    #[test]
    fn compatibility_examples() {
        let q = LayeredQ::canonical(1.3, 1.9, 2.0).unwrap();
        let c = drift_compatibility(&q, &sym(2.0), &[0.4], &[0.4]).unwrap();
        assert!(c.compatible && c.required[0] == 0.0);
        assert!(!drift_compatibility(&q, &sym(2.0), &[0.4], &[0.3]).unwrap().compatible);

        let one = SphericalMeasure::discrete(1, &[(vec![1.0], 1.0)]).unwrap();
        let q = LayeredQ::canonical(0.5, 1.5, 1.0).unwrap();
        let c = drift_compatibility(&q, &one, &[2.0], &[0.0]).unwrap();
        assert!(c.compatible && (c.required[0] - 2.0).abs() < 1e-14);

        let q = LayeredQ::canonical(1.0, 1.5, 1.0).unwrap();
        assert_eq!(required_drift_difference(&q, &one).unwrap()[0], 0.0);

        let q = LayeredQ::canonical(1.5, 0.5, 1.0).unwrap();
        assert!((required_drift_difference(&q, &one).unwrap()[0] - 2.0).abs() < 1e-14);
        assert_eq!(truncated_drift_difference(&q, &one).unwrap()[0], 0.0);
        assert!(drift_compatibility(&q, &one, &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn inner_gap_moment_for_blend() {
        // integral over (0,1] of r^{-alpha}((1+r)^{alpha-beta} - 1)/m by brute force in u = ln r
        for (a, b) in [(1.3, 1.9), (1.9, 0.6), (0.5, 1.5)] {
            let q = LayeredQ::blend(a, b, 2.0, 1).unwrap();
            let got = q.inner_gap_moment(&[1.0]).unwrap();
            let f = |u: f64| {
                let r = u.exp();
                r * r.powf(-a) * ((a - b) * r.ln_1p()).exp_m1() / 2.0
            };
            // below u = -200 the integrand is C e^{(2-alpha)u}
            let want = crate::quad::integrate(f, -200.0, 0.0, crate::quad::Tolerance::new(1e-14, 1e-13)).unwrap().value
                + f(-200.0) / (2.0 - a);
            assert!((got - want).abs() < 1e-10, "({a},{b}): {got} vs {want}");
        }
    }

    #[test]
    fn u_canonical_examples() {
        let none: Vec<(f64, &[f64])> = vec![];
        assert!((u_canonical(1.3, 1.9, 2.0, none.clone(), 1.0) - 0.485_829_959_514_170).abs() < 1e-12);
        let e = [std::f64::consts::E];
        let one = vec![(0.5, &e[..])];
        assert!((u_canonical(1.3, 1.9, 2.0, one, 1.0) + 0.114_170_040_485_830).abs() < 1e-12);
        let big = [5.0];
        assert_eq!(u_canonical(1.3, 1.3, 2.0, vec![(0.5, &big[..])], 1.0), 0.0);
    }

    #[test]
    fn u_from_jumps_matches_closed_form() {
        let s = sym(2.0);
        let q = LayeredQ::canonical(1.3, 1.9, 1.0).unwrap();
        let ratio = DensityRatio::new(q.clone());
        assert!((levy_gap(&q, &s, 1.0).unwrap() - 2.0 * (1.0 / 1.9 - 1.0 / 1.3)).abs() < 1e-15);
        assert!((levy_gap(&q, &s, 3.0).unwrap() - 2.0 * (3f64.powf(-1.9) / 1.9 - 3f64.powf(-1.3) / 1.3)).abs() < 1e-15);
        for k in 0..20 {
            let draw = draw_for_path(11, k, 1.0, &s, 500.0, &DrawFeatures::default()).unwrap();
            let p = canonical_series_path(1.3, 1.9, 2.0, &s, &draw, &uniform_grid(1.0, 4)).unwrap();
            let u = u_from_jumps(&ratio, p.jumps(), |e| levy_gap(&q, &s, e), 1.0, &default_eps_schedule()).unwrap();
            let c = u_canonical(1.3, 1.9, 2.0, p.jumps(), 1.0);
            assert!((u.value - c).abs() < 1e-8, "{} vs {c}", u.value);
            assert_eq!(u.cauchy_increment, 0.0);
            let s2 = u_series(&draw, 1.3, 1.9, 2.0, 1.0, SeriesForm::DoublePrime).unwrap();
            assert!((s2 - c).abs() < 1e-10);
        }
    }

    #[test]
    fn u_series_examples() {
        let s = sym(2.0);
        let mut draw = draw_for_path(1, 0, 1.0, &s, 50.0, &DrawFeatures::default()).unwrap();
        // keep only the first point and move it to Gamma = 0.5
        draw.gammas.truncate(1);
        draw.times.truncate(1);
        draw.directions.truncate(1);
        draw.gammas[0] = 0.5;
        draw.times[0] = 0.3;
        let drift = -(1.0 / 1.9 - 1.0 / 1.3) * 2.0;
        let u = u_series(&draw, 1.3, 1.9, 2.0, 1.0, SeriesForm::Prime).unwrap();
        let term = -(-0.6 / 1.3) * 0.325f64.ln();
        assert!((term + 0.518_737).abs() < 1e-6);
        assert!((u - (term + drift)).abs() < 1e-12, "{u}");
        let u = u_series(&draw, 1.3, 1.9, 2.0, 0.2, SeriesForm::Prime).unwrap();
        assert!((u - 0.2 * drift).abs() < 1e-14);
    }

    #[test]
    fn u_prime_agrees_with_stable_path_jumps() {
        let s = sym(2.0);
        for k in 0..10 {
            let draw = draw_for_path(5, k, 1.0, &s, 500.0, &DrawFeatures::default()).unwrap();
            let y = stable_path(1.3, &s, &draw, &uniform_grid(1.0, 4)).unwrap();
            let a = u_series(&draw, 1.3, 1.9, 2.0, 1.0, SeriesForm::Prime).unwrap();
            let b = u_canonical(1.3, 1.9, 2.0, y.jumps(), 1.0);
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn density_process_is_normalized() {
        let s = sym(2.0);
        let grid = uniform_grid(1.0, 2);
        for tag in [MeasureTag::P, MeasureTag::Q] {
            let w = importance_samples(1.3, 1.9, &s, 1.0, 100.0, &grid, 4000, 21, tag).unwrap();
            let r = reweighted_expectation(&w, |_| 1.0).unwrap();
            assert!((r.estimate - 1.0).abs() < 4.0 * r.std_error, "{tag:?}: {r:?}");
            assert_eq!(r.clipped, 0);
        }
    }

    #[test]
    fn reweighted_errors() {
        assert!(reweighted_expectation(&[], |_| 1.0).is_err());
        let s = sym(2.0);
        let grid = uniform_grid(1.0, 2);
        let mut w = importance_samples(1.3, 1.9, &s, 1.0, 100.0, &grid, 2, 1, MeasureTag::P).unwrap();
        w[1].tag = MeasureTag::Q;
        assert!(reweighted_expectation(&w, |_| 1.0).is_err());
        w[1].tag = MeasureTag::P;
        w[0].log_weight = 900.0;
        assert_eq!(reweighted_expectation(&w, |_| 0.0).unwrap().clipped, 1);
    }

    #[test]
    fn u_levy_tail_examples() {
        assert!((u_levy_tail(1.3, 1.9, 2.0, 0.0).unwrap() - 2.0 / 1.3).abs() < 1e-15);
        assert!((u_levy_tail(1.3, 1.9, 2.0, -1e-12).unwrap() - 1.538_461_538_461_538).abs() < 1e-9);
        assert!(u_levy_tail(1.3, 1.9, 2.0, -0.6).unwrap() > u_levy_tail(1.3, 1.9, 2.0, -1.2).unwrap());
        assert!(u_levy_tail(1.3, 1.9, 2.0, 0.5).is_err());
        assert!(u_levy_tail(1.9, 1.3, 2.0, -0.5).is_err());
        assert!(u_levy_tail(1.3, 1.3, 2.0, -0.5).is_err());
    }

    #[test]
    fn u_jump_sizes_follow_exponential_tail() {
        // jumps of U' are -((alpha-beta)/alpha) ln(alpha Gamma/(mT)) for Gamma <= mT/alpha;
        // conditionally on being present they have P(J < y) = e^{alpha y/(alpha-beta)}, y < 0
        let (a, b, m) = (1.3, 1.9, 2.0);
        let s = sym(m);
        let mut jumps = Vec::new();
        let mut k = 0;
        while jumps.len() < 100_000 {
            let draw = draw_for_path(77, k, 1.0, &s, 5.0, &DrawFeatures::default()).unwrap();
            for &g in &draw.gammas {
                if g <= m / a {
                    jumps.push(-((a - b) / a) * (a * g / m).ln());
                }
            }
            k += 1;
        }
        let total = u_levy_tail(a, b, m, 0.0).unwrap();
        let stat = ks_statistic(&jumps, |y| if y >= 0.0 { 1.0 } else { u_levy_tail(a, b, m, y).unwrap() / total });
        assert!(stat < ks_critical(jumps.len(), 1e-3), "KS {stat}");
    }

    #[test]
    fn singularity_examples() {
        let q = LayeredQ::canonical(1.3, 1.9, 1.0).unwrap();
        assert!((q.log_ratio_outer(1e-3, &[1.0]) + 4.144_653_167_389_282).abs() < 1e-12);
        assert_eq!(q.log_ratio_outer(2.0, &[1.0]), 0.0);
        let w = singularity_witness(&q, &[1.0]).unwrap();
        assert_eq!(w.divergence, Divergence::MinusInfinity);
        assert!(w.confirmed);
        let q = LayeredQ::canonical(1.9, 1.3, 1.0).unwrap();
        assert!((q.log_ratio_outer(1e-3, &[1.0]) - 4.144_653_167_389_282).abs() < 1e-12);
        let w = singularity_witness(&q, &[1.0]).unwrap();
        assert_eq!(w.divergence, Divergence::PlusInfinity);
        assert!(w.confirmed);
        let b = LayeredQ::blend(1.9, 1.3, 1.0, 1).unwrap();
        assert!(singularity_witness(&b, &[1.0]).unwrap().confirmed);
        assert!(singularity_witness(&LayeredQ::canonical(1.3, 1.3, 1.0).unwrap(), &[1.0]).is_err());
    }

    #[test]
    fn layered_path_jumps_feed_u() {
        let s = sym(2.0);
        let draw = draw_for_path(3, 0, 1.0, &s, 200.0, &DrawFeatures::default()).unwrap();
        let p = layered_path_canonical(1.3, 1.9, &s, &draw, &uniform_grid(1.0, 4)).unwrap();
        let q = LayeredQ::canonical(1.3, 1.9, 2.0).unwrap();
        let u = u_from_jumps(&DensityRatio::new(q.clone()), p.jumps(), |e| levy_gap(&q, &s, e), 1.0, &default_eps_schedule()).unwrap();
        assert!((u.value - u_canonical(1.3, 1.9, 1.0, p.jumps(), 1.0)).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn phi_sign_structure(r in 1e-6f64..1e6, a in 0.1f64..1.0, gap in 0.05f64..0.9) {
            let q = LayeredQ::canonical(a, a + gap, 1.0).unwrap();
            let p = DensityRatio::new(q).phi(&[r]).unwrap();
            prop_assert!(p <= 0.0);
            prop_assert_eq!(p == 0.0, r <= 1.0);
        }

        #[test]
        fn u_levy_tail_monotone(y1 in -10.0f64..0.0, y2 in -10.0f64..0.0) {
            let (lo, hi) = if y1 < y2 { (y1, y2) } else { (y2, y1) };
            prop_assert!(u_levy_tail(1.3, 1.9, 2.0, lo).unwrap() <= u_levy_tail(1.3, 1.9, 2.0, hi).unwrap());
        }
    }

    #[test]
    fn schedule_validation() {
        let q = LayeredQ::canonical(1.3, 1.9, 1.0).unwrap();
        let r = DensityRatio::new(q);
        let none: Vec<(f64, &[f64])> = vec![];
        assert!(u_from_jumps(&r, none.clone(), |_| Ok(0.0), 1.0, &[0.5, 1.0]).is_err());
        assert!(u_from_jumps(&r, none, |_| Ok(0.0), 1.0, &[]).is_err());
    }
}
