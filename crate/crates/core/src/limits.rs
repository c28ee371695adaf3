//! Drift constants, limit laws and path rescalings for the short- and
//! long-time scaling limits of layered stable processes.

use crate::error::{invalid, Result};
use crate::qfunc::LayeredQ;
use crate::series::SamplePath;
use crate::spherical::SphericalMeasure;
use crate::stats::CfTarget;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitMode {
    ShortStable,
    LongStable,
    LongGaussian,
}

/// Law of the limit process at time 1.
#[derive(Debug, Clone)]
pub enum LimitTarget {
    Stable { alpha: f64, sigma: SphericalMeasure },
    Gaussian { cov: DMatrix<f64> },
}

impl LimitTarget {
    /// Characteristic function of the limit law at time t.
    pub fn cf_target(&self, t: f64) -> Result<CfTarget> {
        Ok(match self {
            LimitTarget::Stable { alpha, sigma } => CfTarget::Stable {
                alpha: *alpha,
                sigma: sigma.reweighted(|_| t)?,
                eta: vec![0.0; sigma.dim()],
            },
            LimitTarget::Gaussian { cov } => CfTarget::Gaussian { cov: cov * t },
        })
    }
}

#[derive(Debug, Clone)]
pub struct LimitSpec {
    pub mode: LimitMode,
    pub h: f64,
    pub index: f64,
    pub eta: DVector<f64>,
    pub b: DVector<f64>,
    pub target: LimitTarget,
}

impl LimitSpec {
    /// Short-time limit: h -> 0, exponent 1/alpha, target stable(sigma1).
    pub fn short(q: &LayeredQ, sigma: &SphericalMeasure, h: f64) -> Result<Self> {
        check_h(h)?;
        let (eta, b) = short_time_constants(q, sigma)?;
        let pair = q.derive_sigma_pair(sigma)?;
        Ok(LimitSpec {
            mode: LimitMode::ShortStable,
            h,
            index: q.alpha(),
            eta,
            b,
            target: LimitTarget::Stable { alpha: q.alpha(), sigma: pair.sigma1 },
        })
    }

    /// Long-time limit: h -> inf, stable(sigma2) for beta < 2 and Brownian
    /// for beta > 2.
    pub fn long(q: &LayeredQ, sigma: &SphericalMeasure, h: f64) -> Result<Self> {
        check_h(h)?;
        let (eta, b) = long_time_constants(q, sigma)?;
        if q.beta() > 2.0 {
            return Ok(LimitSpec {
                mode: LimitMode::LongGaussian,
                h,
                index: 2.0,
                eta,
                b,
                target: LimitTarget::Gaussian { cov: gaussian_covariance(q, sigma)? },
            });
        }
        let pair = q.derive_sigma_pair(sigma)?;
        Ok(LimitSpec {
            mode: LimitMode::LongStable,
            h,
            index: q.beta(),
            eta,
            b,
            target: LimitTarget::Stable { alpha: q.beta(), sigma: pair.sigma2 },
        })
    }
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("scale h = {h} must be positive and finite"));
    }
    Ok(())
}

/// Sum over sigma of xi w f(xi). Positive and negative contributions are
/// summed separately in sorted order so that mirror-image atoms cancel
/// exactly. A uniform sigma carries an isotropic q and gives zero.
pub(crate) fn directional_sum(q: &LayeredQ, sigma: &SphericalMeasure, f: impl Fn(&[f64]) -> Result<f64>) -> Result<DVector<f64>> {
    q.validate_for(sigma)?;
    let d = sigma.dim();
    if sigma.is_uniform() {
        return Ok(DVector::zeros(d));
    }
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); d];
    for (xi, w) in sigma.atoms() {
        if w == 0.0 {
            continue;
        }
        let v = w * f(xi)?;
        for j in 0..d {
            terms[j].push(xi[j] * v);
        }
    }
    Ok(DVector::from_iterator(d, terms.into_iter().map(signed_sum)))
}

fn signed_sum(v: Vec<f64>) -> f64 {
    let mut pos: Vec<f64> = v.iter().copied().filter(|x| *x > 0.0).collect();
    let mut neg: Vec<f64> = v.iter().map(|x| -x).filter(|x| *x > 0.0).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    pos.iter().sum::<f64>() - neg.iter().sum::<f64>()
}

fn inner_moment(q: &LayeredQ, sigma: &SphericalMeasure) -> Result<DVector<f64>> {
    directional_sum(q, sigma, |xi| q.power_moment(1.0, 0.0, 1.0, xi))
}

fn outer_moment(q: &LayeredQ, sigma: &SphericalMeasure) -> Result<DVector<f64>> {
    directional_sum(q, sigma, |xi| q.power_moment(1.0, 1.0, f64::INFINITY, xi))
}

fn sigma_first_moment(q: &LayeredQ, sigma: &SphericalMeasure, c: impl Fn(&LayeredQ, &[f64]) -> f64) -> Result<DVector<f64>> {
    directional_sum(q, sigma, |xi| Ok(c(q, xi)))
}

/// (eta, b) of the short-time limit.
pub fn short_time_constants(q: &LayeredQ, sigma: &SphericalMeasure) -> Result<(DVector<f64>, DVector<f64>)> {
    q.validate_for(sigma)?;
    let (a, b) = (q.alpha(), q.beta());
    let d = sigma.dim();
    let eta = if a < 1.0 {
        inner_moment(q, sigma)?
    } else if a > 1.0 && b > 1.0 {
        -outer_moment(q, sigma)?
    } else {
        DVector::zeros(d)
    };
    let bv = if a > 1.0 && b <= 1.0 {
        sigma_first_moment(q, sigma, |q, xi| q.c1(xi))? / (a - 1.0)
    } else {
        DVector::zeros(d)
    };
    Ok((eta, bv))
}

/// (eta, b) of the long-time limit; for beta > 2 the Brownian centering
/// with b = 0. beta = 2 has no limit of this form and is rejected.
pub fn long_time_constants(q: &LayeredQ, sigma: &SphericalMeasure) -> Result<(DVector<f64>, DVector<f64>)> {
    q.validate_for(sigma)?;
    let (a, b) = (q.alpha(), q.beta());
    let d = sigma.dim();
    if b == 2.0 {
        return invalid("beta = 2 has no stable or Gaussian long-time limit of this form");
    }
    if b > 2.0 {
        return Ok((-outer_moment(q, sigma)?, DVector::zeros(d)));
    }
    let eta = if a < 1.0 && b < 1.0 {
        inner_moment(q, sigma)?
    } else if b > 1.0 {
        -outer_moment(q, sigma)?
    } else {
        DVector::zeros(d)
    };
    let bv = if a >= 1.0 && b < 1.0 {
        sigma_first_moment(q, sigma, |q, xi| q.c2(xi))? / (1.0 - b)
    } else {
        DVector::zeros(d)
    };
    Ok((eta, bv))
}

/// Integral of z z' over the Levy measure; needs beta > 2.
pub fn gaussian_covariance(q: &LayeredQ, sigma: &SphericalMeasure) -> Result<DMatrix<f64>> {
    q.validate_for(sigma)?;
    if q.beta() <= 2.0 {
        return invalid(format!("second moment diverges for beta = {} <= 2", q.beta()));
    }
    let d = sigma.dim();
    if sigma.is_uniform() {
        let e1 = crate::spherical::axis_directions(d).remove(0);
        return Ok(sigma.second_moment() * q.power_moment(2.0, 0.0, f64::INFINITY, &e1)?);
    }
    let mut c = DMatrix::zeros(d, d);
    for (xi, w) in sigma.atoms() {
        if w == 0.0 {
            continue;
        }
        let r2 = w * q.power_moment(2.0, 0.0, f64::INFINITY, xi)?;
        for a in 0..d {
            for b in 0..d {
                c[(a, b)] += xi[a] * xi[b] * r2;
            }
        }
    }
    Ok(c)
}

/// Maps a path on [0, hT] to t -> h^{-1/index}(X_{ht} + h t eta) -/+ t b,
/// with minus for the short-time limit, plus for the long-time stable
/// limit and no b term for the Brownian limit.
pub fn rescale_path(path: &SamplePath, spec: &LimitSpec) -> Result<SamplePath> {
    check_h(spec.h)?;
    let d = path.dim;
    if path.grid.len() < 2 || path.grid[0] != 0.0 {
        return invalid("path grid must start at 0 and have at least two points");
    }
    if spec.eta.len() != d || spec.b.len() != d {
        return invalid(format!("limit constants have dimension {}, path has {d}", spec.eta.len()));
    }
    let h = spec.h;
    let scale = if h == 1.0 { 1.0 } else { h.powf(-1.0 / spec.index) };
    let bsign = match spec.mode {
        LimitMode::ShortStable => -1.0,
        LimitMode::LongStable => 1.0,
        LimitMode::LongGaussian => 0.0,
    };
    let bt: Vec<f64> = spec.b.iter().map(|x| bsign * x).collect();
    let grid: Vec<f64> = path.grid.iter().map(|g| if h == 1.0 { *g } else { g / h }).collect();
    let mut values = path.values.clone();
    for (gi, &s) in path.grid.iter().enumerate() {
        let t = grid[gi];
        for j in 0..d {
            let v = &mut values[gi * d + j];
            if spec.eta[j] != 0.0 {
                *v += s * spec.eta[j];
            }
            if scale != 1.0 {
                *v *= scale;
            }
            if bt[j] != 0.0 {
                *v += t * bt[j];
            }
        }
    }
    let scaled = |v: &Vec<f64>| -> Vec<f64> { v.iter().map(|x| if scale != 1.0 { x * scale } else { *x }).collect() };
    let drift_rate = (0..d)
        .map(|j| {
            let mut r = path.drift_rate[j] + spec.eta[j];
            if h != 1.0 {
                r *= h * scale;
            }
            r + bt[j]
        })
        .collect();
    Ok(SamplePath {
        dim: d,
        grid,
        values,
        jump_times: path.jump_times.iter().map(|t| if h == 1.0 { *t } else { t / h }).collect(),
        jump_vectors: scaled(&path.jump_vectors),
        drift_rate,
        gaussian: path.gaussian.as_ref().map(scaled),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, Tolerance};
    use crate::series::{draw_for_path, layered_path_canonical, uniform_grid, DrawFeatures};
    use proptest::prelude::{prop_assert, proptest};

    fn sym(m: f64) -> SphericalMeasure {
        SphericalMeasure::discrete(1, &[(vec![1.0], m / 2.0), (vec![-1.0], m / 2.0)]).unwrap()
    }

    fn asym() -> SphericalMeasure {
        SphericalMeasure::discrete(1, &[(vec![1.0], 2.0), (vec![-1.0], 1.0)]).unwrap()
    }

    #[test]
    fn symmetric_sigma_gives_zero_constants() {
        let grid = [0.3, 0.7, 1.0, 1.2, 1.7];
        let betas = [0.4, 0.9, 1.0, 1.5, 2.5, 3.0];
        for a in grid {
            for b in betas {
                let q = LayeredQ::canonical(a, b, 3.0).unwrap();
                let (e, bb) = short_time_constants(&q, &sym(3.0)).unwrap();
                assert!(e.iter().chain(bb.iter()).all(|x| *x == 0.0));
                let (e, bb) = long_time_constants(&q, &sym(3.0)).unwrap();
                assert!(e.iter().chain(bb.iter()).all(|x| *x == 0.0));
            }
        }
    }

    #[test]
    fn short_time_examples() {
        let q = LayeredQ::canonical(0.5, 1.5, 3.0).unwrap();
        let (e, b) = short_time_constants(&q, &asym()).unwrap();
        assert!((e[0] - 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(b[0], 0.0);

        let q = LayeredQ::canonical(1.3, 0.9, 3.0).unwrap();
        let (e, b) = short_time_constants(&q, &asym()).unwrap();
        assert_eq!(e[0], 0.0);
        // sigma1 = sigma/3, first moment 1/3
        assert!((b[0] - (1.0 / 3.0) / 0.3).abs() < 1e-13);

        let q = LayeredQ::canonical(1.3, 1.9, 3.0).unwrap();
        let (e, _) = short_time_constants(&q, &asym()).unwrap();
        assert!((e[0] + (1.0 / 3.0) / 0.9).abs() < 1e-13);
    }

    #[test]
    fn long_time_examples() {
        let q = LayeredQ::canonical(0.5, 1.5, 3.0).unwrap();
        let (e, b) = long_time_constants(&q, &asym()).unwrap();
        assert!((e[0] + 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(b[0], 0.0);

        let q = LayeredQ::canonical(1.1, 0.5, 3.0).unwrap();
        let (e, b) = long_time_constants(&q, &asym()).unwrap();
        assert_eq!(e[0], 0.0);
        assert!((b[0] - 2.0 / 3.0).abs() < 1e-14);

        let q = LayeredQ::canonical(0.5, 0.7, 3.0).unwrap();
        let (e, _) = long_time_constants(&q, &asym()).unwrap();
        assert!((e[0] - (1.0 / 3.0) / 0.5).abs() < 1e-14);

        assert!(long_time_constants(&LayeredQ::canonical(1.1, 2.0, 3.0).unwrap(), &asym()).is_err());
        let q = LayeredQ::canonical(1.1, 2.5, 3.0).unwrap();
        let (e, b) = long_time_constants(&q, &asym()).unwrap();
        assert!((e[0] + (1.0 / 3.0) / 1.5).abs() < 1e-14);
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn case_tables_are_total() {
        // every branch is reached on a 20 x 20 sweep
        let mut short_hits = [false; 4];
        let mut long_hits = [false; 5];
        for i in 0..20 {
            for j in 0..20 {
                let a = 0.05 + 1.9 * i as f64 / 19.0;
                let b = 0.1 + 3.0 * j as f64 / 19.0;
                let q = LayeredQ::canonical(a, b, 3.0).unwrap();
                let (e, bb) = short_time_constants(&q, &asym()).unwrap();
                let k = if a < 1.0 {
                    0
                } else if a > 1.0 && b > 1.0 {
                    1
                } else if bb[0] != 0.0 {
                    2
                } else {
                    3
                };
                if k < 2 {
                    assert!(e[0] != 0.0);
                }
                short_hits[k] = true;
                let (e, bb) = long_time_constants(&q, &asym()).unwrap();
                let k = if b > 2.0 {
                    4
                } else if a < 1.0 && b < 1.0 {
                    0
                } else if b > 1.0 {
                    1
                } else if bb[0] != 0.0 {
                    2
                } else {
                    3
                };
                if k == 3 {
                    assert_eq!(e[0], 0.0);
                }
                long_hits[k] = true;
            }
        }
        // alpha = 1 exactly is not on the grid; check that branch directly
        let (e, b) = short_time_constants(&LayeredQ::canonical(1.0, 0.5, 3.0).unwrap(), &asym()).unwrap();
        assert!(e[0] == 0.0 && b[0] == 0.0);
        short_hits[3] = true;
        let (e, b) = long_time_constants(&LayeredQ::canonical(1.5, 1.0, 3.0).unwrap(), &asym()).unwrap();
        assert!(e[0] == 0.0 && b[0] == 0.0);
        long_hits[3] = true;
        assert!(short_hits.iter().all(|x| *x), "{short_hits:?}");
        assert!(long_hits.iter().all(|x| *x), "{long_hits:?}");
    }

    #[test]
    fn custom_constants_match_quadrature_oracle() {
        let q = LayeredQ::blend(0.6, 1.4, 2.0, 1).unwrap();
        let qq = q.clone();
        let f = move |r: f64| r * qq.q(r, &[1.0]);
        let inner = integrate(&f, 0.0, 1.0, Tolerance::new(1e-12, 1e-10)).unwrap().value;
        // r = e^u; the integrand decays like e^{-0.4u}
        let outer = integrate(|u: f64| u.exp() * f(u.exp()), 0.0, 100.0, Tolerance::new(1e-13, 1e-12)).unwrap().value;
        let (e, _) = short_time_constants(&q, &asym()).unwrap();
        assert!((e[0] - inner).abs() < 1e-8, "{} vs {inner}", e[0]);
        let (e, _) = long_time_constants(&q, &asym()).unwrap();
        assert!((e[0] + outer).abs() < 1e-8, "{} vs {outer}", e[0]);
    }

    #[test]
    fn gaussian_covariance_examples() {
        let q = LayeredQ::canonical(1.1, 2.5, 2.0).unwrap();
        let c = gaussian_covariance(&q, &sym(2.0)).unwrap();
        assert!((c[(0, 0)] - (1.0 / 0.9 + 2.0)).abs() < 1e-13);

        let s = SphericalMeasure::discrete(2, &[(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0)]).unwrap();
        let q = LayeredQ::canonical(1.0, 3.0, 2.0).unwrap();
        let c = gaussian_covariance(&q, &s).unwrap();
        assert!((c.clone() - DMatrix::identity(2, 2)).norm() < 1e-14);
        assert!(gaussian_covariance(&LayeredQ::canonical(1.0, 2.0, 2.0).unwrap(), &s).is_err());

        let q = LayeredQ::canonical(1.1, 200.0, 2.0).unwrap();
        let c = gaussian_covariance(&q, &sym(2.0)).unwrap();
        assert!((c[(0, 0)] - 1.0 / 0.9).abs() < 0.01);

        // quadrature oracle for the radial factor
        let q = LayeredQ::canonical(1.1, 2.5, 2.0).unwrap();
        let f = |r: f64| r * r * q.q(r, &[1.0]);
        let r = integrate(f, 0.0, 1.0, Tolerance::default()).unwrap().value
            + integrate(|u: f64| u.exp() * f(u.exp()), 0.0, 120.0, Tolerance::new(1e-13, 1e-12)).unwrap().value;
        assert!((r * 2.0 - 3.111_111_111_111_111).abs() < 1e-8);
    }

    fn path() -> SamplePath {
        let q_sigma = asym();
        let draw = draw_for_path(7, 0, 2.0, &q_sigma, 2000.0, &DrawFeatures::default()).unwrap();
        layered_path_canonical(1.3, 1.9, &q_sigma, &draw, &uniform_grid(2.0, 50)).unwrap()
    }

    #[test]
    fn rescale_identity_is_bitwise() {
        let p = path();
        let q = LayeredQ::canonical(1.3, 1.9, 3.0).unwrap();
        let mut spec = LimitSpec::short(&q, &sym(3.0), 1.0).unwrap();
        spec.eta = DVector::zeros(1);
        spec.b = DVector::zeros(1);
        assert_eq!(rescale_path(&p, &spec).unwrap(), p);
    }

    #[test]
    fn rescale_cancels_matching_drift() {
        let eta = 0.37;
        let grid = uniform_grid(4.0, 8);
        let p = SamplePath {
            dim: 1,
            values: grid.iter().map(|t| -eta * t).collect(),
            grid,
            jump_times: vec![],
            jump_vectors: vec![],
            drift_rate: vec![-eta],
            gaussian: None,
        };
        let q = LayeredQ::canonical(1.3, 1.9, 3.0).unwrap();
        let mut spec = LimitSpec::short(&q, &sym(3.0), 4.0).unwrap();
        spec.eta = DVector::from_element(1, eta);
        let r = rescale_path(&p, &spec).unwrap();
        assert_eq!(*r.grid.last().unwrap(), 1.0);
        assert!(r.values.iter().all(|v| v.abs() < 1e-15));
        assert!(r.drift_rate[0].abs() < 1e-15);
    }

    #[test]
    fn rescale_matches_reconstruction() {
        let p = path();
        let q = LayeredQ::canonical(1.3, 1.9, 3.0).unwrap();
        let spec = LimitSpec::short(&q, &asym(), 0.5).unwrap();
        let r = rescale_path(&p, &spec).unwrap();
        for g in [0, 10, 37, 50] {
            let v = r.reconstruct(g);
            assert!((v[0] - r.value(g)[0]).abs() < 1e-9 * (1.0 + v[0].abs()), "g {g}");
        }
        let bad = SamplePath { grid: vec![0.5, 1.0], values: vec![0.0, 0.0], ..p };
        assert!(rescale_path(&bad, &spec).is_err());
    }

    #[test]
    fn spec_targets() {
        let q = LayeredQ::canonical(1.3, 1.9, 3.0).unwrap();
        let s = LimitSpec::short(&q, &asym(), 1e-3).unwrap();
        assert_eq!(s.index, 1.3);
        match &s.target {
            LimitTarget::Stable { alpha, sigma } => {
                assert_eq!(*alpha, 1.3);
                assert!((sigma.total_mass() - 1.0).abs() < 1e-15);
            }
            _ => panic!(),
        }
        let l = LimitSpec::long(&LayeredQ::canonical(1.3, 2.5, 3.0).unwrap(), &asym(), 100.0).unwrap();
        assert_eq!(l.mode, LimitMode::LongGaussian);
        assert!(LimitSpec::long(&q, &asym(), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn covariance_is_psd(a in 0.1f64..1.99, b in 2.05f64..6.0, w1 in 0.1f64..3.0, w2 in 0.1f64..3.0, th in 0.0f64..3.0) {
            let s = SphericalMeasure::discrete(2, &[(vec![1.0, 0.0], w1), (vec![th.cos(), th.sin()], w2)]).unwrap();
            let q = LayeredQ::canonical(a, b, w1 + w2).unwrap();
            let c = gaussian_covariance(&q, &s).unwrap();
            prop_assert!((c.clone() - c.transpose()).norm() < 1e-14);
            let e = c.symmetric_eigen();
            prop_assert!(e.eigenvalues.iter().all(|x| *x > -1e-12));
        }
    }
}
