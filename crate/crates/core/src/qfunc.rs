//! Layered q-functions: radial densities with inner index alpha near the
//! origin and outer index beta at infinity.

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate_log, integrate_log_to_infinity, Tolerance};
use crate::spherical::{axis_directions, SphericalMeasure};
use std::fmt;
use std::sync::Arc;

/// A user-supplied radial density with its limit constants.
pub trait RadialDensity: Send + Sync {
    fn q(&self, r: f64, xi: &[f64]) -> f64;
    fn c1(&self, xi: &[f64]) -> f64;
    fn c2(&self, xi: &[f64]) -> f64;
    fn name(&self) -> String {
        "custom".to_string()
    }
    /// Exact ln(q / (c1 r^{-alpha-1})) when available; avoids cancellation
    /// near the origin.
    fn log_ratio_inner(&self, _r: f64, _xi: &[f64]) -> Option<f64> {
        None
    }
    /// Exact ln(q / (c2 r^{-beta-1})) when available.
    fn log_ratio_outer(&self, _r: f64, _xi: &[f64]) -> Option<f64> {
        None
    }
}

struct FnDensity<Q, C1, C2> {
    q: Q,
    c1: C1,
    c2: C2,
}

impl<Q, C1, C2> RadialDensity for FnDensity<Q, C1, C2>
where
    Q: Fn(f64, &[f64]) -> f64 + Send + Sync,
    C1: Fn(&[f64]) -> f64 + Send + Sync,
    C2: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn q(&self, r: f64, xi: &[f64]) -> f64 {
        (self.q)(r, xi)
    }
    fn c1(&self, xi: &[f64]) -> f64 {
        (self.c1)(xi)
    }
    fn c2(&self, xi: &[f64]) -> f64 {
        (self.c2)(xi)
    }
}

/// q(r) = mass^{-1} r^{-alpha-1} (1+r)^{alpha-beta}; c1 = c2 = 1/mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blend {
    pub alpha: f64,
    pub beta: f64,
    pub mass: f64,
}

impl RadialDensity for Blend {
    fn q(&self, r: f64, _xi: &[f64]) -> f64 {
        r.powf(-self.alpha - 1.0) * (1.0 + r).powf(self.alpha - self.beta) / self.mass
    }
    fn c1(&self, _xi: &[f64]) -> f64 {
        1.0 / self.mass
    }
    fn c2(&self, _xi: &[f64]) -> f64 {
        1.0 / self.mass
    }
    fn name(&self) -> String {
        format!("blend(mass={})", self.mass)
    }
    fn log_ratio_inner(&self, r: f64, _xi: &[f64]) -> Option<f64> {
        Some((self.alpha - self.beta) * r.ln_1p())
    }
    fn log_ratio_outer(&self, r: f64, _xi: &[f64]) -> Option<f64> {
        Some((self.alpha - self.beta) * (1.0 / r).ln_1p())
    }
}

#[derive(Clone)]
pub enum QKind {
    Canonical { sigma_mass: f64 },
    Custom { density: Arc<dyn RadialDensity>, dim: usize },
}

impl fmt::Debug for QKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QKind::Canonical { sigma_mass } => write!(f, "Canonical {{ sigma_mass: {sigma_mass} }}"),
            QKind::Custom { density, dim } => write!(f, "Custom {{ {}, dim: {dim} }}", density.name()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayeredQ {
    alpha: f64,
    beta: f64,
    kind: QKind,
}

/// sigma1 and sigma2: the base measure reweighted by c1 and c2.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedSphericalPair {
    pub sigma1: SphericalMeasure,
    pub sigma2: SphericalMeasure,
}

fn tol() -> Tolerance {
    Tolerance::new(1e-300, 1e-13)
}

fn gap_tol() -> Tolerance {
    Tolerance::new(1e-14, 1e-12)
}

/// Integral of r^e over [a, b], with a = 0 or b = inf allowed when finite.
pub(crate) fn pow_integral(e: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if e == -1.0 {
        return (b / a).ln();
    }
    let p = e + 1.0;
    let fb = if b.is_infinite() { 0.0 } else { b.powf(p) };
    let fa = if a == 0.0 { 0.0 } else { a.powf(p) };
    (fb - fa) / p
}

impl LayeredQ {
    fn check_indices(alpha: f64, beta: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return invalid(format!("alpha = {alpha} must lie in (0,2)"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return invalid(format!("beta = {beta} must be positive"));
        }
        Ok(())
    }

    /// q(r) = sigma_mass^{-1} (r^{-alpha-1} on (0,1], r^{-beta-1} on (1,inf)).
    pub fn canonical(alpha: f64, beta: f64, sigma_mass: f64) -> Result<Self> {
        Self::check_indices(alpha, beta)?;
        if !(sigma_mass > 0.0 && sigma_mass.is_finite()) {
            return invalid(format!("sigma_mass = {sigma_mass} must be positive"));
        }
        Ok(LayeredQ { alpha, beta, kind: QKind::Canonical { sigma_mass } })
    }

    /// Custom density in dimension `dim`. The asymptotics q r^{alpha+1} -> c1
    /// and q r^{beta+1} -> c2 are spot-checked at r = 1e-6 and 1e6 on the
    /// signed coordinate axes, as is positivity on a log grid.
    pub fn custom(alpha: f64, beta: f64, dim: usize, density: Arc<dyn RadialDensity>) -> Result<Self> {
        Self::check_indices(alpha, beta)?;
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        for xi in axis_directions(dim) {
            for k in 0..=48 {
                let r = 10f64.powf(-6.0 + 0.25 * k as f64);
                let v = density.q(r, &xi);
                if !(v.is_finite() && v > 0.0) {
                    return invalid(format!("q({r:e}, {xi:?}) = {v} is not positive and finite"));
                }
            }
            let near = |r: f64, idx: f64, c: f64, which: &str| -> Result<()> {
                let v = density.q(r, &xi) * r.powf(idx + 1.0);
                let ok = if c > 0.0 { (v / c - 1.0).abs() <= 0.05 } else { c == 0.0 && v <= 0.05 };
                if ok {
                    Ok(())
                } else {
                    invalid(format!("q r^{{{}}} = {v:e} at r = {r:e} does not match {which} = {c:e}", idx + 1.0))
                }
            };
            near(1e-6, alpha, density.c1(&xi), "c1")?;
            near(1e6, beta, density.c2(&xi), "c2")?;
        }
        Ok(LayeredQ { alpha, beta, kind: QKind::Custom { density, dim } })
    }

    pub fn from_fns<Q, C1, C2>(alpha: f64, beta: f64, dim: usize, q: Q, c1: C1, c2: C2) -> Result<Self>
    where
        Q: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        C1: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        C2: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::custom(alpha, beta, dim, Arc::new(FnDensity { q, c1, c2 }))
    }

    pub fn blend(alpha: f64, beta: f64, mass: f64, dim: usize) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return invalid(format!("mass = {mass} must be positive"));
        }
        Self::custom(alpha, beta, dim, Arc::new(Blend { alpha, beta, mass }))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> &QKind {
        &self.kind
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self.kind, QKind::Canonical { .. })
    }

    /// Checks that the q can be paired with `sigma`: matching dimension,
    /// and direction independence over a uniform measure.
    pub fn validate_for(&self, sigma: &SphericalMeasure) -> Result<()> {
        if let QKind::Custom { density, dim } = &self.kind {
            if *dim != sigma.dim() {
                return invalid(format!("q has dimension {dim}, spherical measure {}", sigma.dim()));
            }
            if sigma.is_uniform() {
                let probes = axis_directions(*dim);
                for r in [1e-3, 0.5, 1.0, 2.0, 1e3] {
                    let q0 = density.q(r, &probes[0]);
                    for p in &probes[1..] {
                        if (density.q(r, p) - q0).abs() > 1e-12 * q0 {
                            return invalid("direction-dependent q over a uniform spherical measure");
                        }
                    }
                }
                let (a0, b0) = (density.c1(&probes[0]), density.c2(&probes[0]));
                if probes.iter().any(|p| density.c1(p) != a0 || density.c2(p) != b0) {
                    return invalid("direction-dependent c1/c2 over a uniform spherical measure");
                }
            }
        }
        Ok(())
    }

    /// q(r, xi) without argument checks.
    #[inline]
    pub fn q(&self, r: f64, xi: &[f64]) -> f64 {
        match &self.kind {
            QKind::Canonical { sigma_mass } => {
                if r <= 1.0 {
                    r.powf(-self.alpha - 1.0) / sigma_mass
                } else {
                    r.powf(-self.beta - 1.0) / sigma_mass
                }
            }
            QKind::Custom { density, .. } => density.q(r, xi),
        }
    }

    pub fn eval_q(&self, r: f64, xi: &[f64]) -> Result<f64> {
        if !(r > 0.0) {
            return invalid(format!("q needs r > 0, got {r}"));
        }
        Ok(self.q(r, xi))
    }

    pub fn c1(&self, xi: &[f64]) -> f64 {
        match &self.kind {
            QKind::Canonical { sigma_mass } => 1.0 / sigma_mass,
            QKind::Custom { density, .. } => density.c1(xi),
        }
    }

    pub fn c2(&self, xi: &[f64]) -> f64 {
        match &self.kind {
            QKind::Canonical { sigma_mass } => 1.0 / sigma_mass,
            QKind::Custom { density, .. } => density.c2(xi),
        }
    }

    /// Integral of r^k q(r, xi) over [a, b]; a = 0 needs k > alpha and
    /// b = inf needs k < beta.
    pub fn power_moment(&self, k: f64, a: f64, b: f64, xi: &[f64]) -> Result<f64> {
        if !(a >= 0.0 && b >= a) {
            return invalid(format!("bad radial range [{a}, {b}]"));
        }
        if a == 0.0 && k <= self.alpha {
            return invalid(format!("r^{k} q is not integrable at 0 (alpha = {})", self.alpha));
        }
        if b.is_infinite() && k >= self.beta {
            return invalid(format!("r^{k} q is not integrable at infinity (beta = {})", self.beta));
        }
        if b == a {
            return Ok(0.0);
        }
        match &self.kind {
            QKind::Canonical { sigma_mass } => {
                let inner = pow_integral(k - self.alpha - 1.0, a, b.min(1.0));
                let outer = pow_integral(k - self.beta - 1.0, a.max(1.0), b);
                Ok((inner + outer) / sigma_mass)
            }
            QKind::Custom { density, .. } => {
                let f = |r: f64| r.powf(k) * density.q(r, xi);
                let mut total = 0.0;
                let mut lo = a;
                if a == 0.0 {
                    // leading-order head below a tiny radius
                    let tiny = 1e-14 * b.min(1.0);
                    total += density.c1(xi) * tiny.powf(k - self.alpha) / (k - self.alpha);
                    lo = tiny;
                }
                if lo < 1.0 {
                    let hi = b.min(1.0);
                    total += integrate_log(f, lo, hi, tol())?.value;
                }
                if b > 1.0 {
                    let start = lo.max(1.0);
                    total += if b.is_infinite() {
                        integrate_log_to_infinity(f, start, tol())?.value
                    } else {
                        integrate_log(f, start, b, tol())?.value
                    };
                }
                Ok(total)
            }
        }
    }

    /// Q(r, xi) = integral of q(s, xi) over [r, inf).
    pub fn tail_integral(&self, r: f64, xi: &[f64]) -> Result<f64> {
        if !(r > 0.0) {
            return invalid(format!("tail integral needs r > 0, got {r}"));
        }
        if r.is_infinite() {
            return Ok(0.0);
        }
        match &self.kind {
            QKind::Canonical { sigma_mass } => {
                let (a, b) = (self.alpha, self.beta);
                Ok(if r <= 1.0 {
                    ((r.powf(-a) - 1.0) / a + 1.0 / b) / sigma_mass
                } else {
                    r.powf(-b) / b / sigma_mass
                })
            }
            QKind::Custom { .. } => self.power_moment(0.0, r, f64::INFINITY, xi),
        }
    }

    /// Generalized inverse of Q(., xi): inf{r > 0 : Q(r, xi) < u}.
    pub fn inverse_tail(&self, u: f64, xi: &[f64]) -> Result<f64> {
        if !(u > 0.0) {
            return invalid(format!("inverse tail needs u > 0, got {u}"));
        }
        if u.is_infinite() {
            return Ok(0.0);
        }
        match &self.kind {
            QKind::Canonical { sigma_mass } => Ok(self.canonical_inverse(u, *sigma_mass)),
            QKind::Custom { density, .. } => self.custom_inverse(u, density.as_ref(), xi),
        }
    }

    #[inline]
    pub(crate) fn canonical_inverse(&self, u: f64, m: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        let mu = m * u;
        if mu * b <= 1.0 {
            (b * mu).powf(-1.0 / b)
        } else {
            (a * mu + 1.0 - a / b).powf(-1.0 / a)
        }
    }

    fn custom_inverse(&self, u: f64, density: &dyn RadialDensity, xi: &[f64]) -> Result<f64> {
        // Q(1) splits the search: Q(r) = Q(1) + int_r^1 q for r < 1
        let q1 = self.tail_integral(1.0, xi)?;
        let big_q = |x: f64| -> Result<f64> {
            let r = x.exp();
            if r < 1.0 {
                Ok(q1 + integrate_log(|s: f64| density.q(s, xi), r, 1.0, tol())?.value)
            } else {
                self.tail_integral(r, xi)
            }
        };
        let g = |x: f64| -> Result<f64> { Ok(big_q(x)?.ln() - u.ln()) };
        // bracket in x = ln r: g decreasing, want g(lo) >= 0 > g(hi)
        let (mut lo, mut hi);
        let g0 = g(0.0)?;
        if g0 >= 0.0 {
            lo = 0.0;
            hi = 1.0;
            while g(hi)? >= 0.0 {
                lo = hi;
                hi *= 2.0;
                if hi > 1400.0 {
                    return Err(Error::Quadrature(format!("cannot bracket inverse tail at u = {u:e}")));
                }
            }
        } else {
            hi = 0.0;
            lo = -1.0;
            while g(lo)? < 0.0 {
                hi = lo;
                lo *= 2.0;
                if lo < -1400.0 {
                    return Ok(0.0);
                }
            }
        }
        // safeguarded Newton in log-log coordinates, d/dx ln Q = -r q / Q
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let qx = big_q(x)?;
            let gx = qx.ln() - u.ln();
            if gx >= 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let r = x.exp();
            let slope = -r * density.q(r, xi) / qx;
            let mut next = x - gx / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-14 * x.abs().max(1.0) || hi - lo <= 1e-14 * lo.abs().max(1.0) {
                return Ok(next.exp());
            }
            x = next;
        }
        Ok(x.exp())
    }

    /// sigma1 = c1 sigma and sigma2 = c2 sigma.
    pub fn derive_sigma_pair(&self, sigma: &SphericalMeasure) -> Result<DerivedSphericalPair> {
        self.validate_for(sigma)?;
        Ok(DerivedSphericalPair {
            sigma1: sigma.reweighted(|xi| self.c1(xi))?,
            sigma2: sigma.reweighted(|xi| self.c2(xi))?,
        })
    }

    /// Sum over the spherical measure of per-direction radial quantities.
    pub(crate) fn sphere_sum(&self, sigma: &SphericalMeasure, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
        if sigma.is_uniform() {
            let e1 = &axis_directions(sigma.dim())[0];
            return Ok(sigma.total_mass() * f(e1)?);
        }
        let mut acc = 0.0;
        for (xi, w) in sigma.atoms() {
            if w != 0.0 {
                acc += w * f(xi)?;
            }
        }
        Ok(acc)
    }

    /// nu({|z| > x}) = integral over sigma of Q(x, xi).
    pub fn levy_tail_mass(&self, sigma: &SphericalMeasure, x: f64) -> Result<f64> {
        self.validate_for(sigma)?;
        self.sphere_sum(sigma, |xi| self.tail_integral(x, xi))
    }

    /// Integral over [eps, inf) of q(r, xi) - c1(xi) r^{-alpha-1}.
    pub fn tail_gap(&self, eps: f64, xi: &[f64]) -> Result<f64> {
        if !(eps > 0.0) {
            return invalid("tail gap needs eps > 0");
        }
        match &self.kind {
            QKind::Canonical { sigma_mass } => {
                let (a, b) = (self.alpha, self.beta);
                Ok(if eps <= 1.0 {
                    (1.0 / b - 1.0 / a) / sigma_mass
                } else {
                    (eps.powf(-b) / b - eps.powf(-a) / a) / sigma_mass
                })
            }
            QKind::Custom { density, .. } => {
                let a = self.alpha;
                let c1 = density.c1(xi);
                let f = |r: f64| density.q(r, xi) - c1 * r.powf(-a - 1.0);
                let mut total = 0.0;
                if eps < 1.0 {
                    total += integrate_log(f, eps, 1.0, gap_tol())?.value;
                }
                // beyond 1 the two tails are integrated separately
                let start = eps.max(1.0);
                total += self.tail_integral(start, xi)? - c1 * start.powf(-a) / a;
                Ok(total)
            }
        }
    }

    /// Integral over (0, 1] of r (q(r, xi) - c1(xi) r^{-alpha-1}); zero for
    /// the canonical q. The difference is formed as c1 r^{-alpha-1} expm1(phi).
    pub fn inner_gap_moment(&self, xi: &[f64]) -> Result<f64> {
        if self.is_canonical() {
            return Ok(0.0);
        }
        let a = self.alpha;
        let c1 = self.c1(xi);
        let f = |r: f64| c1 * r.powf(-a) * self.log_ratio_inner(r, xi).exp_m1();
        // below r0 the integrand is extrapolated as a power law
        let r0: f64 = 1e-60;
        let (f0, f1) = (f(r0), f(2.0 * r0));
        let head = if f0 != 0.0 && f1 / f0 > 0.0 {
            let p = (f1 / f0).log2();
            if p > -1.0 {
                f0 * r0 / (p + 1.0)
            } else {
                return Err(Error::Quadrature("inner gap moment diverges at the origin".into()));
            }
        } else {
            0.0
        };
        Ok(head + integrate_log(f, r0, 1.0, gap_tol())?.value)
    }

    /// phi = ln(q / (c1 r^{-alpha-1})) as a function of radius and direction.
    #[inline]
    pub fn log_ratio_inner(&self, r: f64, xi: &[f64]) -> f64 {
        match &self.kind {
            QKind::Canonical { .. } => {
                if r <= 1.0 {
                    0.0
                } else {
                    (self.alpha - self.beta) * r.ln()
                }
            }
            QKind::Custom { density, .. } => density
                .log_ratio_inner(r, xi)
                .unwrap_or_else(|| density.q(r, xi).ln() - density.c1(xi).ln() + (self.alpha + 1.0) * r.ln()),
        }
    }

    /// psi = ln(q / (c2 r^{-beta-1})).
    #[inline]
    pub fn log_ratio_outer(&self, r: f64, xi: &[f64]) -> f64 {
        match &self.kind {
            QKind::Canonical { .. } => {
                if r >= 1.0 {
                    0.0
                } else {
                    (self.beta - self.alpha) * r.ln()
                }
            }
            QKind::Custom { density, .. } => density
                .log_ratio_outer(r, xi)
                .unwrap_or_else(|| density.q(r, xi).ln() - density.c2(xi).ln() + (self.beta + 1.0) * r.ln()),
        }
    }
}
