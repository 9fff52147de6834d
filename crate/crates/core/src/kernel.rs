//! Parametric finite-support excitation kernels, their grid discretizations,
//! and analytic parameter gradients.
//!
//! Both kernel families are written as `amplitude * shape(t)`:
//! the truncated Gaussian shape integrates to one over `[0, support]`, the
//! raised-cosine shape is the bare `1 + cos` bump whose integral is `2 * s`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::{PI, SQRT_2};

/// Lower clamp applied to scale-like kernel parameters during projection.
pub const SCALE_FLOOR: f64 = 1e-3;

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}

/// Number of grid cells covering an interval of length `span`, i.e.
/// `floor(span / delta)` made robust against `span/delta` landing a few ulps
/// below an integer.
pub fn grid_len(span: f64, delta: f64) -> usize {
    let x = span / delta;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    TruncatedGaussian,
    RaisedCosine,
}

/// Truncated Gaussian kernel `alpha * N(m, sigma^2)` renormalized on `[0, support]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncGaussKernel {
    pub alpha: f64,
    pub m: f64,
    pub sigma: f64,
    pub support: f64,
}

impl TruncGaussKernel {
    pub fn new(alpha: f64, m: f64, sigma: f64, support: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must be >= 0")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} must be > 0")));
        }
        if !(support.is_finite() && support > 0.0) {
            return Err(Error::InvalidParameter(format!("support = {support} must be > 0")));
        }
        if !m.is_finite() {
            return Err(Error::InvalidParameter(format!("m = {m} must be finite")));
        }
        let k = Self { alpha, m, sigma, support };
        if k.normalizer() < 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "truncated Gaussian carries no mass on [0, {support}] (m = {m}, sigma = {sigma})"
            )));
        }
        Ok(k)
    }

    /// Mass of the untruncated normal on `[0, support]`.
    fn normalizer(&self) -> f64 {
        let hi = (self.support - self.m) / self.sigma;
        let lo = -self.m / self.sigma;
        normal_cdf(hi) - normal_cdf(lo)
    }

    fn shape(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.support {
            return 0.0;
        }
        let x = (t - self.m) / self.sigma;
        normal_pdf(x) / (self.sigma * self.normalizer())
    }

    /// Gradients of the full kernel value at `t` w.r.t. `(alpha, m, sigma)`,
    /// including the derivative of the normalizing constant.
    fn grads(&self, t: f64) -> [f64; 3] {
        if t < 0.0 || t > self.support {
            return [0.0; 3];
        }
        let x = (t - self.m) / self.sigma;
        let a = -self.m / self.sigma;
        let b = (self.support - self.m) / self.sigma;
        let z = self.normalizer();
        let gx = normal_pdf(x);
        let ga = normal_pdf(a);
        let gb = normal_pdf(b);
        let s2 = self.sigma * self.sigma;
        let d_alpha = gx / (self.sigma * z);
        let d_m = self.alpha / s2 * gx / z * (x - (ga - gb) / z);
        let d_sigma = self.alpha / s2 * gx / z * (x * x - 1.0 - (a * ga - b * gb) / z);
        [d_alpha, d_m, d_sigma]
    }
}

/// Raised-cosine bump `alpha * (1 + cos(pi (t - u)/s - pi))` on `[u, u + 2s]`.
///
/// The bump must fit inside the declared support: `u + 2s <= support`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaisedCosineKernel {
    pub alpha: f64,
    pub u: f64,
    pub s: f64,
    pub support: f64,
}

impl RaisedCosineKernel {
    pub fn new(alpha: f64, u: f64, s: f64, support: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must be >= 0")));
        }
        if !(u.is_finite() && u >= 0.0) {
            return Err(Error::InvalidParameter(format!("u = {u} must be >= 0")));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParameter(format!("s = {s} must be > 0")));
        }
        if u + 2.0 * s > support * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "raised cosine exceeds its support: u + 2s = {} > {support}",
                u + 2.0 * s
            )));
        }
        Ok(Self { alpha, u, s, support })
    }

    fn phase(&self, t: f64) -> f64 {
        PI * (t - self.u) / self.s - PI
    }

    fn shape(&self, t: f64) -> f64 {
        if t < self.u || t > self.u + 2.0 * self.s {
            return 0.0;
        }
        1.0 + self.phase(t).cos()
    }

    fn grads(&self, t: f64) -> [f64; 3] {
        if t < self.u || t > self.u + 2.0 * self.s {
            return [0.0; 3];
        }
        let theta = self.phase(t);
        let d_alpha = 1.0 + theta.cos();
        let d_u = self.alpha * PI * theta.sin() / self.s;
        let d_s = self.alpha * PI * (t - self.u) * theta.sin() / (self.s * self.s);
        [d_alpha, d_u, d_s]
    }
}

/// A kernel together with its family tag; the unit the rest of the crate
/// passes around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelParams {
    TruncatedGaussian(TruncGaussKernel),
    RaisedCosine(RaisedCosineKernel),
}

/// Grid samples `values[tau] = evaluate(tau * delta)` for `tau in 0..=L`,
/// with optional per-parameter gradient vectors of the same layout.
///
/// The `tau = 0` entry is stored but every loss sum starts at `tau = 1`.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pub values: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

impl KernelParams {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelParams::TruncatedGaussian(_) => KernelFamily::TruncatedGaussian,
            KernelParams::RaisedCosine(_) => KernelFamily::RaisedCosine,
        }
    }

    pub fn support(&self) -> f64 {
        match self {
            KernelParams::TruncatedGaussian(k) => k.support,
            KernelParams::RaisedCosine(k) => k.support,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            KernelParams::TruncatedGaussian(k) => k.alpha,
            KernelParams::RaisedCosine(k) => k.alpha,
        }
    }

    /// Full kernel value `alpha * shape(t)`; zero outside the support.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.alpha() * self.shape_eval(t)
    }

    /// Amplitude-free shape value.
    pub fn shape_eval(&self, t: f64) -> f64 {
        match self {
            KernelParams::TruncatedGaussian(k) => k.shape(t),
            KernelParams::RaisedCosine(k) => k.shape(t),
        }
    }

    /// Integral of the shape over its support (1 for the truncated Gaussian,
    /// `2s` for the raised cosine).
    pub fn shape_integral(&self) -> f64 {
        match self {
            KernelParams::TruncatedGaussian(_) => 1.0,
            KernelParams::RaisedCosine(k) => 2.0 * k.s,
        }
    }

    /// Max of the shape over a dense sampling grid; used as a thinning bound
    /// (callers should apply a small safety factor).
    pub fn shape_max_discrete(&self, n: usize) -> f64 {
        let w = self.support();
        let mut max = 0.0f64;
        for i in 0..=n {
            let v = self.shape_eval(w * i as f64 / n as f64);
            if v > max {
                max = v;
            }
        }
        max
    }

    /// Sample the kernel on the lag grid: `values[tau] = evaluate(tau * delta)`.
    pub fn discretize(&self, delta: f64) -> Result<DiscreteKernel> {
        self.sample_grid(delta, false)
    }

    /// As `discretize`, additionally filling analytic gradients w.r.t. each
    /// parameter in `param_names()` order.
    pub fn param_grad(&self, delta: f64) -> Result<DiscreteKernel> {
        self.sample_grid(delta, true)
    }

    fn sample_grid(&self, delta: f64, with_grads: bool) -> Result<DiscreteKernel> {
        let w = self.support();
        if !(delta > 0.0) || delta > w {
            return Err(Error::Config(format!(
                "kernel stepsize delta = {delta} must lie in (0, {w}]"
            )));
        }
        let l = grid_len(w, delta);
        let mut values = vec![0.0; l + 1];
        for (tau, v) in values.iter_mut().enumerate() {
            *v = self.evaluate(tau as f64 * delta);
        }
        let grads = if with_grads {
            let np = self.param_names().len();
            let mut grads = vec![vec![0.0; l + 1]; np];
            for tau in 0..=l {
                let t = tau as f64 * delta;
                let g = match self {
                    KernelParams::TruncatedGaussian(k) => k.grads(t),
                    KernelParams::RaisedCosine(k) => k.grads(t),
                };
                for (p, gp) in grads.iter_mut().enumerate() {
                    gp[tau] = g[p];
                }
            }
            grads
        } else {
            Vec::new()
        };
        Ok(DiscreteKernel { values, grads })
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            KernelParams::TruncatedGaussian(_) => &["alpha", "m", "sigma"],
            KernelParams::RaisedCosine(_) => &["alpha", "u", "s"],
        }
    }

    pub fn param_values(&self) -> Vec<f64> {
        match self {
            KernelParams::TruncatedGaussian(k) => vec![k.alpha, k.m, k.sigma],
            KernelParams::RaisedCosine(k) => vec![k.alpha, k.u, k.s],
        }
    }

    /// Rebuild the kernel from a raw parameter vector (same order as
    /// `param_names`), validating invariants.
    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        match self {
            KernelParams::TruncatedGaussian(k) => Ok(KernelParams::TruncatedGaussian(
                TruncGaussKernel::new(p[0], p[1], p[2], k.support)?,
            )),
            KernelParams::RaisedCosine(k) => Ok(KernelParams::RaisedCosine(
                RaisedCosineKernel::new(p[0], p[1], p[2], k.support)?,
            )),
        }
    }

    /// Clamp a raw parameter vector into the feasible box used by the
    /// projected-gradient solver. For the raised cosine the half-width is
    /// clamped after the onset so the bump always fits the support.
    pub fn project_params(&self, p: &mut [f64]) {
        let w = self.support();
        p[0] = p[0].max(0.0);
        match self {
            KernelParams::TruncatedGaussian(_) => {
                p[1] = p[1].clamp(0.0, w);
                p[2] = p[2].clamp(SCALE_FLOOR, w);
            }
            KernelParams::RaisedCosine(_) => {
                p[1] = p[1].clamp(0.0, w - 2.0 * SCALE_FLOOR);
                p[2] = p[2].clamp(SCALE_FLOOR, (w - p[1]) / 2.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tg(alpha: f64) -> KernelParams {
        KernelParams::TruncatedGaussian(TruncGaussKernel::new(alpha, 0.5, 0.1, 1.0).unwrap())
    }

    fn rc() -> KernelParams {
        KernelParams::RaisedCosine(RaisedCosineKernel::new(1.0, 0.4, 0.1, 1.0).unwrap())
    }

    #[test]
    fn evaluate_outside_support_is_zero() {
        assert_eq!(tg(1.0).evaluate(1.5), 0.0);
        assert_eq!(tg(1.0).evaluate(-0.1), 0.0);
        assert_eq!(rc().evaluate(0.39), 0.0);
        assert_eq!(rc().evaluate(0.61), 0.0);
    }

    #[test]
    fn raised_cosine_boundary_is_exactly_zero() {
        // 1 + cos(-pi) = 0 at the onset, 1 + cos(pi) = 0 at the far edge.
        let k = rc();
        assert!(k.evaluate(0.4).abs() < 1e-12);
        assert!(k.evaluate(0.6).abs() < 1e-12);
    }

    #[test]
    fn truncated_gaussian_peak_value() {
        // (1/sigma) * pdf(0) / (F(5) - F(-5)), frozen from a high-precision
        // normal pdf/cdf evaluation.
        let v = tg(1.0).evaluate(0.5);
        assert!((v - 3.98942509116427333).abs() < 1e-12, "got {v}");
        let v03 = tg(1.0).evaluate(0.3);
        assert!((v03 - 0.53990997466396634).abs() < 1e-12, "got {v03}");
    }

    #[test]
    fn discretize_lengths() {
        let k = tg(1.0);
        let d = k.discretize(0.01).unwrap();
        assert_eq!(d.values.len(), 101); // L = 100 plus the stored tau = 0 slot
        let d1 = k.discretize(1.0).unwrap();
        assert_eq!(d1.values.len(), 2); // L = floor(W / delta) = 1
        assert!(k.discretize(0.0).is_err());
        assert!(k.discretize(1.5).is_err());
    }

    #[test]
    fn discretize_values_match_pointwise_eval() {
        let k = rc();
        let d = k.discretize(0.03).unwrap();
        for (tau, v) in d.values.iter().enumerate() {
            assert_eq!(*v, k.evaluate(tau as f64 * 0.03));
        }
    }

    #[test]
    fn amplitude_scales_linearly() {
        let d1 = tg(1.0).discretize(0.01).unwrap();
        let d2 = tg(2.0).discretize(0.01).unwrap();
        for (a, b) in d1.values.iter().zip(&d2.values) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn riemann_sum_approximates_shape_integral() {
        let delta = 1e-3;
        for k in [tg(1.0), rc()] {
            let d = k.discretize(delta).unwrap();
            let sum: f64 = d.values[1..].iter().sum::<f64>() * delta;
            let exact = k.alpha() * k.shape_integral();
            assert!(
                (sum - exact).abs() < 2e-3,
                "{:?}: riemann {sum} vs exact {exact}",
                k.family()
            );
        }
    }

    #[test]
    fn alpha_gradient_is_value_over_alpha() {
        let k = tg(1.7);
        let d = k.param_grad(0.05).unwrap();
        for tau in 0..d.values.len() {
            assert!((d.grads[0][tau] - d.values[tau] / 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn raised_cosine_grads_vanish_outside_support() {
        let k = rc();
        let d = k.param_grad(0.05).unwrap();
        // tau * 0.05 in {0, 0.05, ..., 0.35} and {0.65, ...} are outside [0.4, 0.6]
        for tau in [0usize, 3, 7, 13, 20] {
            for g in &d.grads {
                assert_eq!(g[tau], 0.0);
            }
        }
    }

    /// Central finite differences of the discretized values w.r.t. each shape
    /// parameter, over random draws. Grid points within a small band of the
    /// raised-cosine support edges are skipped: the value is only C^1 there,
    /// so second-order FD degrades while the analytic one-sided derivative is
    /// the correct limit.
    #[test]
    fn param_grads_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        let delta = 0.01;
        for draw in 0..50 {
            let w = 1.0;
            let k = if draw % 2 == 0 {
                let m = rng.gen_range(0.1..0.9);
                let sigma = rng.gen_range(0.05..0.3);
                let alpha = rng.gen_range(0.2..2.0);
                KernelParams::TruncatedGaussian(TruncGaussKernel::new(alpha, m, sigma, w).unwrap())
            } else {
                let u = rng.gen_range(0.0..0.5);
                let s = rng.gen_range(0.05..(w - u) / 2.0);
                let alpha = rng.gen_range(0.2..2.0);
                KernelParams::RaisedCosine(RaisedCosineKernel::new(alpha, u, s, w).unwrap())
            };
            let base = k.param_grad(delta).unwrap();
            let p0 = k.param_values();
            for pi in 0..p0.len() {
                let mut pp = p0.clone();
                let step = h * p0[pi].abs().max(1.0);
                pp[pi] = p0[pi] + step;
                let up = k.with_params(&pp).unwrap().discretize(delta).unwrap();
                pp[pi] = p0[pi] - step;
                let dn = k.with_params(&pp).unwrap().discretize(delta).unwrap();
                for tau in 0..base.values.len() {
                    if let KernelParams::RaisedCosine(rck) = &k {
                        let t = tau as f64 * delta;
                        let edge = (t - rck.u).abs().min((t - rck.u - 2.0 * rck.s).abs());
                        if edge < 20.0 * step {
                            continue;
                        }
                    }
                    let fd = (up.values[tau] - dn.values[tau]) / (2.0 * step);
                    let an = base.grads[pi][tau];
                    let tol = 1e-4 * an.abs().max(1e-4);
                    assert!(
                        (fd - an).abs() <= tol,
                        "draw {draw} param {pi} tau {tau}: fd {fd} vs analytic {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn construction_rejects_bad_params() {
        assert!(TruncGaussKernel::new(1.0, 0.5, 0.0, 1.0).is_err());
        assert!(TruncGaussKernel::new(-0.1, 0.5, 0.1, 1.0).is_err());
        assert!(TruncGaussKernel::new(1.0, 50.0, 0.1, 1.0).is_err()); // no mass on support
        assert!(RaisedCosineKernel::new(1.0, 0.9, 0.2, 1.0).is_err()); // u + 2s > W
        assert!(RaisedCosineKernel::new(1.0, -0.1, 0.2, 1.0).is_err());
    }

    #[test]
    fn projection_keeps_raised_cosine_inside_support() {
        let k = rc();
        let mut p = vec![-0.5, 0.95, 0.8];
        k.project_params(&mut p);
        assert_eq!(p[0], 0.0);
        assert!(p[1] + 2.0 * p[2] <= 1.0 + 1e-12);
        KernelParams::RaisedCosine(RaisedCosineKernel::new(p[0], p[1], p[2], 1.0).unwrap());
    }

    #[test]
    fn grid_len_is_robust_to_float_division() {
        assert_eq!(grid_len(1.0, 0.01), 100);
        assert_eq!(grid_len(1000.0, 0.01), 100_000);
        assert_eq!(grid_len(1.0, 1.0), 1);
        assert_eq!(grid_len(0.95, 0.1), 9);
    }
}
