//! Mark weight function, mark densities for the structured and noise
//! processes, and their squared-integral moments.
//!
//! Densities are piecewise linear on a compact support, which covers every
//! configuration used here (linear, uniform, small-mark) and lets all mark
//! integrals be evaluated exactly with low-order Gauss-Legendre rules.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// 5-point Gauss-Legendre nodes/weights on [-1, 1]; exact for polynomials of
/// degree <= 9, far above anything a piecewise-linear density produces.
const GL_NODES: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

fn gauss_segment(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Mark weight omega(kappa), shared across all type pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Omega {
    /// omega(kappa) = kappa
    Identity,
    /// omega(kappa) = 1 (unmarked reduction)
    One,
}

impl Omega {
    pub fn value(&self, kappa: f64) -> f64 {
        match self {
            Omega::Identity => kappa,
            Omega::One => 1.0,
        }
    }
}

/// Piecewise-linear density described by (kappa, density) knots with
/// ascending kappa; a repeated kappa encodes a jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Config("density table needs at least two knots".into()));
        }
        for w in knots.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(Error::Config("density knots must have ascending kappa".into()));
            }
        }
        if knots.iter().any(|&(_, y)| !(y.is_finite() && y >= 0.0)) {
            return Err(Error::Config("density values must be finite and nonnegative".into()));
        }
        Ok(Self { knots })
    }

    fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.knots
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| (w[0], w[1]))
    }

    pub fn value(&self, x: f64) -> f64 {
        for ((x0, y0), (x1, y1)) in self.segments() {
            if x >= x0 && x <= x1 {
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            }
        }
        0.0
    }

    /// Exact integral of `g(kappa) * f(kappa)` for polynomial `g` of low degree.
    pub fn integrate(&self, g: impl Fn(f64) -> f64 + Copy) -> f64 {
        let mut acc = 0.0;
        for ((x0, y0), (x1, y1)) in self.segments() {
            let lin = move |x: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            acc += gauss_segment(move |x| g(x) * lin(x), x0, x1);
        }
        acc
    }

    /// Inverse-CDF sample. Assumes total mass 1 (validated at model build).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut target = rng.gen::<f64>();
        let mut last = self.knots[0].0;
        for ((x0, y0), (x1, y1)) in self.segments() {
            let dx = x1 - x0;
            let mass = 0.5 * (y0 + y1) * dx;
            last = x1;
            if target > mass {
                target -= mass;
                continue;
            }
            let slope = (y1 - y0) / dx;
            // solve (slope/2) xi^2 + y0 xi = target for xi in [0, dx]
            let xi = if slope.abs() < 1e-12 * y0.abs().max(1e-12) {
                if y0 > 0.0 {
                    target / y0
                } else {
                    dx
                }
            } else {
                let disc = (y0 * y0 + 2.0 * slope * target).max(0.0);
                (disc.sqrt() - y0) / slope
            };
            return x0 + xi.clamp(0.0, dx);
        }
        last
    }
}

/// A density on the mark domain.
///
/// `Dirac` is the formal unmarked reduction: every density factor evaluates
/// to one, so mark-weighted sums collapse to event counts, and the squared
/// moment is taken as one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Density {
    Piecewise(PiecewiseLinear),
    Dirac { at: f64 },
}

impl Density {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Density::Piecewise(p) => p.value(x),
            Density::Dirac { .. } => 1.0,
        }
    }

    pub fn square_integral(&self) -> f64 {
        match self {
            Density::Piecewise(p) => p_square(p),
            Density::Dirac { .. } => 1.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Density::Piecewise(p) => p.integrate(|_| 1.0),
            Density::Dirac { .. } => 1.0,
        }
    }

    pub fn expected(&self, g: impl Fn(f64) -> f64 + Copy) -> f64 {
        match self {
            Density::Piecewise(p) => p.integrate(g),
            Density::Dirac { at } => g(*at),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Piecewise(p) => p.sample(rng),
            Density::Dirac { at } => *at,
        }
    }
}

fn p_square(p: &PiecewiseLinear) -> f64 {
    let mut acc = 0.0;
    for ((x0, y0), (x1, y1)) in p.segments() {
        let lin = move |x: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        acc += gauss_segment(move |x| lin(x) * lin(x), x0, x1);
    }
    acc
}

/// Which density an expectation is taken under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Under {
    F0,
    F1,
}

/// Mark weight, both mark densities, and cached squared moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkModel {
    pub support: (f64, f64),
    pub omega: Omega,
    pub f1: Density,
    pub f0: Density,
    pub h1: f64,
    pub h0: f64,
}

impl MarkModel {
    pub fn new(support: (f64, f64), omega: Omega, f1: Density, f0: Density) -> Result<Self> {
        if !(support.1 > support.0) {
            return Err(Error::Config("mark support must be a nonempty interval".into()));
        }
        for (name, d) in [("f1", &f1), ("f0", &f0)] {
            let mass = d.total_mass();
            if (mass - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "{name} must integrate to 1 over the mark support, got {mass}"
                )));
            }
            if let Density::Piecewise(p) = d {
                let (lo, hi) = support;
                if p.knots.iter().any(|&(x, _)| x < lo - 1e-12 || x > hi + 1e-12) {
                    return Err(Error::Config(format!("{name} knots outside the mark support")));
                }
            }
        }
        let h1 = f1.square_integral();
        let h0 = f0.square_integral();
        Ok(Self { support, omega, f1, f0, h1, h0 })
    }

    /// Named models used throughout the experiments, all on K = [0, 1]:
    /// `identity-linear` (f1 = 2k, f0 = 2(1-k)), `identity-uniform`
    /// (f0 = 1), `identity-smallmark` (f0 uniform on [0, 0.2]) and
    /// `unmarked` (omega = 1, Dirac marks at 1).
    pub fn builtin(name: &str) -> Result<Self> {
        let linear_up = Density::Piecewise(PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 2.0)])?);
        match name {
            "identity-linear" => {
                let f0 = Density::Piecewise(PiecewiseLinear::new(vec![(0.0, 2.0), (1.0, 0.0)])?);
                Self::new((0.0, 1.0), Omega::Identity, linear_up, f0)
            }
            "identity-uniform" => {
                let f0 = Density::Piecewise(PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 1.0)])?);
                Self::new((0.0, 1.0), Omega::Identity, linear_up, f0)
            }
            "identity-smallmark" => {
                let f0 = Density::Piecewise(PiecewiseLinear::new(vec![
                    (0.0, 5.0),
                    (0.2, 5.0),
                    (0.2, 0.0),
                    (1.0, 0.0),
                ])?);
                Self::new((0.0, 1.0), Omega::Identity, linear_up, f0)
            }
            "unmarked" => Self::new(
                (0.0, 1.0),
                Omega::One,
                Density::Dirac { at: 1.0 },
                Density::Dirac { at: 1.0 },
            ),
            other => Err(Error::Config(format!("unknown mark model '{other}'"))),
        }
    }

    /// E[omega(kappa)] under the chosen density.
    pub fn expected_omega(&self, under: Under) -> f64 {
        let om = self.omega;
        match under {
            Under::F0 => self.f0.expected(|k| om.value(k)),
            Under::F1 => self.f1.expected(|k| om.value(k)),
        }
    }

    pub fn omega(&self, kappa: f64) -> f64 {
        self.omega.value(kappa)
    }

    pub fn contains(&self, kappa: f64) -> bool {
        kappa >= self.support.0 - 1e-12 && kappa <= self.support.1 + 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn builtin_squared_moments() {
        let lin = MarkModel::builtin("identity-linear").unwrap();
        assert!((lin.h1 - 4.0 / 3.0).abs() < 1e-12);
        assert!((lin.h0 - 4.0 / 3.0).abs() < 1e-12);
        let uni = MarkModel::builtin("identity-uniform").unwrap();
        assert!((uni.h0 - 1.0).abs() < 1e-12);
        let small = MarkModel::builtin("identity-smallmark").unwrap();
        assert!((small.h0 - 5.0).abs() < 1e-12);
        let un = MarkModel::builtin("unmarked").unwrap();
        assert_eq!((un.h0, un.h1), (1.0, 1.0));
    }

    /// Independent quadrature oracle for the cached squared moments:
    /// breakpoint-aligned midpoint rule with 2^15 cells per segment group.
    #[test]
    fn squared_moments_match_quadrature_oracle() {
        for name in ["identity-linear", "identity-uniform", "identity-smallmark"] {
            let m = MarkModel::builtin(name).unwrap();
            for (h, d) in [(m.h1, &m.f1), (m.h0, &m.f0)] {
                let Density::Piecewise(p) = d else { unreachable!() };
                let mut acc = 0.0;
                for w in p.knots.windows(2) {
                    let (x0, x1) = (w[0].0, w[1].0);
                    if x1 <= x0 {
                        continue;
                    }
                    let n = 32768;
                    let hstep = (x1 - x0) / n as f64;
                    for i in 0..n {
                        let x = x0 + (i as f64 + 0.5) * hstep;
                        acc += p.value(x).powi(2) * hstep;
                    }
                }
                assert!((h - acc).abs() < 1e-8, "{name}: cached {h} vs quadrature {acc}");
            }
        }
    }

    #[test]
    fn expected_omega_values() {
        let lin = MarkModel::builtin("identity-linear").unwrap();
        assert!((lin.expected_omega(Under::F1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((lin.expected_omega(Under::F0) - 1.0 / 3.0).abs() < 1e-12);
        let uni = MarkModel::builtin("identity-uniform").unwrap();
        assert!((uni.expected_omega(Under::F0) - 0.5).abs() < 1e-12);
        let un = MarkModel::builtin("unmarked").unwrap();
        assert_eq!(un.expected_omega(Under::F1), 1.0);
        assert_eq!(un.expected_omega(Under::F0), 1.0);
    }

    #[test]
    fn densities_normalized() {
        for name in ["identity-linear", "identity-uniform", "identity-smallmark", "unmarked"] {
            let m = MarkModel::builtin(name).unwrap();
            assert!((m.f1.total_mass() - 1.0).abs() < 1e-6);
            assert!((m.f0.total_mass() - 1.0).abs() < 1e-6);
        }
        assert!(MarkModel::builtin("nope").is_err());
    }

    #[test]
    fn unnormalized_custom_density_rejected() {
        let bad = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 2.0)]).unwrap();
        let f1 = Density::Piecewise(bad);
        let f0 = Density::Piecewise(PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 1.0)]).unwrap());
        assert!(MarkModel::new((0.0, 1.0), Omega::Identity, f1, f0).is_err());
    }

    #[test]
    fn sampler_matches_density_histogram() {
        let m = MarkModel::builtin("identity-linear").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut bins = [0usize; 10];
        for _ in 0..n {
            let k = m.f1.sample(&mut rng);
            assert!((0.0..=1.0).contains(&k));
            bins[((k * 10.0) as usize).min(9)] += 1;
        }
        for (i, &c) in bins.iter().enumerate() {
            let lo = i as f64 / 10.0;
            let expect = ((lo + 0.1).powi(2) - lo.powi(2)) * n as f64; // CDF of 2k is k^2
            let got = c as f64;
            assert!(
                (got - expect).abs() < 5.0 * expect.sqrt().max(30.0),
                "bin {i}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn smallmark_sampler_stays_in_range() {
        let m = MarkModel::builtin("identity-smallmark").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let k = m.f0.sample(&mut rng);
            assert!((0.0..=0.2 + 1e-12).contains(&k), "mark {k} outside [0, 0.2]");
        }
    }
}
