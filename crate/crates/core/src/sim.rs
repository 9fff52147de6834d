//! Mixture simulator: a univariate marked Hawkes process generated with the
//! immigration-birth (cluster) representation, superposed with an
//! independent homogeneous marked Poisson noise process.

use crate::error::{Error, Result};
use crate::events::{EventSequence, MarkedEvent};
use crate::kernel::KernelParams;
use crate::mark::{MarkModel, Under};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use std::collections::VecDeque;
use std::sync::Arc;

/// Simulation settings for one univariate mixture realization.
///
/// `kernel` carries the excitation amplitude `alpha`; each event with mark
/// `kappa` spawns offspring at rate `alpha * omega(kappa) * shape(dt)`.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub mu: f64,
    pub mu_tilde: f64,
    pub kernel: KernelParams,
    pub mark: Arc<MarkModel>,
    pub t_horizon: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Expected direct offspring per structured event:
    /// `alpha * E_f1[omega] * integral(shape)`.
    pub fn branching_ratio(&self) -> f64 {
        self.kernel.alpha() * self.mark.expected_omega(Under::F1) * self.kernel.shape_integral()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu < 0.0 || self.mu_tilde < 0.0 {
            return Err(Error::Config("baselines mu and mu_tilde must be >= 0".into()));
        }
        if !(self.t_horizon > 0.0) {
            return Err(Error::Config("horizon T must be > 0".into()));
        }
        let br = self.branching_ratio();
        if br >= 1.0 {
            return Err(Error::Unstable(format!(
                "branching ratio alpha * E[omega] * int(shape) = {br:.4} >= 1 \
                 (alpha * E_f1[omega] = {:.4})",
                self.kernel.alpha() * self.mark.expected_omega(Under::F1)
            )));
        }
        Ok(())
    }
}

/// Discrete bound on the kernel shape used for thinning; kernel-agnostic,
/// with a 1.001 safety factor covering the sampling gap.
fn shape_bound(kernel: &KernelParams) -> f64 {
    kernel.shape_max_discrete(65_536) * 1.001
}

fn child_times_with_bound<R: Rng + ?Sized>(
    parent_t: f64,
    rate_scale: f64,
    kernel: &KernelParams,
    max_shape: f64,
    rng: &mut R,
) -> Vec<f64> {
    let w = kernel.support();
    let bound = rate_scale * max_shape;
    let mut out = Vec::new();
    if bound <= 0.0 {
        return out;
    }
    let exp = Exp::new(bound).expect("positive thinning bound");
    let mut s = 0.0;
    loop {
        s += exp.sample(rng);
        if s > w {
            break;
        }
        let accept: f64 = rng.gen();
        if accept * bound < rate_scale * kernel.shape_eval(s) {
            out.push(parent_t + s);
        }
    }
    out
}

/// Offspring times of one parent, by thinning against a constant bound on
/// `rate_scale * shape`. Returned times lie in `(parent.t, parent.t + W]`,
/// ascending.
pub fn simulate_child_times<R: Rng + ?Sized>(
    parent: &MarkedEvent,
    rate_scale: f64,
    kernel: &KernelParams,
    rng: &mut R,
) -> Vec<f64> {
    child_times_with_bound(parent.t, rate_scale, kernel, shape_bound(kernel), rng)
}

/// Generate one labeled realization of the mixture process. Deterministic
/// for a fixed seed.
pub fn simulate_mixture(cfg: &SimConfig) -> Result<EventSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t_max = cfg.t_horizon;
    let mut all: Vec<MarkedEvent> = Vec::new();

    // Hawkes component: immigrants, then offspring in FIFO order.
    let n_imm = draw_poisson(cfg.mu * t_max, &mut rng);
    let mut immigrants: Vec<f64> = (0..n_imm).map(|_| rng.gen::<f64>() * t_max).collect();
    immigrants.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut queue: VecDeque<MarkedEvent> = VecDeque::new();
    for t in immigrants {
        let ev = MarkedEvent {
            t,
            mark: cfg.mark.f1.sample(&mut rng),
            label: Some(1),
            gen: Some(0),
        };
        queue.push_back(ev);
        all.push(ev);
    }
    let max_shape = shape_bound(&cfg.kernel);
    while let Some(parent) = queue.pop_front() {
        let rate_scale = cfg.kernel.alpha() * cfg.mark.omega(parent.mark);
        for t in child_times_with_bound(parent.t, rate_scale, &cfg.kernel, max_shape, &mut rng) {
            if t > t_max {
                continue; // beyond the horizon; its subtree would be too
            }
            let child = MarkedEvent {
                t,
                mark: cfg.mark.f1.sample(&mut rng),
                label: Some(1),
                gen: Some(parent.gen.unwrap_or(0) + 1),
            };
            queue.push_back(child);
            all.push(child);
        }
    }

    // Independent Poisson noise.
    let n_noise = draw_poisson(cfg.mu_tilde * t_max, &mut rng);
    for _ in 0..n_noise {
        all.push(MarkedEvent {
            t: rng.gen::<f64>() * t_max,
            mark: cfg.mark.f0.sample(&mut rng),
            label: Some(0),
            gen: None,
        });
    }

    EventSequence::from_raw(vec![all], t_max)
}

fn draw_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive Poisson mean").sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::TruncGaussKernel;

    fn tg_kernel(alpha: f64) -> KernelParams {
        KernelParams::TruncatedGaussian(TruncGaussKernel::new(alpha, 0.5, 0.1, 1.0).unwrap())
    }

    fn cfg(mu: f64, mu_tilde: f64, alpha: f64, seed: u64) -> SimConfig {
        SimConfig {
            mu,
            mu_tilde,
            kernel: tg_kernel(alpha),
            mark: Arc::new(MarkModel::builtin("identity-linear").unwrap()),
            t_horizon: 1000.0,
            seed,
        }
    }

    #[test]
    fn pure_poisson_mean_count() {
        // mu_tilde = 0, alpha = 0: immigrants only, expected count mu * T.
        let mut total = 0usize;
        let runs = 200;
        for seed in 0..runs {
            total += simulate_mixture(&cfg(0.4, 0.0, 0.0, seed)).unwrap().total_events();
        }
        let mean = total as f64 / runs as f64;
        assert!((mean - 400.0).abs() < 0.05 * 400.0, "mean {mean}");
    }

    #[test]
    fn unstable_config_rejected() {
        // alpha * E_f1[omega] = 1.6 * 2/3 > 1
        assert!(simulate_mixture(&cfg(0.4, 0.0, 1.6, 0)).is_err());
        let mut c = cfg(0.4, 0.0, 0.5, 0);
        c.mu = -0.1;
        assert!(simulate_mixture(&c).is_err());
    }

    #[test]
    fn labels_and_generations_are_consistent() {
        let seq = simulate_mixture(&cfg(0.5, 0.3, 1.0, 42)).unwrap();
        let evs = &seq.events[0];
        assert!(evs.iter().all(|e| e.label.is_some()));
        assert!(evs.iter().filter(|e| e.label == Some(0)).all(|e| e.gen.is_none()));
        assert!(evs.iter().filter(|e| e.label == Some(1)).all(|e| e.gen.is_some()));
        // strict ordering, all inside [0, T]
        for w in evs.windows(2) {
            assert!(w[0].t < w[1].t);
        }
        assert!(evs.iter().all(|e| e.t >= 0.0 && e.t <= 1000.0));
    }

    #[test]
    fn fixed_seed_reproduces_bit_identical_sequence() {
        let a = simulate_mixture(&cfg(0.8, 0.5, 1.45, 7)).unwrap();
        let b = simulate_mixture(&cfg(0.8, 0.5, 1.45, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn child_times_respect_support_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let parent = MarkedEvent::new(10.0, 1.0);
        let kernel = tg_kernel(1.0);
        assert!(simulate_child_times(&parent, 0.0, &kernel, &mut rng).is_empty());
        let bound = shape_bound(&kernel);
        let mut count = 0usize;
        let trials = 100_000;
        for _ in 0..trials {
            let times = child_times_with_bound(parent.t, 0.5, &kernel, bound, &mut rng);
            for t in &times {
                assert!(*t > 10.0 && *t <= 11.0);
            }
            count += times.len();
        }
        // expected children = rate_scale * int(shape) = 0.5
        let mean = count as f64 / trials as f64;
        assert!((mean - 0.5).abs() < 0.01 * 0.5 + 0.01, "mean {mean}");
    }

    #[test]
    fn structured_mark_histogram_matches_f1() {
        // chi-square against f1 = 2k on 10 bins, ~1e4 structured events.
        let seq = simulate_mixture(&cfg(1.0, 0.0, 1.2, 13)).unwrap();
        let marks: Vec<f64> = seq.events[0]
            .iter()
            .filter(|e| e.label == Some(1))
            .map(|e| e.mark)
            .collect();
        assert!(marks.len() > 5_000);
        let mut obs = [0f64; 10];
        for m in &marks {
            obs[((m * 10.0) as usize).min(9)] += 1.0;
        }
        let n = marks.len() as f64;
        let mut chi2 = 0.0;
        for (i, o) in obs.iter().enumerate() {
            let lo = i as f64 / 10.0;
            let e = ((lo + 0.1).powi(2) - lo.powi(2)) * n;
            chi2 += (o - e).powi(2) / e;
        }
        // 9 dof, 1e-3 critical value ~ 27.9
        assert!(chi2 < 27.9, "chi2 = {chi2}");
    }
}
