//! Alternating solver: blocks of projected-gradient steps on the model
//! parameters against the hard-label loss, interleaved with relaxed-label
//! updates, hard thresholding, and precomputation refreshes.

use crate::error::{Error, Result};
use crate::estimator::{self, Precomputations};
use crate::events::EventSequence;
use crate::grid::{discretize_events, DiscretizedSequence};
use crate::init::{self, InitConfig, InitScheme, RhoInit};
use crate::kernel::{grid_len, KernelFamily};
use crate::mark::MarkModel;
use crate::model::{MixtureAssignment, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Full unmixing: alternate hard-label parameter steps with relaxed-label
    /// updates.
    Unhap,
    /// Marked fit on all events, labels pinned to 1, no noise process.
    Jointfadin,
    /// As `Jointfadin` with marks ignored (unit weight, Dirac densities).
    FadinUnmarked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub n_iter: usize,
    /// Parameter steps between consecutive label updates.
    pub b: usize,
    /// Step size on theta; gradients are preconditioned by 1/T so this is
    /// horizon-independent.
    pub step_theta: f64,
    /// Step size on the relaxed labels (raw gradient).
    pub step_rho: f64,
    pub e_inner_steps: usize,
    pub delta: f64,
    /// Kernel support length W.
    pub w: f64,
    pub kernel_family: KernelFamily,
    pub mode: FitMode,
    pub init: InitConfig,
    pub seed: u64,
    /// Verify every refreshed precomputation against a fresh rebuild.
    pub paranoid_checks: bool,
}

impl SolverConfig {
    pub fn defaults(kernel_family: KernelFamily) -> Self {
        Self {
            n_iter: 10_000,
            b: 200,
            step_theta: 1e-2,
            step_rho: 1e-1,
            e_inner_steps: 1,
            delta: 0.01,
            w: 1.0,
            kernel_family,
            mode: FitMode::Unhap,
            init: InitConfig::default(),
            seed: 0,
            paranoid_checks: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.b > self.n_iter {
            return Err(Error::Config(format!(
                "b = {} must satisfy 1 <= b <= n_iter = {}",
                self.b, self.n_iter
            )));
        }
        if !(self.delta > 0.0 && self.delta <= self.w) {
            return Err(Error::Config(format!(
                "delta = {} must lie in (0, W = {}]",
                self.delta, self.w
            )));
        }
        if !(self.step_theta > 0.0 && self.step_rho > 0.0) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        if self.e_inner_steps == 0 {
            return Err(Error::Config("e_inner_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct FitTiming {
    pub precompute_s: f64,
    pub theta_steps_s: f64,
    pub rho_steps_s: f64,
    pub total_s: f64,
}

/// Everything a fit produces. `loss_trace[k]` is the hard-label loss at the
/// k-th parameter iterate (finite throughout a successful fit).
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub assignment: MixtureAssignment,
    /// Relaxed labels broadcast back to the source events.
    pub rho_per_event: Vec<Vec<f64>>,
    pub loss_trace: Vec<f64>,
    pub n_refreshes: usize,
    pub n_step_halvings: usize,
    pub n_merges: usize,
    /// Parameter steps that increased the loss within a block (diagnostic).
    pub monotone_violations: usize,
    pub timing: FitTiming,
    pub warnings: Vec<String>,
    pub final_step_theta: f64,
}

impl FitResult {
    /// Hard labels per source event; an exact 1/2 goes to noise.
    pub fn predict_labels(&self, dseq_event_of_source: &[Vec<usize>]) -> Vec<Vec<u8>> {
        self.assignment
            .hard
            .iter()
            .zip(dseq_event_of_source)
            .map(|(hard, map)| map.iter().map(|&ge| u8::from(hard[ge])).collect())
            .collect()
    }
}

/// Working state for the parameter steps: flattened theta views.
struct ThetaState {
    params: ModelParams,
    update_mu_tilde: bool,
}

impl ThetaState {
    /// One projected step, preconditioned by the per-block diagonal
    /// curvature so the step size is a dimensionless fraction of a diagonal
    /// Newton step. Shape-parameter moves are capped at a tenth of the
    /// kernel support per iteration (the Gauss-Newton diagonal can
    /// underestimate their curvature when the fit is still poor).
    fn step(&mut self, grads: &estimator::ThetaGrads, curv: &estimator::ThetaCurvature, step: f64) {
        let d = self.params.n_types();
        for i in 0..d {
            self.params.mu[i] =
                (self.params.mu[i] - step * grads.d_mu[i] / curv.d_mu[i]).max(0.0);
            if self.update_mu_tilde {
                self.params.mu_tilde[i] =
                    (self.params.mu_tilde[i] - step * grads.d_mu_tilde[i] / curv.d_mu_tilde[i])
                        .max(0.0);
            }
        }
        for ij in 0..d * d {
            let kernel = &self.params.kernels[ij];
            let cap = 0.1 * kernel.support();
            let mut p = kernel.param_values();
            for (k, (x, g)) in p.iter_mut().zip(&grads.d_kernels[ij]).enumerate() {
                let mut mv = step * g / curv.d_kernels[ij][k];
                if k > 0 {
                    mv = mv.clamp(-cap, cap);
                }
                *x -= mv;
            }
            kernel.project_params(&mut p);
            // projection keeps the vector inside the feasible box, so this
            // cannot fail for finite gradients
            self.params.kernels[ij] = kernel
                .with_params(&p)
                .expect("projected kernel parameters must be feasible");
        }
    }
}

/// Run the solver on one sequence. Deterministic for a fixed config.
pub fn fit(seq: &EventSequence, mark: Arc<MarkModel>, cfg: &SolverConfig) -> Result<FitResult> {
    let t_start = Instant::now();
    cfg.validate()?;
    if seq.is_empty() {
        return Err(Error::Data("no events: nothing to fit".into()));
    }
    let mark = match cfg.mode {
        FitMode::FadinUnmarked => Arc::new(MarkModel::builtin("unmarked")?),
        _ => mark,
    };
    let dseq = discretize_events(seq, cfg.delta, &mark)?;
    let l = grid_len(cfg.w, cfg.delta);
    if l > dseq.g {
        return Err(Error::Config(format!(
            "kernel support W = {} does not fit the horizon grid (L = {l} > G = {})",
            cfg.w, dseq.g
        )));
    }
    let mut warnings = Vec::new();
    if dseq.n_merges > 0 {
        warnings.push(format!(
            "{} event(s) merged into shared grid bins (delta = {})",
            dseq.n_merges, cfg.delta
        ));
    }

    // theta initialization
    let d = seq.n_types();
    let params = match cfg.init.scheme {
        InitScheme::Random => {
            init::random_init(cfg.kernel_family, cfg.w, d, cfg.init.seed, mark.clone())?
        }
        scheme => {
            let (p, mut w) = init::moment_match(
                seq,
                cfg.kernel_family,
                cfg.w,
                scheme,
                cfg.init.deltat_window,
                mark.clone(),
            )?;
            warnings.append(&mut w);
            p
        }
    };
    let mut theta = ThetaState { params, update_mu_tilde: cfg.mode == FitMode::Unhap };
    if cfg.mode != FitMode::Unhap {
        theta.params.mu_tilde.iter_mut().for_each(|v| *v = 0.0);
    }

    // label initialization
    let mut assignment = match cfg.mode {
        FitMode::Unhap => match cfg.init.rho_init {
            RhoInit::Half => MixtureAssignment::constant(&dseq, 0.5),
            RhoInit::Bernoulli => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.init.seed);
                MixtureAssignment::bernoulli(&dseq, &mut rng)
            }
        },
        _ => MixtureAssignment::constant(&dseq, 1.0),
    };

    let mut timing = FitTiming::default();
    let refresh = |assignment: &MixtureAssignment,
                       timing: &mut FitTiming|
     -> Result<Precomputations> {
        let t0 = Instant::now();
        let weights = assignment.hardened();
        let pre = estimator::precompute(&dseq, &weights, l)?;
        if cfg.paranoid_checks {
            estimator::verify_precompute(&dseq, &weights, &pre)?;
        }
        timing.precompute_s += t0.elapsed().as_secs_f64();
        Ok(pre)
    };

    let mut pre = refresh(&assignment, &mut timing)?;
    let mut curv = estimator::theta_diag_curvature(&theta.params, &dseq, &pre)?;
    let mut n_refreshes = 1usize;
    let n_blocks = if cfg.mode == FitMode::Unhap { cfg.n_iter / cfg.b } else { 1 };
    let remainder = if cfg.mode == FitMode::Unhap { cfg.n_iter % cfg.b } else { 0 };

    let mut step_theta = cfg.step_theta;
    let mut halvings = 0usize;
    let mut monotone_violations = 0usize;
    let mut loss_trace = Vec::with_capacity(cfg.n_iter);
    let t_eff = dseq.t_grid();
    let mut prev_theta: Option<ModelParams> = None;

    for block in 0..n_blocks {
        let steps = if cfg.mode == FitMode::Unhap {
            cfg.b + if block + 1 == n_blocks { remainder } else { 0 }
        } else {
            cfg.n_iter
        };
        let t0 = Instant::now();
        let mut done = 0usize;
        let mut block_prev_loss: Option<f64> = None;
        while done < steps {
            let grads = estimator::loss_and_theta_grads(&theta.params, &dseq, &pre)?;
            if !grads.loss.is_finite() {
                // divergence guard: back off and retry with a smaller step
                halvings += 1;
                if halvings > 5 {
                    return Err(Error::Diverged(format!(
                        "loss became non-finite after {halvings} step halvings \
                         (block {block}, step {done})"
                    )));
                }
                step_theta *= 0.5;
                if let Some(prev) = prev_theta.take() {
                    theta.params = prev;
                } else {
                    return Err(Error::Diverged("loss non-finite at initialization".into()));
                }
                continue;
            }
            loss_trace.push(grads.loss);
            if let Some(prev) = block_prev_loss {
                // count a violation only above float noise at a fixed point
                if grads.loss > prev + 1e-9 * prev.abs().max(1e-12) {
                    monotone_violations += 1;
                }
            }
            block_prev_loss = Some(grads.loss);
            prev_theta = Some(theta.params.clone());
            theta.step(&grads, &curv, step_theta);
            done += 1;
        }
        timing.theta_steps_s += t0.elapsed().as_secs_f64();

        if cfg.mode == FitMode::Unhap {
            let t1 = Instant::now();
            for _ in 0..cfg.e_inner_steps {
                let g = estimator::grad_rho(&theta.params, &assignment, &dseq)?;
                for (row, grow) in assignment.rho.iter_mut().zip(&g) {
                    for (r, gr) in row.iter_mut().zip(grow) {
                        *r -= cfg.step_rho * gr;
                    }
                }
                assignment.project();
            }
            assignment.threshold();
            timing.rho_steps_s += t1.elapsed().as_secs_f64();
            if block + 1 < n_blocks {
                pre = refresh(&assignment, &mut timing)?;
                curv = estimator::theta_diag_curvature(&theta.params, &dseq, &pre)?;
                n_refreshes += 1;
            }
        }
    }

    let rho_per_event: Vec<Vec<f64>> = assignment
        .rho
        .iter()
        .zip(&dseq.types)
        .map(|(rho, tg)| tg.event_of_source.iter().map(|&ge| rho[ge]).collect())
        .collect();

    timing.total_s = t_start.elapsed().as_secs_f64();
    Ok(FitResult {
        params: theta.params,
        assignment,
        rho_per_event,
        loss_trace,
        n_refreshes,
        n_step_halvings: halvings,
        n_merges: dseq.n_merges,
        monotone_violations,
        timing,
        warnings,
        final_step_theta: step_theta,
    })
}

/// Discretize with the same settings a fit used; handy for callers that need
/// the source-event mapping of a finished fit.
pub fn discretize_like(
    seq: &EventSequence,
    mark: &MarkModel,
    cfg: &SolverConfig,
) -> Result<DiscretizedSequence> {
    let owned;
    let mark = match cfg.mode {
        FitMode::FadinUnmarked => {
            owned = MarkModel::builtin("unmarked")?;
            &owned
        }
        _ => mark,
    };
    discretize_events(seq, cfg.delta, mark)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::MarkedEvent;
    use crate::sim::{simulate_mixture, SimConfig};
    use crate::kernel::{KernelParams, TruncGaussKernel};

    fn mark() -> Arc<MarkModel> {
        Arc::new(MarkModel::builtin("identity-linear").unwrap())
    }

    fn small_cfg(mode: FitMode, n_iter: usize, b: usize) -> SolverConfig {
        let mut cfg = SolverConfig::defaults(KernelFamily::TruncatedGaussian);
        cfg.n_iter = n_iter;
        cfg.b = b;
        cfg.delta = 0.1;
        cfg.mode = mode;
        cfg
    }

    fn sim_seq(seed: u64) -> EventSequence {
        let cfg = SimConfig {
            mu: 0.5,
            mu_tilde: 0.3,
            kernel: KernelParams::TruncatedGaussian(
                TruncGaussKernel::new(1.0, 0.5, 0.1, 1.0).unwrap(),
            ),
            mark: mark(),
            t_horizon: 100.0,
            seed,
        };
        simulate_mixture(&cfg).unwrap()
    }

    #[test]
    fn refresh_count_is_niter_over_b() {
        let seq = sim_seq(1);
        for (n_iter, b, want) in [(100, 10, 10), (105, 10, 10), (50, 50, 1)] {
            let res = fit(&seq, mark(), &small_cfg(FitMode::Unhap, n_iter, b)).unwrap();
            assert_eq!(res.n_refreshes, want, "n_iter {n_iter} b {b}");
            assert_eq!(res.loss_trace.len(), n_iter);
            assert!(res.loss_trace.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn fadin_modes_keep_labels_at_one_and_single_refresh() {
        let seq = sim_seq(2);
        for mode in [FitMode::Jointfadin, FitMode::FadinUnmarked] {
            let res = fit(&seq, mark(), &small_cfg(mode, 60, 20)).unwrap();
            assert_eq!(res.n_refreshes, 1);
            assert!(res.assignment.rho.iter().flatten().all(|&r| r == 1.0));
            assert!(res.rho_per_event.iter().flatten().all(|&r| r == 1.0));
            assert!(res.params.mu_tilde.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_event_sequence_fits_without_error() {
        let seq =
            EventSequence::from_raw(vec![vec![MarkedEvent::new(5.0, 0.6)]], 50.0).unwrap();
        let res = fit(&seq, mark(), &small_cfg(FitMode::Unhap, 20, 5)).unwrap();
        assert!(res.params.mu[0].is_finite());
        assert!(res.params.kernels[0].param_values().iter().all(|v| v.is_finite()));
        assert!(res.warnings.iter().any(|w| w.contains("W/2")));
    }

    #[test]
    fn same_seed_gives_bit_identical_fit() {
        let seq = sim_seq(3);
        let mut cfg = small_cfg(FitMode::Unhap, 80, 20);
        cfg.init.rho_init = RhoInit::Bernoulli;
        cfg.init.seed = 11;
        let a = fit(&seq, mark(), &cfg).unwrap();
        let b = fit(&seq, mark(), &cfg).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.params.mu, b.params.mu);
        assert_eq!(a.params.kernels[0].param_values(), b.params.kernels[0].param_values());
        assert_eq!(a.assignment, b.assignment);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let seq = EventSequence::from_raw(vec![vec![]], 10.0).unwrap();
        assert!(fit(&seq, mark(), &small_cfg(FitMode::Unhap, 10, 5)).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small_cfg(FitMode::Unhap, 10, 20); // b > n_iter
        assert!(cfg.validate().is_err());
        cfg.b = 5;
        cfg.delta = 2.0; // delta > W
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn paranoid_checks_pass_on_short_run() {
        let seq = sim_seq(4);
        let mut cfg = small_cfg(FitMode::Unhap, 30, 10);
        cfg.paranoid_checks = true;
        fit(&seq, mark(), &cfg).unwrap();
    }
}
