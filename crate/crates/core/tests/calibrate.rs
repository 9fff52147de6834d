// Scratch calibration harness; run explicitly with `cargo test --test calibrate -- --ignored --nocapture`.

use std::sync::Arc;
use unhap::init::{InitConfig, InitScheme};
use unhap::kernel::{KernelFamily, KernelParams, TruncGaussKernel};
use unhap::mark::MarkModel;
use unhap::metrics::param_error;
use unhap::model::ModelParams;
use unhap::sim::{simulate_mixture, SimConfig};
use unhap::solver::{fit, FitMode, SolverConfig};

fn one_fit_step(
    mu_tilde: f64,
    setting: &str,
    mode: FitMode,
    scheme: InitScheme,
    seed: u64,
    step: f64,
) {
    let mark = Arc::new(MarkModel::builtin(setting).unwrap());
    let kernel =
        KernelParams::TruncatedGaussian(TruncGaussKernel::new(1.45, 0.5, 0.1, 1.0).unwrap());
    let sim = SimConfig { mu: 0.8, mu_tilde, kernel, mark: mark.clone(), t_horizon: 1000.0, seed };
    let seq = simulate_mixture(&sim).unwrap();
    let truth =
        ModelParams::new(vec![0.8], vec![mu_tilde], vec![kernel], mark.clone()).unwrap();
    let mut cfg = SolverConfig::defaults(KernelFamily::TruncatedGaussian);
    cfg.mode = mode;
    cfg.init.scheme = scheme;
    cfg.init.seed = seed;
    cfg.step_theta = step;
    let t0 = std::time::Instant::now();
    let res = fit(&seq, mark, &cfg).unwrap();
    let err = param_error(&res.params, &truth, None).unwrap();
    let kp = res.params.kernels[0].param_values();
    let n1 = seq.events[0].iter().filter(|e| e.label == Some(1)).count();
    let pred1: usize = res
        .assignment
        .hard
        .iter()
        .flatten()
        .map(|&b| usize::from(b))
        .sum();
    println!(
        "mt={mu_tilde} {setting} {mode:?} {scheme:?} seed={seed} step={step}: err={err:.4} \
         mu={:.3} mut={:.3} alpha={:.3} m={:.3} sigma={:.3} | n={} n1={n1} pred1={pred1} \
         | viol={} halv={} | {:.2}s",
        res.params.mu[0],
        res.params.mu_tilde[0],
        kp[0],
        kp[1],
        kp[2],
        seq.total_events(),
        res.monotone_violations,
        res.n_step_halvings,
        t0.elapsed().as_secs_f64()
    );
}

#[test]
#[ignore]
fn calibrate_fig2_point() {
    for step in [1e-2, 5e-2, 2e-1] {
        for seed in [0u64, 1] {
            one_fit_step(0.5, "identity-linear", FitMode::Unhap, InitScheme::MomentsMax, seed, step);
            one_fit_step(0.5, "identity-linear", FitMode::Jointfadin, InitScheme::MomentsMax, seed, step);
        }
    }
}

#[test]
#[ignore]
fn calibrate_noise_extremes() {
    for mt in [0.1, 1.5] {
        for setting in ["identity-linear", "identity-uniform"] {
            one_fit_step(mt, setting, FitMode::Unhap, InitScheme::MomentsMax, 0, 5e-2);
            one_fit_step(mt, setting, FitMode::Jointfadin, InitScheme::MomentsMax, 0, 5e-2);
        }
    }
}
