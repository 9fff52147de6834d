//! The named experiment sweeps behind `unhap experiment`: parameter-recovery
//! and label-recovery curves, the NLL benchmarks, the initialization study,
//! and the update-cadence sensitivity study.
//!
//! Sweeps fan independent seeded runs across a worker pool; result rows are
//! emitted in sweep order, never completion order.

use crate::config::MarkModelConfig;
use crate::error::{Error, Result};
use crate::init::{InitConfig, InitScheme};
use crate::io::{fmt_f64, write_manifest, Provenance};
use crate::kernel::{KernelFamily, KernelParams, RaisedCosineKernel, TruncGaussKernel};
use crate::mark::MarkModel;
use crate::metrics::{self, NllPolicy};
use crate::model::ModelParams;
use crate::sim::{simulate_mixture, SimConfig};
use crate::solver::{discretize_like, fit, FitMode, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// Capped sweeps: 10 repetitions, horizons up to 1000 s.
    Desk,
    /// The published grids: 100 repetitions for recovery curves, horizons up
    /// to 10000 s.
    Paper,
}

#[derive(Debug, Clone, Copy)]
pub struct ExperimentOptions {
    pub scale: Scale,
    pub n_seeds: Option<usize>,
    pub n_iter: Option<usize>,
    pub base_seed: u64,
}

impl ExperimentOptions {
    pub fn desk() -> Self {
        Self { scale: Scale::Desk, n_seeds: None, n_iter: None, base_seed: 0 }
    }

    fn seeds(&self, paper_default: usize) -> usize {
        self.n_seeds.unwrap_or(match self.scale {
            Scale::Desk => 10,
            Scale::Paper => paper_default,
        })
    }

    fn horizons(&self) -> Vec<f64> {
        match self.scale {
            Scale::Desk => vec![1000.0],
            Scale::Paper => vec![100.0, 1000.0, 10_000.0],
        }
    }

    fn n_iter(&self) -> usize {
        self.n_iter.unwrap_or(10_000)
    }
}

/// The offset between a train seed and its held-out test seed.
const TEST_SEED_OFFSET: u64 = 10_000_019;

/// One simulate-fit-score run.
#[derive(Debug, Clone)]
struct RunSpec {
    sim: SimSpec,
    solver: SolverConfig,
    with_test_nll: bool,
    /// Fit under a different mark model than the simulation used (e.g. the
    /// unmarked reduction); defaults to the simulation model.
    fit_mark_name: Option<&'static str>,
}

#[derive(Debug, Clone)]
struct SimSpec {
    mu: f64,
    mu_tilde: f64,
    alpha: f64,
    kernel_shape: KernelShape,
    mark_name: &'static str,
    t_horizon: f64,
    seed: u64,
}

#[derive(Debug, Clone, Copy)]
enum KernelShape {
    TruncGauss { m: f64, sigma: f64, w: f64 },
    RaisedCosine { u: f64, s: f64, w: f64 },
}

impl KernelShape {
    fn build(&self, alpha: f64) -> Result<KernelParams> {
        Ok(match *self {
            KernelShape::TruncGauss { m, sigma, w } => {
                KernelParams::TruncatedGaussian(TruncGaussKernel::new(alpha, m, sigma, w)?)
            }
            KernelShape::RaisedCosine { u, s, w } => {
                KernelParams::RaisedCosine(RaisedCosineKernel::new(alpha, u, s, w)?)
            }
        })
    }

    fn family(&self) -> KernelFamily {
        match self {
            KernelShape::TruncGauss { .. } => KernelFamily::TruncatedGaussian,
            KernelShape::RaisedCosine { .. } => KernelFamily::RaisedCosine,
        }
    }
}

impl SimSpec {
    fn mark(&self) -> Result<Arc<MarkModel>> {
        Ok(Arc::new(MarkModelConfig::named(self.mark_name).build()?))
    }

    fn config(&self, seed: u64) -> Result<(SimConfig, ModelParams)> {
        let mark = self.mark()?;
        let kernel = self.kernel_shape.build(self.alpha)?;
        let cfg = SimConfig {
            mu: self.mu,
            mu_tilde: self.mu_tilde,
            kernel,
            mark: mark.clone(),
            t_horizon: self.t_horizon,
            seed,
        };
        let truth = ModelParams::new(
            vec![self.mu],
            vec![self.mu_tilde],
            vec![cfg.kernel],
            mark,
        )?;
        Ok((cfg, truth))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RunOut {
    param_err: f64,
    precision: f64,
    recall: f64,
    nll: f64,
    wall_s: f64,
}

fn execute(spec: &RunSpec) -> Result<RunOut> {
    let (sim_cfg, truth) = spec.sim.config(spec.sim.seed)?;
    let seq = simulate_mixture(&sim_cfg)?;
    let fit_mark = match spec.fit_mark_name {
        Some(name) => Arc::new(MarkModelConfig::named(name).build()?),
        None => spec.sim.mark()?,
    };
    let t0 = Instant::now();
    let res = fit(&seq, fit_mark.clone(), &spec.solver)?;
    let wall_s = t0.elapsed().as_secs_f64();

    let param_err = metrics::param_error(&res.params, &truth, None)?;

    let dseq = discretize_like(&seq, &fit_mark, &spec.solver)?;
    let event_maps: Vec<Vec<usize>> =
        dseq.types.iter().map(|t| t.event_of_source.clone()).collect();
    let predicted: Vec<u8> =
        res.predict_labels(&event_maps).into_iter().flatten().collect();
    let truth_labels: Vec<u8> = seq
        .events
        .iter()
        .flatten()
        .map(|e| e.label.ok_or_else(|| Error::Internal("simulated event without label".into())))
        .collect::<Result<_>>()?;
    let (precision, recall, _) = metrics::rho_precision_recall(&predicted, &truth_labels)?;

    let mut nll = f64::NAN;
    if spec.with_test_nll {
        let (test_cfg, _) = spec.sim.config(spec.sim.seed + TEST_SEED_OFFSET)?;
        let test_seq = simulate_mixture(&test_cfg)?;
        let (v, _) = metrics::test_nll(&res.params, NllPolicy::Mixture, &test_seq, spec.solver.delta)?;
        nll = v;
    }
    Ok(RunOut { param_err, precision, recall, nll, wall_s })
}

fn run_all(specs: Vec<RunSpec>) -> Result<Vec<RunOut>> {
    specs.par_iter().map(execute).collect()
}

pub fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

struct Agg {
    median: f64,
    mean: f64,
    std: f64,
    q25: f64,
    q75: f64,
}

fn aggregate(mut values: Vec<f64>) -> Agg {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let med = median(&mut values);
    Agg { median: med, mean, std, q25: quantile(&values, 0.25), q75: quantile(&values, 0.75) }
}

/// Default experiment solver settings on the standard grid.
fn solver_defaults(family: KernelFamily, n_iter: usize) -> SolverConfig {
    let mut cfg = SolverConfig::defaults(family);
    cfg.n_iter = n_iter;
    cfg
}

fn mark_setting(name: &str) -> &'static str {
    match name {
        "linear" => "identity-linear",
        "uniform" => "identity-uniform",
        other => panic!("unknown mark-noise setting {other}"),
    }
}

fn method_mode(method: &str) -> FitMode {
    match method {
        "unhap" => FitMode::Unhap,
        "jointfadin" => FitMode::Jointfadin,
        "fadin-unmarked" => FitMode::FadinUnmarked,
        other => panic!("unknown method {other}"),
    }
}

// ---------------------------------------------------------------------------
// Parameter recovery vs noise level (two mark-noise settings, two methods).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Row {
    pub setting: String,
    pub mu_tilde: f64,
    pub t_horizon: f64,
    pub method: String,
    pub n_seeds: usize,
    pub err_median: f64,
    pub err_mean: f64,
    pub err_q25: f64,
    pub err_q75: f64,
}

pub fn fig2_sweep(opts: &ExperimentOptions) -> Result<Vec<Fig2Row>> {
    let n_seeds = opts.seeds(100);
    let noise_grid: Vec<f64> = match opts.scale {
        Scale::Desk => vec![0.1, 0.5, 1.0, 1.5],
        Scale::Paper => vec![0.1, 0.3, 0.5, 0.75, 1.0, 1.25, 1.5],
    };
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for setting in ["linear", "uniform"] {
        for &mu_tilde in &noise_grid {
            for &t in &opts.horizons() {
                for method in ["unhap", "jointfadin"] {
                    keys.push((setting, mu_tilde, t, method));
                    for rep in 0..n_seeds {
                        let mut solver =
                            solver_defaults(KernelFamily::TruncatedGaussian, opts.n_iter());
                        solver.mode = method_mode(method);
                        specs.push(RunSpec {
                            sim: SimSpec {
                                mu: 0.8,
                                mu_tilde,
                                alpha: 1.45,
                                kernel_shape: KernelShape::TruncGauss { m: 0.5, sigma: 0.1, w: 1.0 },
                                mark_name: mark_setting(setting),
                                t_horizon: t,
                                seed: opts.base_seed + rep as u64,
                            },
                            solver,
                            with_test_nll: false,
                            fit_mark_name: None,
                        });
                    }
                }
            }
        }
    }
    let outs = run_all(specs)?;
    let rows = keys
        .iter()
        .enumerate()
        .map(|(k, &(setting, mu_tilde, t, method))| {
            let errs: Vec<f64> =
                outs[k * n_seeds..(k + 1) * n_seeds].iter().map(|o| o.param_err).collect();
            let agg = aggregate(errs);
            Fig2Row {
                setting: setting.to_string(),
                mu_tilde,
                t_horizon: t,
                method: method.to_string(),
                n_seeds,
                err_median: agg.median,
                err_mean: agg.mean,
                err_q25: agg.q25,
                err_q75: agg.q75,
            }
        })
        .collect();
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Label recovery vs excitation strength.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Fig3Row {
    pub setting: String,
    pub alpha: f64,
    pub mu_tilde: f64,
    pub t_horizon: f64,
    pub n_seeds: usize,
    pub precision_median: f64,
    pub recall_median: f64,
}

pub fn fig3_sweep(opts: &ExperimentOptions, noise_levels: &[f64]) -> Result<Vec<Fig3Row>> {
    let n_seeds = opts.seeds(100);
    let alpha_grid: Vec<f64> = match opts.scale {
        Scale::Desk => vec![0.1, 0.3, 0.5, 0.7, 0.9],
        Scale::Paper => (0..=10).map(|i| i as f64 / 10.0).collect(),
    };
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for setting in ["linear", "uniform"] {
        for &alpha in &alpha_grid {
            for &mu_tilde in noise_levels {
                for &t in &opts.horizons() {
                    keys.push((setting, alpha, mu_tilde, t));
                    for rep in 0..n_seeds {
                        let solver =
                            solver_defaults(KernelFamily::TruncatedGaussian, opts.n_iter());
                        specs.push(RunSpec {
                            sim: SimSpec {
                                mu: 0.4,
                                mu_tilde,
                                alpha,
                                kernel_shape: KernelShape::TruncGauss { m: 0.5, sigma: 0.1, w: 1.0 },
                                mark_name: mark_setting(setting),
                                t_horizon: t,
                                seed: opts.base_seed + rep as u64,
                            },
                            solver,
                            with_test_nll: false,
                            fit_mark_name: None,
                        });
                    }
                }
            }
        }
    }
    let outs = run_all(specs)?;
    let rows = keys
        .iter()
        .enumerate()
        .map(|(k, &(setting, alpha, mu_tilde, t))| {
            let slice = &outs[k * n_seeds..(k + 1) * n_seeds];
            let mut prec: Vec<f64> = slice.iter().map(|o| o.precision).collect();
            let mut rec: Vec<f64> = slice.iter().map(|o| o.recall).collect();
            Fig3Row {
                setting: setting.to_string(),
                alpha,
                mu_tilde,
                t_horizon: t,
                n_seeds,
                precision_median: median(&mut prec),
                recall_median: median(&mut rec),
            }
        })
        .collect();
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Test NLL benchmarks (marked noisy setting, and the unmarked reduction).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct NllRow {
    pub setting: String,
    pub t_horizon: f64,
    pub method: String,
    pub n_seeds: usize,
    pub nll_median: f64,
    pub nll_mean: f64,
    pub nll_std: f64,
    pub time_median_s: f64,
}

fn nll_sweep(
    opts: &ExperimentOptions,
    settings: &[(&'static str, f64)], // (label, mu_tilde)
    methods: &[&'static str],
    mark_name: &'static str,
) -> Result<Vec<NllRow>> {
    let n_seeds = opts.seeds(10);
    let horizons = [100.0, 500.0, 1000.0];
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for &(setting, mu_tilde) in settings {
        for &t in &horizons {
            for &method in methods {
                keys.push((setting, t, method));
                for rep in 0..n_seeds {
                    let mut solver =
                        solver_defaults(KernelFamily::TruncatedGaussian, opts.n_iter());
                    solver.mode = method_mode(method);
                    specs.push(RunSpec {
                        sim: SimSpec {
                            mu: 0.1,
                            mu_tilde,
                            alpha: 1.0,
                            kernel_shape: KernelShape::TruncGauss { m: 0.5, sigma: 0.1, w: 1.0 },
                            mark_name,
                            t_horizon: t,
                            seed: opts.base_seed + rep as u64,
                        },
                        solver,
                        with_test_nll: true,
                        fit_mark_name: None,
                    });
                }
            }
        }
    }
    let outs = run_all(specs)?;
    let rows = keys
        .iter()
        .enumerate()
        .map(|(k, &(setting, t, method))| {
            let slice = &outs[k * n_seeds..(k + 1) * n_seeds];
            let nlls: Vec<f64> = slice.iter().map(|o| o.nll).collect();
            let mut times: Vec<f64> = slice.iter().map(|o| o.wall_s).collect();
            let agg = aggregate(nlls);
            NllRow {
                setting: setting.to_string(),
                t_horizon: t,
                method: method.to_string(),
                n_seeds,
                nll_median: agg.median,
                nll_mean: agg.mean,
                nll_std: agg.std,
                time_median_s: median(&mut times),
            }
        })
        .collect();
    Ok(rows)
}

/// Marked noisy benchmark: small-mark noise, UNHaP vs the joint marked fit.
pub fn table1_marked_sweep(opts: &ExperimentOptions) -> Result<Vec<NllRow>> {
    nll_sweep(opts, &[("smallmark-noisy", 1.0)], &["unhap", "jointfadin"], "identity-smallmark")
}

/// Unmarked benchmark: the same marked mixtures, but both solvers ignore the
/// marks (unit weight, Dirac densities), so unmixing can lean on the
/// temporal structure only.
pub fn table_unmarked_sweep(opts: &ExperimentOptions) -> Result<Vec<NllRow>> {
    let n_seeds = opts.seeds(10);
    let horizons = [100.0, 500.0, 1000.0];
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for (setting, mu_tilde) in [("non-noisy", 0.1), ("noisy", 1.0)] {
        for &t in &horizons {
            for method in ["unhap", "fadin-unmarked"] {
                keys.push((setting, t, method));
                for rep in 0..n_seeds {
                    let mut solver =
                        solver_defaults(KernelFamily::TruncatedGaussian, opts.n_iter());
                    solver.mode = method_mode(method);
                    specs.push(RunSpec {
                        sim: SimSpec {
                            mu: 0.1,
                            mu_tilde,
                            alpha: 1.0,
                            kernel_shape: KernelShape::TruncGauss { m: 0.5, sigma: 0.1, w: 1.0 },
                            mark_name: "identity-smallmark",
                            t_horizon: t,
                            seed: opts.base_seed + rep as u64,
                        },
                        solver,
                        with_test_nll: true,
                        fit_mark_name: Some("unmarked"),
                    });
                }
            }
        }
    }
    let outs = run_all(specs)?;
    let rows = keys
        .iter()
        .enumerate()
        .map(|(k, &(setting, t, method))| {
            let slice = &outs[k * n_seeds..(k + 1) * n_seeds];
            let nlls: Vec<f64> = slice.iter().map(|o| o.nll).collect();
            let mut times: Vec<f64> = slice.iter().map(|o| o.wall_s).collect();
            let agg = aggregate(nlls);
            NllRow {
                setting: setting.to_string(),
                t_horizon: t,
                method: method.to_string(),
                n_seeds,
                nll_median: agg.median,
                nll_mean: agg.mean,
                nll_std: agg.std,
                time_median_s: median(&mut times),
            }
        })
        .collect();
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Initialization study: moment matching vs random, both kernel families.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct InitStudyRow {
    pub kernel: String,
    pub init: String,
    pub n_seeds: usize,
    pub err_median: f64,
    pub err_q25: f64,
    pub err_q75: f64,
}

pub fn init_study_sweep(opts: &ExperimentOptions) -> Result<Vec<InitStudyRow>> {
    let n_seeds = opts.seeds(10);
    let kernels = [
        ("truncated-gaussian", KernelShape::TruncGauss { m: 0.5, sigma: 0.1, w: 1.0 }),
        ("raised-cosine", KernelShape::RaisedCosine { u: 0.4, s: 0.1, w: 1.0 }),
    ];
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for (kname, shape) in kernels.iter() {
        for init_name in ["moments", "random"] {
            keys.push((kname.to_string(), init_name));
            for rep in 0..n_seeds {
                let mut solver = solver_defaults(shape.family(), opts.n_iter());
                solver.init = InitConfig {
                    scheme: match init_name {
                        "moments" => InitScheme::MomentsMax,
                        _ => InitScheme::Random,
                    },
                    seed: opts.base_seed + rep as u64,
                    ..InitConfig::default()
                };
                specs.push(RunSpec {
                    sim: SimSpec {
                        mu: 0.8,
                        mu_tilde: 0.5,
                        alpha: 1.4,
                        kernel_shape: *shape,
                        mark_name: "identity-linear",
                        t_horizon: 1000.0,
                        seed: opts.base_seed + rep as u64,
                    },
                    solver,
                    with_test_nll: false,
                    fit_mark_name: None,
                });
            }
        }
    }
    let outs = run_all(specs)?;
    let rows = keys
        .iter()
        .enumerate()
        .map(|(k, (kname, init_name))| {
            let errs: Vec<f64> =
                outs[k * n_seeds..(k + 1) * n_seeds].iter().map(|o| o.param_err).collect();
            let agg = aggregate(errs);
            InitStudyRow {
                kernel: kname.clone(),
                init: init_name.to_string(),
                n_seeds,
                err_median: agg.median,
                err_q25: agg.q25,
                err_q75: agg.q75,
            }
        })
        .collect();
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Sensitivity to the update cadence b.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BSensitivityRow {
    pub b: usize,
    pub setting: String,
    pub n_seeds: usize,
    pub err_median: f64,
    pub precision_median: f64,
    pub time_median_s: f64,
    pub recommended: bool,
}

pub fn b_sensitivity_sweep(opts: &ExperimentOptions) -> Result<Vec<BSensitivityRow>> {
    let n_seeds = opts.seeds(10);
    let bs = [10usize, 25, 50, 75, 100, 200];
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for &b in &bs {
        for (setting, mu_tilde) in [("non-noisy", 0.1), ("noisy", 1.0)] {
            keys.push((b, setting));
            for rep in 0..n_seeds {
                let mut solver =
                    solver_defaults(KernelFamily::TruncatedGaussian, opts.n_iter());
                solver.b = b;
                specs.push(RunSpec {
                    sim: SimSpec {
                        mu: 0.8,
                        mu_tilde,
                        alpha: 1.4,
                        kernel_shape: KernelShape::TruncGauss { m: 0.5, sigma: 0.1, w: 1.0 },
                        mark_name: "identity-uniform",
                        t_horizon: 1000.0,
                        seed: opts.base_seed + rep as u64,
                    },
                    solver,
                    with_test_nll: false,
                    fit_mark_name: None,
                });
            }
        }
    }
    let outs = run_all(specs)?;
    let rows = keys
        .iter()
        .enumerate()
        .map(|(k, &(b, setting))| {
            let slice = &outs[k * n_seeds..(k + 1) * n_seeds];
            let errs: Vec<f64> = slice.iter().map(|o| o.param_err).collect();
            let mut prec: Vec<f64> = slice.iter().map(|o| o.precision).collect();
            let mut times: Vec<f64> = slice.iter().map(|o| o.wall_s).collect();
            let agg = aggregate(errs);
            BSensitivityRow {
                b,
                setting: setting.to_string(),
                n_seeds,
                err_median: agg.median,
                precision_median: median(&mut prec),
                time_median_s: median(&mut times),
                recommended: b == 200,
            }
        })
        .collect();
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV emission and the experiment registry.
// ---------------------------------------------------------------------------

fn write_csv<T: Serialize>(
    path: &Path,
    header: &str,
    rows: &[T],
    to_line: impl Fn(&T) -> String,
    prov: &Provenance,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash = {}", prov.config_hash);
    let _ = writeln!(out, "# seed = {}", prov.seed);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&to_line(row));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub const EXPERIMENT_NAMES: &[&str] =
    &["fig2", "fig3", "table1-marked", "table-unmarked", "init-study", "b-sensitivity"];

/// Run one named experiment and write its result tables under `out_dir`.
pub fn run_experiment(
    name: &str,
    opts: &ExperimentOptions,
    out_dir: &Path,
    prov: &Provenance,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    match name {
        "fig2" => {
            let rows = fig2_sweep(opts)?;
            let path = out_dir.join("fig2_param_error.csv");
            write_csv(
                &path,
                "setting,mu_tilde,t_horizon,method,n_seeds,err_median,err_mean,err_q25,err_q75",
                &rows,
                |r| {
                    format!(
                        "{},{},{},{},{},{},{},{},{}",
                        r.setting,
                        fmt_f64(r.mu_tilde),
                        fmt_f64(r.t_horizon),
                        r.method,
                        r.n_seeds,
                        fmt_f64(r.err_median),
                        fmt_f64(r.err_mean),
                        fmt_f64(r.err_q25),
                        fmt_f64(r.err_q75)
                    )
                },
                prov,
            )?;
            files.push(path);
        }
        "fig3" => {
            let rows = fig3_sweep(opts, &[0.1, 0.5, 1.0])?;
            let path = out_dir.join("fig3_rho_recovery.csv");
            write_csv(
                &path,
                "setting,alpha,mu_tilde,t_horizon,n_seeds,precision_median,recall_median",
                &rows,
                |r| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        r.setting,
                        fmt_f64(r.alpha),
                        fmt_f64(r.mu_tilde),
                        fmt_f64(r.t_horizon),
                        r.n_seeds,
                        fmt_f64(r.precision_median),
                        fmt_f64(r.recall_median)
                    )
                },
                prov,
            )?;
            files.push(path);
        }
        "table1-marked" | "table-unmarked" => {
            let rows = if name == "table1-marked" {
                table1_marked_sweep(opts)?
            } else {
                table_unmarked_sweep(opts)?
            };
            let path = out_dir.join(format!("{}_nll.csv", name.replace('-', "_")));
            write_csv(
                &path,
                "setting,t_horizon,method,n_seeds,nll_median,nll_mean,nll_std,time_median_s",
                &rows,
                |r| {
                    format!(
                        "{},{},{},{},{},{},{},{}",
                        r.setting,
                        fmt_f64(r.t_horizon),
                        r.method,
                        r.n_seeds,
                        fmt_f64(r.nll_median),
                        fmt_f64(r.nll_mean),
                        fmt_f64(r.nll_std),
                        fmt_f64(r.time_median_s)
                    )
                },
                prov,
            )?;
            files.push(path);
        }
        "init-study" => {
            let rows = init_study_sweep(opts)?;
            let path = out_dir.join("init_study_param_error.csv");
            write_csv(
                &path,
                "kernel,init,n_seeds,err_median,err_q25,err_q75",
                &rows,
                |r| {
                    format!(
                        "{},{},{},{},{},{}",
                        r.kernel,
                        r.init,
                        r.n_seeds,
                        fmt_f64(r.err_median),
                        fmt_f64(r.err_q25),
                        fmt_f64(r.err_q75)
                    )
                },
                prov,
            )?;
            files.push(path);
        }
        "b-sensitivity" => {
            let rows = b_sensitivity_sweep(opts)?;
            let path = out_dir.join("b_sensitivity.csv");
            write_csv(
                &path,
                "b,setting,n_seeds,err_median,precision_median,time_median_s,recommended",
                &rows,
                |r| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        r.b,
                        r.setting,
                        r.n_seeds,
                        fmt_f64(r.err_median),
                        fmt_f64(r.precision_median),
                        fmt_f64(r.time_median_s),
                        r.recommended
                    )
                },
                prov,
            )?;
            files.push(path);
        }
        other => {
            return Err(Error::Config(format!(
                "unknown experiment '{other}'; expected one of {EXPERIMENT_NAMES:?}"
            )))
        }
    }
    write_manifest(out_dir, &files, prov)?;
    Ok(files)
}
