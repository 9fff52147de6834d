//! Command implementations behind the `unhap` binary: simulate, fit, score,
//! experiment. Each command resolves its config, runs, and writes artifacts
//! plus a manifest under the output directory.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{run_experiment, ExperimentOptions, Scale};
use crate::io::{
    read_events_csv, read_rho_csv, write_events_csv, write_loss_trace, write_manifest,
    write_metrics, write_rho_csv, ParamsFile, Provenance,
};
use crate::metrics::{self, MetricsReport, NllPolicy};
use crate::sim::simulate_mixture;
use crate::solver::{discretize_like, fit, FitMode};
use serde::Serialize;
use std::path::{Path, PathBuf};

fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance { config_hash: cfg.hash(), seed: cfg.seed }
}

fn resolve(config_path: &Path, seed_override: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(config_path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn cmd_simulate(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let cfg = resolve(config_path, seed_override)?;
    let section = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("missing [simulate] section".into()))?;
    let mark = cfg.mark_model()?;
    let sim_cfg = section.build(mark.clone(), cfg.seed)?;
    let seq = simulate_mixture(&sim_cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let prov = provenance(&cfg);

    let events_path = out_dir.join("events.csv");
    write_events_csv(&events_path, &seq, &prov)?;
    let truth = crate::model::ModelParams::new(
        vec![section.mu],
        vec![section.mu_tilde],
        vec![sim_cfg.kernel],
        mark,
    )?;
    let truth_path = out_dir.join("truth_params.json");
    ParamsFile::from_params(&truth, None, &prov).write(&truth_path)?;
    let files = vec![events_path, truth_path];
    write_manifest(out_dir, &files, &prov)?;
    eprintln!(
        "simulated {} events on [0, {}] (branching ratio {:.4})",
        seq.total_events(),
        sim_cfg.t_horizon,
        sim_cfg.branching_ratio()
    );
    Ok(files)
}

#[derive(Serialize)]
struct FitMeta<'a> {
    config_hash: &'a str,
    seed: u64,
    resolved_config: &'a RunConfig,
    n_events: usize,
    n_refreshes: usize,
    n_step_halvings: usize,
    n_merges: usize,
    monotone_violations: usize,
    final_step_theta: f64,
    final_loss: Option<f64>,
    warnings: &'a [String],
}

pub fn cmd_fit(
    config_path: &Path,
    events_override: Option<&Path>,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let cfg = resolve(config_path, seed_override)?;
    let section =
        cfg.fit.as_ref().ok_or_else(|| Error::Config("missing [fit] section".into()))?;
    let mark = cfg.mark_model()?;
    let events_path: PathBuf = match events_override {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(
            section
                .events
                .as_ref()
                .ok_or_else(|| Error::Config("no event file: pass --events or set fit.events".into()))?,
        ),
    };
    // ground-truth labels on disk are ignored while fitting
    let seq = read_events_csv(&events_path, Some(&mark), section.t_horizon)?;
    if seq.is_empty() {
        return Err(Error::Data("no events".into()));
    }
    let solver_cfg = section.to_solver_config(cfg.seed);
    let res = fit(&seq, mark.clone(), &solver_cfg)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }

    std::fs::create_dir_all(out_dir)?;
    let prov = provenance(&cfg);
    let params_path = out_dir.join("fitted_params.json");
    ParamsFile::from_params(&res.params, Some(solver_cfg.mode), &prov).write(&params_path)?;

    let dseq = discretize_like(&seq, &mark, &solver_cfg)?;
    let event_maps: Vec<Vec<usize>> =
        dseq.types.iter().map(|t| t.event_of_source.clone()).collect();
    let labels = res.predict_labels(&event_maps);
    let rho_path = out_dir.join("rho.csv");
    write_rho_csv(&rho_path, &seq, &res.rho_per_event, &labels, &prov)?;

    let trace_path = out_dir.join("loss_trace.csv");
    write_loss_trace(&trace_path, &res.loss_trace, &prov)?;

    let meta = FitMeta {
        config_hash: &prov.config_hash,
        seed: prov.seed,
        resolved_config: &cfg,
        n_events: seq.total_events(),
        n_refreshes: res.n_refreshes,
        n_step_halvings: res.n_step_halvings,
        n_merges: res.n_merges,
        monotone_violations: res.monotone_violations,
        final_step_theta: res.final_step_theta,
        final_loss: res.loss_trace.last().copied(),
        warnings: &res.warnings,
    };
    let meta_path = out_dir.join("fit_meta.json");
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Internal(format!("meta serialization: {e}")))?;
    std::fs::write(&meta_path, json + "\n")?;

    eprintln!(
        "fit: {} events, {} refreshes, final loss {:.6e}; timing: precompute {:.2}s, \
         theta {:.2}s, rho {:.2}s, total {:.2}s",
        seq.total_events(),
        res.n_refreshes,
        res.loss_trace.last().copied().unwrap_or(f64::NAN),
        res.timing.precompute_s,
        res.timing.theta_steps_s,
        res.timing.rho_steps_s,
        res.timing.total_s
    );
    let files = vec![params_path, rho_path, trace_path, meta_path];
    write_manifest(out_dir, &files, &prov)?;
    Ok(files)
}

pub fn cmd_score(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let cfg = resolve(config_path, seed_override)?;
    let section =
        cfg.score.as_ref().ok_or_else(|| Error::Config("missing [score] section".into()))?;
    let fitted = ParamsFile::read(Path::new(&section.fitted_params))?;
    let params = fitted.to_params()?;
    let mut report = MetricsReport::default();

    match (&section.rho_file, &section.truth_events) {
        (Some(rho_file), Some(truth_events)) => {
            let predicted: Vec<u8> =
                read_rho_csv(Path::new(rho_file))?.into_iter().flatten().collect();
            let truth_seq = read_events_csv(Path::new(truth_events), None, None)?;
            let truth: Option<Vec<u8>> =
                truth_seq.events.iter().flatten().map(|e| e.label).collect();
            match truth {
                Some(truth) => {
                    let (p, r, counts) = metrics::rho_precision_recall(&predicted, &truth)?;
                    report.precision = Some(p);
                    report.recall = Some(r);
                    report.tp = Some(counts[0]);
                    report.fp = Some(counts[1]);
                    report.fn_ = Some(counts[2]);
                    report.tn = Some(counts[3]);
                }
                None => eprintln!("notice: truth events lack labels; precision/recall omitted"),
            }
        }
        _ => eprintln!("notice: rho_file/truth_events not given; precision/recall omitted"),
    }

    match &section.truth_params {
        Some(path) => {
            let truth = ParamsFile::read(Path::new(path))?.to_params()?;
            report.param_error_l2 = Some(metrics::param_error(&params, &truth, None)?);
        }
        None => eprintln!("notice: no truth_params; parameter error omitted"),
    }

    match &section.test_events {
        Some(path) => {
            let test_seq = read_events_csv(Path::new(path), Some(&params.mark), None)?;
            let policy = section.nll_policy.unwrap_or(match fitted.mode {
                Some(FitMode::Unhap) | None => NllPolicy::Mixture,
                Some(_) => NllPolicy::HawkesOnly,
            });
            let (nll, diag) = metrics::test_nll(&params, policy, &test_seq, section.delta)?;
            report.nll = Some(nll);
            report.nll_policy = Some(format!("{policy:?}"));
            report.nll_diagnostic = diag;
        }
        None => eprintln!("notice: no test_events; NLL omitted"),
    }

    std::fs::create_dir_all(out_dir)?;
    let prov = provenance(&cfg);
    let files = write_metrics(out_dir, &report, &prov)?;
    write_manifest(out_dir, &files, &prov)?;
    Ok(files)
}

pub fn cmd_experiment(
    config_path: &Path,
    out_dir: &Path,
    scale: Scale,
    seed_override: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let cfg = resolve(config_path, seed_override)?;
    let section = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| Error::Config("missing [experiment] section".into()))?;
    let opts = ExperimentOptions {
        scale,
        n_seeds: section.n_seeds,
        n_iter: section.n_iter,
        base_seed: cfg.seed,
    };
    let prov = provenance(&cfg);
    run_experiment(&section.name, &opts, out_dir, &prov)
}
