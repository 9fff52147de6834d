//! Run configuration: strict-parsed TOML with nested per-command sections.
//! Unknown keys are rejected everywhere so typos fail fast, and every
//! artifact embeds the hash of the fully resolved configuration.

use crate::error::{Error, Result};
use crate::init::InitConfig;
use crate::kernel::{KernelFamily, KernelParams, RaisedCosineKernel, TruncGaussKernel};
use crate::mark::{Density, MarkModel, Omega, PiecewiseLinear};
use crate::metrics::NllPolicy;
use crate::sim::SimConfig;
use crate::solver::{FitMode, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; CLI `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    pub mark_model: Option<MarkModelConfig>,
    pub simulate: Option<SimulateSection>,
    pub fit: Option<FitSection>,
    pub score: Option<ScoreSection>,
    pub experiment: Option<ExperimentSection>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))
    }

    /// Hash of the resolved configuration (after CLI overrides); embedded in
    /// every artifact this run writes.
    pub fn hash(&self) -> String {
        let canon = toml::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn mark_model(&self) -> Result<Arc<MarkModel>> {
        match &self.mark_model {
            Some(cfg) => Ok(Arc::new(cfg.build()?)),
            None => Err(Error::Config("missing [mark_model] section".into())),
        }
    }
}

/// Either a named builtin or a custom piecewise-linear pair of densities.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MarkModelConfig {
    pub name: Option<String>,
    pub omega: Option<Omega>,
    pub support: Option<[f64; 2]>,
    pub f1_knots: Option<Vec<[f64; 2]>>,
    pub f0_knots: Option<Vec<[f64; 2]>>,
}

impl MarkModelConfig {
    pub fn named(name: &str) -> Self {
        Self { name: Some(name.to_string()), ..Self::default() }
    }

    pub fn build(&self) -> Result<MarkModel> {
        if let Some(name) = &self.name {
            if self.f1_knots.is_some() || self.f0_knots.is_some() {
                return Err(Error::Config(
                    "give either mark_model.name or custom density tables, not both".into(),
                ));
            }
            return MarkModel::builtin(name);
        }
        let f1 = self
            .f1_knots
            .as_ref()
            .ok_or_else(|| Error::Config("custom mark model needs f1_knots".into()))?;
        let f0 = self
            .f0_knots
            .as_ref()
            .ok_or_else(|| Error::Config("custom mark model needs f0_knots".into()))?;
        let support = self.support.unwrap_or([0.0, 1.0]);
        let to_density = |knots: &Vec<[f64; 2]>| -> Result<Density> {
            Ok(Density::Piecewise(PiecewiseLinear::new(
                knots.iter().map(|k| (k[0], k[1])).collect(),
            )?))
        };
        MarkModel::new(
            (support[0], support[1]),
            self.omega.unwrap_or(Omega::Identity),
            to_density(f1)?,
            to_density(f0)?,
        )
    }
}

/// Kernel family plus shape parameters (amplitude comes separately).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelShapeConfig {
    pub family: KernelFamily,
    pub support: f64,
    pub m: Option<f64>,
    pub sigma: Option<f64>,
    pub u: Option<f64>,
    pub s: Option<f64>,
}

impl KernelShapeConfig {
    pub fn build(&self, alpha: f64) -> Result<KernelParams> {
        match self.family {
            KernelFamily::TruncatedGaussian => {
                let m = self.m.ok_or_else(|| Error::Config("kernel.m required".into()))?;
                let sigma =
                    self.sigma.ok_or_else(|| Error::Config("kernel.sigma required".into()))?;
                Ok(KernelParams::TruncatedGaussian(TruncGaussKernel::new(
                    alpha,
                    m,
                    sigma,
                    self.support,
                )?))
            }
            KernelFamily::RaisedCosine => {
                let u = self.u.ok_or_else(|| Error::Config("kernel.u required".into()))?;
                let s = self.s.ok_or_else(|| Error::Config("kernel.s required".into()))?;
                Ok(KernelParams::RaisedCosine(RaisedCosineKernel::new(
                    alpha,
                    u,
                    s,
                    self.support,
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub t_horizon: f64,
    pub mu: f64,
    pub mu_tilde: f64,
    pub alpha: f64,
    pub kernel: KernelShapeConfig,
}

impl SimulateSection {
    pub fn build(&self, mark: Arc<MarkModel>, seed: u64) -> Result<SimConfig> {
        Ok(SimConfig {
            mu: self.mu,
            mu_tilde: self.mu_tilde,
            kernel: self.kernel.build(self.alpha)?,
            mark,
            t_horizon: self.t_horizon,
            seed,
        })
    }
}

fn default_step_theta() -> f64 {
    1e-2
}
fn default_step_rho() -> f64 {
    1e-1
}
fn default_e_inner() -> usize {
    1
}
fn default_mode() -> FitMode {
    FitMode::Unhap
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Event file; the CLI positional argument overrides it.
    pub events: Option<String>,
    /// Overrides the horizon recorded in the event file.
    pub t_horizon: Option<f64>,
    pub delta: f64,
    pub w: f64,
    pub n_iter: usize,
    pub b: usize,
    pub kernel_family: KernelFamily,
    #[serde(default = "default_mode")]
    pub mode: FitMode,
    #[serde(default = "default_step_theta")]
    pub step_theta: f64,
    #[serde(default = "default_step_rho")]
    pub step_rho: f64,
    #[serde(default = "default_e_inner")]
    pub e_inner_steps: usize,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub paranoid_checks: bool,
}

impl FitSection {
    pub fn to_solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            n_iter: self.n_iter,
            b: self.b,
            step_theta: self.step_theta,
            step_rho: self.step_rho,
            e_inner_steps: self.e_inner_steps,
            delta: self.delta,
            w: self.w,
            kernel_family: self.kernel_family,
            mode: self.mode,
            init: self.init,
            seed,
            paranoid_checks: self.paranoid_checks,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    pub fitted_params: String,
    pub rho_file: Option<String>,
    pub truth_params: Option<String>,
    /// Event file carrying ground-truth labels.
    pub truth_events: Option<String>,
    pub test_events: Option<String>,
    pub delta: f64,
    pub nll_policy: Option<NllPolicy>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// Overrides the scale's default repetition count.
    pub n_seeds: Option<usize>,
    pub n_iter: Option<usize>,
}
