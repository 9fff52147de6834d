//! Parameter initialization: moment matching on event counts and inter-event
//! delays, plus the random baseline.

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::kernel::{KernelFamily, KernelParams, RaisedCosineKernel, TruncGaussKernel, SCALE_FLOOR};
use crate::mark::MarkModel;
use crate::model::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    MomentsMax,
    MomentsMean,
    Random,
}

/// Predecessor window used for the delay moments: `absolute` takes every
/// event after wall-clock time W (the published rule, kept verbatim),
/// `relative` the events within the trailing W seconds before each event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltatWindow {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoInit {
    /// Every relaxed label starts at 1/2 (deterministic default).
    Half,
    /// Independent fair coin per event.
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub scheme: InitScheme,
    pub seed: u64,
    pub rho_init: RhoInit,
    pub deltat_window: DeltatWindow,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            scheme: InitScheme::MomentsMax,
            seed: 0,
            rho_init: RhoInit::Half,
            deltat_window: DeltatWindow::Absolute,
        }
    }
}

/// Moment-matching initialization.
///
/// Baselines split the observed counts evenly between the noise and Hawkes
/// components (all relaxed labels at 1/2), and the Hawkes half further
/// between the baseline and the excitation amplitudes, so that
/// `mu~ T = N/2` and `mu T + sum_j alpha_ij sum_n omega(kappa_n^j) = N/2`
/// hold exactly. Kernel shapes come from the delay moments.
pub fn moment_match(
    seq: &EventSequence,
    family: KernelFamily,
    support: f64,
    scheme: InitScheme,
    window: DeltatWindow,
    mark: Arc<MarkModel>,
) -> Result<(ModelParams, Vec<String>)> {
    if seq.is_empty() {
        return Err(Error::Config("moment matching needs a non-empty sequence".into()));
    }
    let use_max = match scheme {
        InitScheme::MomentsMax => true,
        InitScheme::MomentsMean => false,
        InitScheme::Random => {
            return Err(Error::Config("random scheme has no moments to match".into()))
        }
    };
    let d = seq.n_types();
    let t = seq.t_horizon;
    let mut warnings = Vec::new();

    let mut mu = Vec::with_capacity(d);
    let mut mu_tilde = Vec::with_capacity(d);
    for list in &seq.events {
        let n = list.len() as f64;
        mu_tilde.push(n / (2.0 * t));
        mu.push(n / (2.0 * t * (d as f64 + 1.0)));
    }
    let sum_omega: Vec<f64> = seq
        .events
        .iter()
        .map(|list| list.iter().map(|e| mark.omega(e.mark)).sum())
        .collect();

    let mut kernels = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let n_i = seq.events[i].len() as f64;
            let alpha = if sum_omega[j] > 0.0 {
                n_i / (2.0 * (d as f64 + 1.0) * sum_omega[j])
            } else {
                warnings.push(format!(
                    "type {j} has zero total mark weight; excitation amplitude ({i},{j}) set to 0"
                ));
                0.0
            };
            let deltas = delay_samples(&seq.events[i], &seq.events[j], support, use_max, window);
            let (mut m, mut sigma) = if deltas.len() >= 2 {
                let n = deltas.len() as f64;
                let mean = deltas.iter().sum::<f64>() / n;
                let var = deltas.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (mean, var.sqrt())
            } else {
                warnings.push(format!(
                    "fewer than 2 usable delay samples for pair ({i},{j}); \
                     falling back to (W/2, W/4)"
                ));
                (support / 2.0, support / 4.0)
            };
            m = m.clamp(0.0, support);
            sigma = sigma.clamp(SCALE_FLOOR, support);
            kernels.push(match family {
                KernelFamily::TruncatedGaussian => KernelParams::TruncatedGaussian(
                    TruncGaussKernel::new(alpha, m, sigma, support)?,
                ),
                KernelFamily::RaisedCosine => {
                    let u = (m - sigma).max(0.0).min(support - 2.0 * SCALE_FLOOR);
                    let s = sigma.clamp(SCALE_FLOOR, (support - u) / 2.0);
                    KernelParams::RaisedCosine(RaisedCosineKernel::new(alpha, u, s, support)?)
                }
            });
        }
    }
    Ok((ModelParams::new(mu, mu_tilde, kernels, mark)?, warnings))
}

/// Delays from each target event to its admissible predecessors in the
/// source channel; events with an empty candidate set are skipped.
fn delay_samples(
    targets: &[crate::events::MarkedEvent],
    sources: &[crate::events::MarkedEvent],
    support: f64,
    use_max: bool,
    window: DeltatWindow,
) -> Vec<f64> {
    let times: Vec<f64> = sources.iter().map(|e| e.t).collect();
    let mut prefix = Vec::with_capacity(times.len() + 1);
    prefix.push(0.0);
    for &x in &times {
        prefix.push(prefix.last().unwrap() + x);
    }
    let mut out = Vec::new();
    let mut hi = 0usize; // first source index with time >= target (excluded)
    let mut lo_abs = 0usize; // first source index with time > support
    while lo_abs < times.len() && times[lo_abs] <= support {
        lo_abs += 1;
    }
    let mut lo_rel = 0usize;
    for ev in targets {
        while hi < times.len() && times[hi] < ev.t {
            hi += 1;
        }
        let lo = match window {
            DeltatWindow::Absolute => lo_abs,
            DeltatWindow::Relative => {
                while lo_rel < times.len() && times[lo_rel] <= ev.t - support {
                    lo_rel += 1;
                }
                lo_rel
            }
        };
        if lo >= hi {
            continue;
        }
        let delta = if use_max {
            ev.t - times[hi - 1]
        } else {
            let count = (hi - lo) as f64;
            ev.t - (prefix[hi] - prefix[lo]) / count
        };
        if delta > 0.0 {
            out.push(delta);
        }
    }
    out
}

/// Random initialization: baselines and amplitudes uniform on (0, 1), kernel
/// shape parameters uniform inside their feasible boxes. Deterministic given
/// the seed.
pub fn random_init(
    family: KernelFamily,
    support: f64,
    d: usize,
    seed: u64,
    mark: Arc<MarkModel>,
) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
    let mu_tilde: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
    let mut kernels = Vec::with_capacity(d * d);
    for _ in 0..d * d {
        let alpha: f64 = rng.gen();
        kernels.push(match family {
            KernelFamily::TruncatedGaussian => {
                let m = rng.gen::<f64>() * support;
                let sigma = SCALE_FLOOR + rng.gen::<f64>() * (support - SCALE_FLOOR);
                KernelParams::TruncatedGaussian(TruncGaussKernel::new(alpha, m, sigma, support)?)
            }
            KernelFamily::RaisedCosine => {
                let u = rng.gen::<f64>() * (support - 2.0 * SCALE_FLOOR);
                let s_max = (support - u) / 2.0;
                let s = SCALE_FLOOR + rng.gen::<f64>() * (s_max - SCALE_FLOOR);
                KernelParams::RaisedCosine(RaisedCosineKernel::new(alpha, u, s, support)?)
            }
        });
    }
    ModelParams::new(mu, mu_tilde, kernels, mark)
}
