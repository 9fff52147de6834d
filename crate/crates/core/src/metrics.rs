//! Metrics and validation oracles: label precision/recall, parameter error,
//! test-set negative log-likelihood, and the brute-force loss oracle that
//! cross-checks the precomputation path.

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::grid::{discretize_events, DiscretizedSequence};
use crate::kernel::grid_len;
use crate::model::{MixtureAssignment, ModelParams};
use serde::{Deserialize, Serialize};

/// Flat metrics bundle written by the scoring command. Missing inputs leave
/// the corresponding entries `None`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub tp: Option<u64>,
    pub fp: Option<u64>,
    pub fn_: Option<u64>,
    pub tn: Option<u64>,
    pub param_error_l2: Option<f64>,
    pub nll: Option<f64>,
    pub nll_policy: Option<String>,
    pub nll_diagnostic: Option<String>,
}

impl MetricsReport {
    /// One `key = value` line per populated metric.
    pub fn to_flat_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push_str(k);
                out.push_str(" = ");
                out.push_str(&v);
                out.push('\n');
            }
        };
        push("precision", self.precision.map(|v| format!("{v:.17}")));
        push("recall", self.recall.map(|v| format!("{v:.17}")));
        push("tp", self.tp.map(|v| v.to_string()));
        push("fp", self.fp.map(|v| v.to_string()));
        push("fn", self.fn_.map(|v| v.to_string()));
        push("tn", self.tn.map(|v| v.to_string()));
        push("param_error_l2", self.param_error_l2.map(|v| format!("{v:.17}")));
        push("nll", self.nll.map(|v| format!("{v:.17}")));
        push("nll_policy", self.nll_policy.clone());
        push("nll_diagnostic", self.nll_diagnostic.clone());
        out
    }
}

/// Precision/recall of predicted labels against ground truth, positive class
/// = structured (1). Empty denominators follow the convention of scoring 1.
pub fn rho_precision_recall(predicted: &[u8], truth: &[u8]) -> Result<(f64, f64, [u64; 4])> {
    if predicted.len() != truth.len() {
        return Err(Error::Data(format!(
            "label length mismatch: {} predicted vs {} truth",
            predicted.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fnn, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fnn == 0 { 1.0 } else { tp as f64 / (tp + fnn) as f64 };
    Ok((precision, recall, [tp, fp, fnn, tn]))
}

/// Euclidean error over the named parameter coordinates; the default list is
/// every Hawkes baseline followed by every kernel parameter (amplitude and
/// shape), matching the estimation error reported in the experiments. Noise
/// baselines are excluded by default.
pub fn param_error(est: &ModelParams, truth: &ModelParams, coords: Option<&[&str]>) -> Result<f64> {
    let d = est.n_types();
    if truth.n_types() != d {
        return Err(Error::Data("parameter dimension mismatch".into()));
    }
    let mut acc = 0.0;
    let want = |name: &str| coords.map_or(true, |c| c.contains(&name));
    for i in 0..d {
        if want("mu") {
            acc += (est.mu[i] - truth.mu[i]).powi(2);
        }
        if want("mu_tilde") && coords.is_some() {
            acc += (est.mu_tilde[i] - truth.mu_tilde[i]).powi(2);
        }
        for j in 0..d {
            let ke = est.kernel(i, j);
            let kt = truth.kernel(i, j);
            if ke.family() != kt.family() {
                return Err(Error::Data("kernel family mismatch between estimate and truth".into()));
            }
            let pe = ke.param_values();
            let pt = kt.param_values();
            for (name, (a, b)) in ke.param_names().iter().zip(pe.iter().zip(&pt)) {
                if want(name) {
                    acc += (a - b).powi(2);
                }
            }
        }
    }
    Ok(acc.sqrt())
}

/// How the intensity is assembled when scoring a test sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NllPolicy {
    /// Full mixture intensity; every past test event excites with weight 1.
    Mixture,
    /// Drops the noise baseline term (for fits that model no noise process).
    HawkesOnly,
}

/// Per-event negative log-likelihood of a test sequence under fitted
/// parameters, with the compensator approximated by its Riemann sum on the
/// inference grid. Returns `+inf` with a diagnostic when the intensity
/// vanishes at an observed event.
pub fn test_nll(
    params: &ModelParams,
    policy: NllPolicy,
    test_seq: &EventSequence,
    delta: f64,
) -> Result<(f64, Option<String>)> {
    if test_seq.is_empty() {
        return Err(Error::Data("empty test sequence: NLL undefined".into()));
    }
    let d = params.n_types();
    if test_seq.n_types() != d {
        return Err(Error::Data("test sequence dimension mismatch".into()));
    }
    let dseq = discretize_events(test_seq, delta, &params.mark)?;
    let g = dseq.g;
    let l = grid_len(params.support(), delta);
    let kd: Vec<_> = params
        .kernels
        .iter()
        .map(|k| k.discretize(delta).map(|d| d.values))
        .collect::<Result<_>>()?;

    let mut log_sum = 0.0;
    let mut comp = 0.0;
    let mut diag = None;
    for i in 0..d {
        // excitation on every grid node, all past events at weight 1
        let mut exc = vec![0.0; g + 1];
        for j in 0..d {
            let phi = &kd[i * d + j];
            for ge in &dseq.types[j].events {
                let lo = ge.bin + 1;
                let hi = (ge.bin + l).min(g);
                for s in lo..=hi {
                    exc[s] += phi[s - ge.bin] * ge.weight;
                }
            }
        }
        let noise = match policy {
            NllPolicy::Mixture => params.mu_tilde[i],
            NllPolicy::HawkesOnly => 0.0,
        };
        for s in 1..=g {
            comp += params.mu[i] + exc[s] + noise;
        }
        for ev in &test_seq.events[i] {
            let bin = ((ev.t / delta).round() as usize).min(g);
            let ground = params.mu[i] + exc[bin];
            let lam = ground * params.mark.f1.value(ev.mark) + noise * params.mark.f0.value(ev.mark);
            if lam <= 0.0 || !lam.is_finite() {
                diag = Some(format!(
                    "intensity {lam} at event t = {} of type {i}; NLL set to +inf",
                    ev.t
                ));
                return Ok((f64::INFINITY, diag));
            }
            log_sum += lam.ln();
        }
    }
    let n = test_seq.total_events() as f64;
    Ok((-(log_sum - delta * comp) / n, diag))
}

/// Brute-force mean-field loss: materializes the excitation on every grid
/// node by direct convolution over events and lags, with no reuse of the
/// precomputation statistics. Guarded to small instances.
pub fn naive_loss_oracle(
    params: &ModelParams,
    rho: &MixtureAssignment,
    seq: &EventSequence,
    delta: f64,
) -> Result<f64> {
    let mark = &params.mark;
    let dseq = discretize_events(seq, delta, mark)?;
    naive_loss_oracle_on_grid(params, rho, &dseq)
}

/// As [`naive_loss_oracle`] but on an existing projection, so callers can
/// share event binning (and the rho alignment it defines) with the fast path.
pub fn naive_loss_oracle_on_grid(
    params: &ModelParams,
    rho: &MixtureAssignment,
    dseq: &DiscretizedSequence,
) -> Result<f64> {
    if !rho.aligned_with(dseq) {
        return Err(Error::Internal("rho misaligned with discretized sequence".into()));
    }
    let d = params.n_types();
    let g = dseq.g;
    let delta = dseq.delta;
    let l = grid_len(params.support(), delta);
    let n: usize = dseq.types.iter().map(|t| t.events.len()).sum();
    let work = g as f64 * l as f64 * n.max(1) as f64;
    if work > 1e8 {
        return Err(Error::Config(format!(
            "instance too large for the brute-force oracle: G*L*N = {work:.3e} > 1e8"
        )));
    }
    let t_eff = dseq.t_grid();
    let h1 = params.mark.h1;
    let h0 = params.mark.h0;

    let mut loss = 0.0;
    for i in 0..d {
        let mu = params.mu[i];
        let mut_i = params.mu_tilde[i];
        // E_i[s]: excitation at node s; X_i[s]: the mean-field correction mass
        let mut exc = vec![0.0; g + 1];
        let mut corr = vec![0.0; g + 1];
        for j in 0..d {
            let phi = params.kernel(i, j).discretize(delta)?.values;
            for (ge, &r) in dseq.types[j].events.iter().zip(&rho.rho[j]) {
                let zt = r * ge.weight;
                let xw = ge.weight * ge.weight * r * (1.0 - r);
                for tau in 1..=l {
                    let s = ge.bin + tau;
                    if s > g {
                        break;
                    }
                    exc[s] += phi[tau] * zt;
                    corr[s] += phi[tau] * phi[tau] * xw;
                }
            }
        }
        let mut sq = 0.0;
        let mut corr_sum = 0.0;
        for s in 1..=g {
            sq += 2.0 * mu * exc[s] + exc[s] * exc[s];
            corr_sum += corr[s];
        }
        let mut ev_terms = 0.0;
        for (ge, &r) in dseq.types[i].events.iter().zip(&rho.rho[i]) {
            ev_terms += mut_i * ge.f0_sum * (1.0 - r) + mu * ge.f1_sum * r + ge.f1_sum * r * exc[ge.bin];
        }
        loss += t_eff * (h1 * mu * mu + h0 * mut_i * mut_i)
            + delta * h1 * sq
            + delta * corr_sum
            - 2.0 * ev_terms;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{loss_hard, loss_meanfield_fresh};
    use crate::events::MarkedEvent;
    use crate::kernel::{KernelParams, TruncGaussKernel};
    use crate::mark::MarkModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn precision_recall_conventions() {
        let (p, r, _) = rho_precision_recall(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!((p, r), (1.0, 1.0));
        let (p, r, _) = rho_precision_recall(&[0, 0, 0], &[1, 1, 0]).unwrap();
        assert_eq!((p, r), (1.0, 0.0)); // empty-positive convention
        let (p, r, c) = rho_precision_recall(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!((p, r), (0.5, 0.5));
        assert_eq!(c, [1, 1, 1, 1]);
        assert!(rho_precision_recall(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn precision_recall_is_permutation_invariant() {
        let pred = [1u8, 0, 1, 1, 0, 0, 1];
        let truth = [1u8, 1, 0, 1, 0, 1, 0];
        let a = rho_precision_recall(&pred, &truth).unwrap();
        let perm = [6usize, 2, 0, 4, 5, 1, 3];
        let pp: Vec<u8> = perm.iter().map(|&i| pred[i]).collect();
        let tt: Vec<u8> = perm.iter().map(|&i| truth[i]).collect();
        let b = rho_precision_recall(&pp, &tt).unwrap();
        assert_eq!((a.0, a.1), (b.0, b.1));
    }

    fn mk_params(mu: f64, mt: f64, alpha: f64, m: f64, sigma: f64) -> ModelParams {
        let mark = Arc::new(MarkModel::builtin("identity-linear").unwrap());
        let k = KernelParams::TruncatedGaussian(TruncGaussKernel::new(alpha, m, sigma, 1.0).unwrap());
        ModelParams::new(vec![mu], vec![mt], vec![k], mark).unwrap()
    }

    #[test]
    fn param_error_examples() {
        let a = mk_params(0.8, 0.5, 1.45, 0.5, 0.1);
        assert_eq!(param_error(&a, &a, None).unwrap(), 0.0);
        let b = mk_params(0.5, 0.5, 1.45, 0.5, 0.1);
        assert!((param_error(&a, &b, None).unwrap() - 0.3).abs() < 1e-12);
        let c = mk_params(0.9, 0.5, 1.55, 0.6, 0.2);
        assert!((param_error(&a, &c, None).unwrap() - 0.2).abs() < 1e-12);
        // mu_tilde differences are excluded by default
        let d = mk_params(0.8, 1.5, 1.45, 0.5, 0.1);
        assert_eq!(param_error(&a, &d, None).unwrap(), 0.0);
        assert!(param_error(&a, &d, Some(&["mu", "mu_tilde"])).unwrap() > 0.9);
    }

    #[test]
    fn oracle_equals_fast_losses_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mark = Arc::new(MarkModel::builtin("identity-linear").unwrap());
        for trial in 0..20 {
            let n = rng.gen_range(0..=30);
            let evs: Vec<MarkedEvent> = (0..n)
                .map(|_| MarkedEvent::new(rng.gen::<f64>() * 20.0, rng.gen::<f64>()))
                .collect();
            let seq = EventSequence::from_raw(vec![evs], 20.0).unwrap();
            let dseq = discretize_events(&seq, 0.1, &mark).unwrap();
            let mut rho = MixtureAssignment::constant(&dseq, 0.5);
            for r in &mut rho.rho[0] {
                *r = if trial % 3 == 0 {
                    f64::from(rng.gen::<bool>()) // binary case: correction must vanish
                } else {
                    rng.gen()
                };
            }
            rho.threshold();
            let p = mk_params(
                rng.gen::<f64>(),
                rng.gen::<f64>(),
                rng.gen::<f64>() * 1.5,
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.05..0.3),
            );
            let fast = loss_meanfield_fresh(&p, &rho, &dseq).unwrap();
            let slow = naive_loss_oracle_on_grid(&p, &rho, &dseq).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-8 * slow.abs().max(1e-8),
                "trial {trial}: fast {fast} vs oracle {slow}"
            );
            if trial % 3 == 0 {
                let hard = loss_hard(&p, &rho, &dseq).unwrap();
                assert!((hard - slow).abs() <= 1e-8 * slow.abs().max(1e-8));
            }
        }
    }

    #[test]
    fn oracle_zero_events_and_guard() {
        let p = mk_params(0.4, 0.6, 1.0, 0.5, 0.1);
        let seq = EventSequence::from_raw(vec![vec![]], 20.0).unwrap();
        let v = naive_loss_oracle(&p, &MixtureAssignment { rho: vec![vec![]], hard: vec![vec![]] }, &seq, 0.1)
            .unwrap();
        let expect = 20.0 * (p.mark.h1 * 0.16 + p.mark.h0 * 0.36);
        assert!((v - expect).abs() < 1e-12);
        // guard: huge instance rejected
        let evs: Vec<MarkedEvent> =
            (0..200_000).map(|i| MarkedEvent::new(i as f64 * 0.004, 0.5)).collect();
        let big = EventSequence::from_raw(vec![evs], 1000.0).unwrap();
        let d = discretize_events(&big, 0.001, &p.mark).unwrap();
        let rho = MixtureAssignment::constant(&d, 0.5);
        assert!(naive_loss_oracle_on_grid(&p, &rho, &d).is_err());
    }

    #[test]
    fn poisson_truth_nll_closed_form() {
        // alpha = 0, uniform-mark intensity: NLL minimized at mu_tilde = N/T
        // where it equals 1 - log(N/T).
        let mark = Arc::new(MarkModel::builtin("unmarked").unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = 200.0;
        let evs: Vec<MarkedEvent> =
            (0..300).map(|_| MarkedEvent::new(rng.gen::<f64>() * t, 1.0)).collect();
        let n = evs.len() as f64;
        let seq = EventSequence::from_raw(vec![evs], t).unwrap();
        let k = KernelParams::TruncatedGaussian(TruncGaussKernel::new(0.0, 0.5, 0.1, 1.0).unwrap());
        let rate = n / t;
        let params = ModelParams::new(vec![0.0], vec![rate], vec![k], mark).unwrap();
        let (nll, _) = test_nll(&params, NllPolicy::Mixture, &seq, 0.01).unwrap();
        let expect = 1.0 - rate.ln();
        assert!((nll - expect).abs() < 1e-9, "nll {nll} vs {expect}");
        // scaling the intensity by c shifts NLL by -log c + (c-1) * (compensator/N)
        let c = 1.7;
        let scaled = ModelParams::new(vec![0.0], vec![rate * c], params.kernels.clone(), params.mark.clone()).unwrap();
        let (nll_c, _) = test_nll(&scaled, NllPolicy::Mixture, &seq, 0.01).unwrap();
        let comp_per_event = rate * t / n; // = 1 at the minimizer
        let expect_c = nll - c.ln() + (c - 1.0) * comp_per_event;
        assert!((nll_c - expect_c).abs() < 1e-9);
    }

    #[test]
    fn nll_guards() {
        let p = mk_params(0.4, 0.0, 0.0, 0.5, 0.1);
        let empty = EventSequence::from_raw(vec![vec![]], 10.0).unwrap();
        assert!(test_nll(&p, NllPolicy::Mixture, &empty, 0.01).is_err());
        // zero intensity at an event (mu = 0, hawkes-only, no excitation)
        let p0 = mk_params(0.0, 1.0, 0.0, 0.5, 0.1);
        let seq =
            EventSequence::from_raw(vec![vec![MarkedEvent::new(1.0, 0.5)]], 10.0).unwrap();
        let (nll, diag) = test_nll(&p0, NllPolicy::HawkesOnly, &seq, 0.01).unwrap();
        assert!(nll.is_infinite() && diag.is_some());
    }

    #[test]
    fn nll_invariant_to_event_order_within_type() {
        let p = mk_params(0.4, 0.3, 0.8, 0.5, 0.1);
        let evs = vec![
            MarkedEvent::new(3.0, 0.5),
            MarkedEvent::new(1.0, 0.7),
            MarkedEvent::new(7.0, 0.2),
        ];
        let mut rev = evs.clone();
        rev.reverse();
        let a = EventSequence::from_raw(vec![evs], 10.0).unwrap();
        let b = EventSequence::from_raw(vec![rev], 10.0).unwrap();
        let (na, _) = test_nll(&p, NllPolicy::Mixture, &a, 0.01).unwrap();
        let (nb, _) = test_nll(&p, NllPolicy::Mixture, &b, 0.01).unwrap();
        assert_eq!(na, nb);
    }
}
