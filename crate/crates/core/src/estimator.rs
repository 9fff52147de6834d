//! Discretized least-squares loss for the mixture model: precomputation
//! statistics, the mean-field and hard-label losses, and their analytic
//! gradients.
//!
//! Conventions, shared with the brute-force oracle in [`crate::metrics`]:
//! grid sums over cells run `s = 1..=G`, kernel lag sums run `tau = 1..=L`
//! (the stored `tau = 0` sample is never summed), and the squared-intensity
//! time integral uses the effective horizon `G * delta`.

use crate::error::{Error, Result};
use crate::grid::DiscretizedSequence;
use crate::kernel::DiscreteKernel;
use crate::model::{MixtureAssignment, ModelParams};

/// Sufficient statistics of the discretized loss for a fixed assignment.
///
/// Layouts: `phi_g[j][tau]` and `xi[j][tau]` with `tau in 0..=L` (index 0
/// unused), `psi[j*D + k]` a flattened `(L+1) x (L+1)` matrix indexed
/// `tau * (L+1) + tau'`, `phi_ev[i][j][tau]` the event-weighted excitation
/// sums, plus the per-type event scalar sums entering the linear terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Precomputations {
    pub l: usize,
    pub phi_g: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    pub phi_ev: Vec<Vec<Vec<f64>>>,
    pub sum_f0_noise: Vec<f64>,
    pub sum_f1_rho: Vec<f64>,
}

fn check_alignment(dseq: &DiscretizedSequence, rho: &MixtureAssignment) -> Result<()> {
    if !rho.aligned_with(dseq) {
        return Err(Error::Internal(
            "mixture assignment is misaligned with the discretized sequence".into(),
        ));
    }
    Ok(())
}

/// Build all precomputation statistics from scratch.
///
/// Cost is dominated by the pair sums behind psi; event sparsity is
/// exploited so a refresh is O(number of event pairs within the kernel
/// window) rather than O(L^2 G), with identical results.
pub fn precompute(
    dseq: &DiscretizedSequence,
    rho: &MixtureAssignment,
    l: usize,
) -> Result<Precomputations> {
    check_alignment(dseq, rho)?;
    let g = dseq.g;
    if l > g {
        return Err(Error::Config(format!("kernel grid L = {l} exceeds G = {g}")));
    }
    let d = dseq.n_types();

    // Dense weighted vectors and per-type event views.
    let mut ztilde: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut zt = vec![0.0; g + 1];
        for (ge, &r) in dseq.types[j].events.iter().zip(&rho.rho[j]) {
            zt[ge.bin] = r * ge.weight;
        }
        ztilde.push(zt);
    }

    let mut phi_g = vec![vec![0.0; l + 1]; d];
    let mut xi = vec![vec![0.0; l + 1]; d];
    for j in 0..d {
        let events = &dseq.types[j].events;
        let rhos = &rho.rho[j];
        let mut total_zt = 0.0;
        let mut total_xi = 0.0;
        for (ge, &r) in events.iter().zip(rhos) {
            total_zt += r * ge.weight;
            total_xi += ge.weight * ge.weight * r * (1.0 - r);
        }
        // Sweep tau upward, peeling events whose bin exceeds G - tau.
        let mut p = events.len();
        let mut tail_zt = 0.0;
        let mut tail_xi = 0.0;
        for tau in 1..=l {
            let cutoff = g - tau;
            while p > 0 && events[p - 1].bin > cutoff {
                p -= 1;
                let r = rhos[p];
                let w = events[p].weight;
                tail_zt += r * w;
                tail_xi += w * w * r * (1.0 - r);
            }
            phi_g[j][tau] = total_zt - tail_zt;
            xi[j][tau] = total_xi - tail_xi;
        }
    }

    // psi[j][k](tau, tau') = sum over events u of type j with u + tau <= G
    // of ztilde_j[u] * ztilde_k[u + tau - tau']. Split into a lag
    // correlation plus an explicit correction for events near the horizon.
    let span = l.saturating_sub(1) as isize;
    let mut psi = vec![vec![0.0; (l + 1) * (l + 1)]; d * d];
    for j in 0..d {
        let ev_j = &dseq.types[j].events;
        for k in 0..d {
            let ev_k = &dseq.types[k].events;
            let mut corr = vec![0.0; 2 * l.saturating_sub(1) + 1]; // lag offset +span
            let mut start = 0usize;
            for (ge, &rj) in ev_j.iter().zip(&rho.rho[j]) {
                let u = ge.bin as isize;
                let zu = rj * ge.weight;
                if zu == 0.0 {
                    continue;
                }
                while start < ev_k.len() && (ev_k[start].bin as isize) < u - span {
                    start += 1;
                }
                let mut q = start;
                while q < ev_k.len() && (ev_k[q].bin as isize) <= u + span {
                    let dlag = ev_k[q].bin as isize - u;
                    corr[(dlag + span) as usize] += zu * ztilde[k][ev_k[q].bin];
                    q += 1;
                }
            }
            let mat = &mut psi[j * d + k];
            for tau in 1..=l {
                for tp in 1..=l {
                    mat[tau * (l + 1) + tp] = corr[(tau as isize - tp as isize + span) as usize];
                }
            }
            // Remove pairs whose anchor falls past the horizon (u + tau > G).
            for (ge, &rj) in ev_j.iter().zip(&rho.rho[j]) {
                let u = ge.bin;
                if u + l <= g {
                    continue;
                }
                let zu = rj * ge.weight;
                if zu == 0.0 {
                    continue;
                }
                for tau in (g - u + 1)..=l {
                    for tp in 1..=l {
                        let v = u as isize + tau as isize - tp as isize;
                        if v >= 0 && v as usize <= g {
                            mat[tau * (l + 1) + tp] -= zu * ztilde[k][v as usize];
                        }
                    }
                }
            }
        }
    }

    // Event-anchored excitation sums and the scalar event terms.
    let mut phi_ev = vec![vec![vec![0.0; l + 1]; d]; d];
    let mut sum_f0_noise = vec![0.0; d];
    let mut sum_f1_rho = vec![0.0; d];
    for i in 0..d {
        for (ge, &r) in dseq.types[i].events.iter().zip(&rho.rho[i]) {
            sum_f0_noise[i] += ge.f0_sum * (1.0 - r);
            sum_f1_rho[i] += ge.f1_sum * r;
            let fr = ge.f1_sum * r;
            if fr == 0.0 {
                continue;
            }
            let v = ge.bin;
            for j in 0..d {
                let row = &mut phi_ev[i][j];
                let ztj = &ztilde[j];
                for tau in 1..=l.min(v) {
                    row[tau] += fr * ztj[v - tau];
                }
            }
        }
    }

    Ok(Precomputations { l, phi_g, psi, xi, phi_ev, sum_f0_noise, sum_f1_rho })
}

/// Recompute from scratch and require bit-identical statistics; used as a
/// consistency check outside timed runs.
pub fn verify_precompute(
    dseq: &DiscretizedSequence,
    rho: &MixtureAssignment,
    pre: &Precomputations,
) -> Result<()> {
    let fresh = precompute(dseq, rho, pre.l)?;
    if &fresh != pre {
        return Err(Error::Internal(
            "precomputations are stale: fresh recomputation differs".into(),
        ));
    }
    Ok(())
}

/// Loss value plus gradients w.r.t. every theta coordinate.
#[derive(Debug, Clone)]
pub struct ThetaGrads {
    pub loss: f64,
    pub d_mu: Vec<f64>,
    pub d_mu_tilde: Vec<f64>,
    /// `d_kernels[i * D + j][p]`, parameter order as `KernelParams::param_names`.
    pub d_kernels: Vec<Vec<f64>>,
}

fn discretized_kernels(
    params: &ModelParams,
    delta: f64,
    with_grads: bool,
) -> Result<Vec<DiscreteKernel>> {
    params
        .kernels
        .iter()
        .map(|k| if with_grads { k.param_grad(delta) } else { k.discretize(delta) })
        .collect()
}

/// Shared evaluation of the loss and (optionally) its theta gradients from a
/// fixed set of precomputations.
fn eval_theta(
    params: &ModelParams,
    dseq: &DiscretizedSequence,
    pre: &Precomputations,
    with_grads: bool,
) -> Result<ThetaGrads> {
    let d = params.n_types();
    if dseq.n_types() != d {
        return Err(Error::Internal("params/sequence dimension mismatch".into()));
    }
    let l = pre.l;
    let delta = dseq.delta;
    let t_eff = dseq.t_grid();
    let h1 = params.mark.h1;
    let h0 = params.mark.h0;
    let kd = discretized_kernels(params, delta, with_grads)?;

    let mut out = ThetaGrads {
        loss: 0.0,
        d_mu: vec![0.0; d],
        d_mu_tilde: vec![0.0; d],
        d_kernels: vec![Vec::new(); d * d],
    };

    for i in 0..d {
        let mu = params.mu[i];
        let mut_i = params.mu_tilde[i];

        // v[j][tau] = sum_k sum_tau' phi_ik[tau'] psi_{j,k}(tau, tau')
        let mut v = vec![vec![0.0; l + 1]; d];
        for j in 0..d {
            for k in 0..d {
                let mat = &pre.psi[j * d + k];
                let phik = &kd[i * d + k].values;
                let vj = &mut v[j];
                for tau in 1..=l {
                    let row = &mat[tau * (l + 1)..tau * (l + 1) + l + 1];
                    let mut acc = 0.0;
                    for tp in 1..=l {
                        acc += phik[tp] * row[tp];
                    }
                    vj[tau] += acc;
                }
            }
        }

        let mut conv_lin = 0.0; // sum_j sum_tau phi[tau] Phi~_j(tau; G)
        let mut quad = 0.0; // sum_j sum_tau phi[tau] v_j[tau]
        let mut xi_term = 0.0; // sum_j sum_tau phi[tau]^2 Xi~_j(tau)
        let mut ev_conv = 0.0; // sum_j sum_tau phi[tau] Phi~_j(tau; events_i)
        for j in 0..d {
            let phi = &kd[i * d + j].values;
            for tau in 1..=l {
                conv_lin += phi[tau] * pre.phi_g[j][tau];
                quad += phi[tau] * v[j][tau];
                xi_term += phi[tau] * phi[tau] * pre.xi[j][tau];
                ev_conv += phi[tau] * pre.phi_ev[i][j][tau];
            }
        }

        out.loss += t_eff * (h1 * mu * mu + h0 * mut_i * mut_i)
            + 2.0 * delta * h1 * mu * conv_lin
            + delta * h1 * quad
            + delta * xi_term
            - 2.0 * (mut_i * pre.sum_f0_noise[i] + mu * pre.sum_f1_rho[i] + ev_conv);

        if with_grads {
            out.d_mu[i] =
                2.0 * t_eff * h1 * mu + 2.0 * delta * h1 * conv_lin - 2.0 * pre.sum_f1_rho[i];
            out.d_mu_tilde[i] = 2.0 * t_eff * h0 * mut_i - 2.0 * pre.sum_f0_noise[i];
            for j in 0..d {
                let dk = &kd[i * d + j];
                let np = dk.grads.len();
                let mut gp = vec![0.0; np];
                for (p, dphi) in dk.grads.iter().enumerate() {
                    let mut acc = 0.0;
                    for tau in 1..=l {
                        acc += dphi[tau]
                            * (2.0 * delta * h1 * (mu * pre.phi_g[j][tau] + v[j][tau])
                                + 2.0 * delta * dk.values[tau] * pre.xi[j][tau]
                                - 2.0 * pre.phi_ev[i][j][tau]);
                    }
                    gp[p] = acc;
                }
                out.d_kernels[i * d + j] = gp;
            }
        }
    }
    Ok(out)
}

/// Mean-field loss from existing precomputations.
pub fn loss_meanfield(
    params: &ModelParams,
    rho: &MixtureAssignment,
    dseq: &DiscretizedSequence,
    pre: &Precomputations,
) -> Result<f64> {
    check_alignment(dseq, rho)?;
    Ok(eval_theta(params, dseq, pre, false)?.loss)
}

/// Mean-field loss with the precomputations rebuilt for `rho`; the form the
/// finite-difference checks use.
pub fn loss_meanfield_fresh(
    params: &ModelParams,
    rho: &MixtureAssignment,
    dseq: &DiscretizedSequence,
) -> Result<f64> {
    let l = crate::kernel::grid_len(params.support(), dseq.delta);
    let pre = precompute(dseq, rho, l)?;
    loss_meanfield(params, rho, dseq, &pre)
}

/// Hard-label loss: the mean-field loss at `rho = Y`, where the mean-field
/// correction vanishes identically.
pub fn loss_hard(
    params: &ModelParams,
    assignment: &MixtureAssignment,
    dseq: &DiscretizedSequence,
) -> Result<f64> {
    loss_meanfield_fresh(params, &assignment.hardened(), dseq)
}

/// Loss and all theta gradients in one pass (the solver's M-step workhorse).
pub fn loss_and_theta_grads(
    params: &ModelParams,
    dseq: &DiscretizedSequence,
    pre: &Precomputations,
) -> Result<ThetaGrads> {
    eval_theta(params, dseq, pre, true)
}

pub fn grad_mu(
    params: &ModelParams,
    dseq: &DiscretizedSequence,
    pre: &Precomputations,
) -> Result<Vec<f64>> {
    Ok(eval_theta(params, dseq, pre, true)?.d_mu)
}

pub fn grad_mu_tilde(
    params: &ModelParams,
    dseq: &DiscretizedSequence,
    pre: &Precomputations,
) -> Result<Vec<f64>> {
    Ok(eval_theta(params, dseq, pre, true)?.d_mu_tilde)
}

/// Kernel-parameter gradients, `[i * D + j][p]`.
pub fn grad_eta(
    params: &ModelParams,
    dseq: &DiscretizedSequence,
    pre: &Precomputations,
) -> Result<Vec<Vec<f64>>> {
    Ok(eval_theta(params, dseq, pre, true)?.d_kernels)
}

/// Diagonal curvature of the loss in each theta coordinate, used by the
/// solver as a fixed per-block preconditioner. Exact for the baselines and
/// the kernel amplitude (the loss is quadratic in them); Gauss-Newton for
/// the shape parameters (second derivatives of the kernel samples dropped).
#[derive(Debug, Clone)]
pub struct ThetaCurvature {
    pub d_mu: Vec<f64>,
    pub d_mu_tilde: Vec<f64>,
    pub d_kernels: Vec<Vec<f64>>,
}

pub fn theta_diag_curvature(
    params: &ModelParams,
    dseq: &DiscretizedSequence,
    pre: &Precomputations,
) -> Result<ThetaCurvature> {
    let d = params.n_types();
    let l = pre.l;
    let delta = dseq.delta;
    let t_eff = dseq.t_grid();
    let h1 = params.mark.h1;
    let h0 = params.mark.h0;
    let kd = discretized_kernels(params, delta, true)?;
    let mut out = ThetaCurvature {
        d_mu: vec![2.0 * t_eff * h1; d],
        d_mu_tilde: vec![2.0 * t_eff * h0; d],
        d_kernels: vec![Vec::new(); d * d],
    };
    for i in 0..d {
        for j in 0..d {
            let dk = &kd[i * d + j];
            let mat = &pre.psi[j * d + j];
            let mut curv = vec![0.0; dk.grads.len()];
            for (p, dphi) in dk.grads.iter().enumerate() {
                let mut quad = 0.0;
                for tau in 1..=l {
                    if dphi[tau] == 0.0 {
                        continue;
                    }
                    let row = &mat[tau * (l + 1)..tau * (l + 1) + l + 1];
                    let mut acc = 0.0;
                    for tp in 1..=l {
                        acc += dphi[tp] * row[tp];
                    }
                    quad += dphi[tau] * acc;
                }
                let mut xi_q = 0.0;
                for tau in 1..=l {
                    xi_q += dphi[tau] * dphi[tau] * pre.xi[j][tau];
                }
                curv[p] = (2.0 * delta * (h1 * quad + xi_q)).max(1e-12);
            }
            out.d_kernels[i * d + j] = curv;
        }
    }
    Ok(out)
}

/// Gradient of the mean-field loss w.r.t. every relaxed label, evaluated
/// directly on the weight vectors (the formula differentiates through the
/// precomputation statistics, so none of them can be reused here).
pub fn grad_rho(
    params: &ModelParams,
    rho: &MixtureAssignment,
    dseq: &DiscretizedSequence,
) -> Result<Vec<Vec<f64>>> {
    check_alignment(dseq, rho)?;
    let d = params.n_types();
    let delta = dseq.delta;
    let g = dseq.g;
    let h1 = params.mark.h1;
    let l = crate::kernel::grid_len(params.support(), delta);
    let kd = discretized_kernels(params, delta, false)?;

    // Dense per-type arrays: weighted vector and f1 * rho at event bins.
    let mut ztilde: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut efr: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut zt = vec![0.0; g + 1];
        let mut ef = vec![0.0; g + 1];
        for (ge, &r) in dseq.types[j].events.iter().zip(&rho.rho[j]) {
            zt[ge.bin] = r * ge.weight;
            ef[ge.bin] = r * ge.f1_sum;
        }
        ztilde.push(zt);
        efr.push(ef);
    }

    // Prefix sums of phi and phi^2 per (i, m), and the phi-phi lag
    // correlations c[i][k][m][dlag] used by the quadratic term.
    let span = l.saturating_sub(1) as isize;
    let mut pref = vec![vec![0.0; l + 1]; d * d];
    let mut pref_sq = vec![vec![0.0; l + 1]; d * d];
    for im in 0..d * d {
        let phi = &kd[im].values;
        for tau in 1..=l {
            pref[im][tau] = pref[im][tau - 1] + phi[tau];
            pref_sq[im][tau] = pref_sq[im][tau - 1] + phi[tau] * phi[tau];
        }
    }
    let corr_len = 2 * l.saturating_sub(1) + 1;
    let mut phicorr = vec![vec![0.0; corr_len]; d * d * d]; // [(i*d + k)*d + m]
    for i in 0..d {
        for k in 0..d {
            for m in 0..d {
                let a = &kd[i * d + m].values;
                let b = &kd[i * d + k].values;
                let cc = &mut phicorr[(i * d + k) * d + m];
                for tau in 1..=l {
                    for tp in 1..=l {
                        cc[(tau as isize - tp as isize + span) as usize] += a[tau] * b[tp];
                    }
                }
            }
        }
    }

    let mut out: Vec<Vec<f64>> = Vec::with_capacity(d);
    for m in 0..d {
        let events = &dseq.types[m].events;
        let mut gm = vec![0.0; events.len()];
        for (e_idx, ge) in events.iter().enumerate() {
            let u = ge.bin;
            let zu = ge.weight;
            let tau_max = l.min(g - u); // lags with u + tau <= G
            let mut acc = 0.0;

            // Linear and correction terms from the squared intensity.
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..d {
                lin += h1 * params.mu[i] * pref[i * d + m][tau_max];
                sq += pref_sq[i * d + m][tau_max];
            }
            acc += 2.0 * delta * zu * lin;
            acc += delta * zu * (zu - 2.0 * ztilde[m][u]) * sq;

            // Quadratic cross term.
            let mut quad = 0.0;
            if u + l <= g {
                for i in 0..d {
                    for k in 0..d {
                        let cc = &phicorr[(i * d + k) * d + m];
                        let ztk = &ztilde[k];
                        let lo = -(u.min(span as usize) as isize);
                        let hi = span.min((g - u) as isize);
                        let mut s = 0.0;
                        for dlag in lo..=hi {
                            s += cc[(dlag + span) as usize] * ztk[(u as isize + dlag) as usize];
                        }
                        quad += h1 * s;
                    }
                }
            } else {
                // horizon-adjacent event: honor the u + tau <= G cutoff exactly
                for i in 0..d {
                    for k in 0..d {
                        let a = &kd[i * d + m].values;
                        let b = &kd[i * d + k].values;
                        let ztk = &ztilde[k];
                        let mut s = 0.0;
                        for tau in 1..=tau_max {
                            for tp in 1..=l {
                                let v = u as isize + tau as isize - tp as isize;
                                if v >= 0 && v as usize <= g {
                                    s += a[tau] * b[tp] * ztk[v as usize];
                                }
                            }
                        }
                        quad += h1 * s;
                    }
                }
            }
            acc += 2.0 * delta * zu * quad;

            // Event terms.
            let mut ev = -params.mu_tilde[m] * ge.f0_sum + params.mu[m] * ge.f1_sum;
            for j in 0..d {
                let phi = &kd[m * d + j].values;
                let ztj = &ztilde[j];
                let mut s = 0.0;
                for tau in 1..=l.min(u) {
                    s += phi[tau] * ztj[u - tau];
                }
                ev += ge.f1_sum * s;
            }
            for i in 0..d {
                let phi = &kd[i * d + m].values;
                let ef = &efr[i];
                let mut s = 0.0;
                for tau in 1..=tau_max {
                    s += phi[tau] * ef[u + tau];
                }
                ev += zu * s;
            }
            acc -= 2.0 * ev;

            gm[e_idx] = acc;
        }
        out.push(gm);
    }
    Ok(out)
}
