//! Model parameters and the relaxed mixture assignment.

use crate::error::{Error, Result};
use crate::grid::DiscretizedSequence;
use crate::kernel::KernelParams;
use crate::mark::MarkModel;
use rand::Rng;
use std::sync::Arc;

/// Hawkes baselines, noise baselines, the D x D excitation kernels
/// (row-major: `kernels[i * d + j]` drives type j -> type i), and the shared
/// mark model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub mu: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub kernels: Vec<KernelParams>,
    pub mark: Arc<MarkModel>,
}

impl ModelParams {
    pub fn new(
        mu: Vec<f64>,
        mu_tilde: Vec<f64>,
        kernels: Vec<KernelParams>,
        mark: Arc<MarkModel>,
    ) -> Result<Self> {
        let d = mu.len();
        if mu_tilde.len() != d || kernels.len() != d * d {
            return Err(Error::InvalidParameter(format!(
                "dimension mismatch: {} baselines, {} noise baselines, {} kernels",
                d,
                mu_tilde.len(),
                kernels.len()
            )));
        }
        if mu.iter().chain(&mu_tilde).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("baselines must be finite and >= 0".into()));
        }
        Ok(Self { mu, mu_tilde, kernels, mark })
    }

    pub fn n_types(&self) -> usize {
        self.mu.len()
    }

    pub fn kernel(&self, i: usize, j: usize) -> &KernelParams {
        &self.kernels[i * self.n_types() + j]
    }

    /// Common support length of all kernels.
    pub fn support(&self) -> f64 {
        self.kernels[0].support()
    }
}

/// Per-event relaxed labels in [0, 1] plus their hard thresholding.
/// Slots align with the grid events of a `DiscretizedSequence`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureAssignment {
    pub rho: Vec<Vec<f64>>,
    pub hard: Vec<Vec<bool>>,
}

impl MixtureAssignment {
    pub fn constant(dseq: &DiscretizedSequence, value: f64) -> Self {
        let rho: Vec<Vec<f64>> =
            dseq.types.iter().map(|t| vec![value; t.events.len()]).collect();
        let mut a = Self { hard: Vec::new(), rho };
        a.threshold();
        a
    }

    /// Independent fair Bernoulli draws per event slot.
    pub fn bernoulli<R: Rng + ?Sized>(dseq: &DiscretizedSequence, rng: &mut R) -> Self {
        let rho: Vec<Vec<f64>> = dseq
            .types
            .iter()
            .map(|t| (0..t.events.len()).map(|_| if rng.gen::<f64>() < 0.5 { 0.0 } else { 1.0 }).collect())
            .collect();
        let mut a = Self { hard: Vec::new(), rho };
        a.threshold();
        a
    }

    /// C-step: `hard = rho > 1/2` (strict, so an exact half labels noise).
    pub fn threshold(&mut self) {
        self.hard = self.rho.iter().map(|r| r.iter().map(|&x| x > 0.5).collect()).collect();
    }

    /// Clamp every slot into [0, 1].
    pub fn project(&mut self) {
        for r in &mut self.rho {
            for x in r.iter_mut() {
                *x = x.clamp(0.0, 1.0);
            }
        }
    }

    /// Copy with `rho` replaced by the hard labels as 0/1 reals.
    pub fn hardened(&self) -> Self {
        let rho: Vec<Vec<f64>> = self
            .hard
            .iter()
            .map(|h| h.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rho, hard: self.hard.clone() }
    }

    pub fn aligned_with(&self, dseq: &DiscretizedSequence) -> bool {
        self.rho.len() == dseq.n_types()
            && self.rho.iter().zip(&dseq.types).all(|(r, t)| r.len() == t.events.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{EventSequence, MarkedEvent};
    use crate::grid::discretize_events;

    #[test]
    fn threshold_is_strict_at_half() {
        let seq = EventSequence::from_raw(
            vec![vec![MarkedEvent::new(1.0, 0.5), MarkedEvent::new(2.0, 0.5)]],
            10.0,
        )
        .unwrap();
        let mark = Arc::new(MarkModel::builtin("identity-linear").unwrap());
        let d = discretize_events(&seq, 0.1, &mark).unwrap();
        let mut a = MixtureAssignment::constant(&d, 0.5);
        assert!(a.hard[0].iter().all(|&b| !b));
        a.rho[0][1] = 0.51;
        a.threshold();
        assert!(!a.hard[0][0] && a.hard[0][1]);
        let h = a.hardened();
        assert_eq!(h.rho[0], vec![0.0, 1.0]);
    }
}
