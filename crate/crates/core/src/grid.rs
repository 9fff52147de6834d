//! Projection of event sequences onto the regular inference grid and the
//! per-bin weight vectors consumed by the discretized loss.

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::kernel::grid_len;
use crate::mark::MarkModel;
use crate::model::MixtureAssignment;

/// One grid-projected (possibly merged) event: several source events landing
/// in the same bin collapse into a single pseudo-event with summed
/// omega-weight and one shared mixture slot. The per-event density factors
/// of the loss keep one term per source event, so `f1_sum`/`f0_sum` carry
/// the sums over the merged constituents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridEvent {
    pub bin: usize,
    /// Sum of omega(mark) over the merged source events.
    pub weight: f64,
    /// Omega-weighted mean mark (plain mean when all weights vanish).
    pub mark: f64,
    pub f1_sum: f64,
    pub f0_sum: f64,
    pub n_merged: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeGrid {
    /// Grid events, ascending bin, at most one per bin.
    pub events: Vec<GridEvent>,
    /// Dense weight vector, length G + 1: `z[s]` = summed omega-weight in bin s.
    pub z: Vec<f64>,
    /// Source event index -> grid event index.
    pub event_of_source: Vec<usize>,
}

/// An `EventSequence` projected on the grid `{0, delta, ..., G delta}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSequence {
    pub delta: f64,
    /// Number of grid cells: `G = floor(T / delta)`.
    pub g: usize,
    pub t_horizon: f64,
    pub types: Vec<TypeGrid>,
    /// Count of source events that were merged into an earlier one.
    pub n_merges: usize,
}

impl DiscretizedSequence {
    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    /// Effective horizon of the discretized integrals, `G * delta`.
    pub fn t_grid(&self) -> f64 {
        self.g as f64 * self.delta
    }
}

/// Project every event to its nearest grid node (`|t - s delta| <= delta/2`).
/// Same-bin collisions merge as described on [`GridEvent`]; events past the
/// last node are clamped to bin `G`.
pub fn discretize_events(
    seq: &EventSequence,
    delta: f64,
    mark: &MarkModel,
) -> Result<DiscretizedSequence> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta = {delta} must be > 0")));
    }
    if delta >= seq.t_horizon {
        return Err(Error::Config(format!(
            "delta = {delta} must be smaller than the horizon T = {}",
            seq.t_horizon
        )));
    }
    let g = grid_len(seq.t_horizon, delta);
    let mut n_merges = 0usize;
    let mut types = Vec::with_capacity(seq.n_types());
    for list in &seq.events {
        let mut events: Vec<GridEvent> = Vec::new();
        let mut event_of_source = Vec::with_capacity(list.len());
        let mut wsum_mark = Vec::new(); // omega-weighted mark sum per grid event
        let mut msum = Vec::new(); // plain mark sum, fallback for zero weights
        for ev in list {
            let bin = ((ev.t / delta).round() as usize).min(g);
            let w = mark.omega(ev.mark);
            let f1 = mark.f1.value(ev.mark);
            let f0 = mark.f0.value(ev.mark);
            match events.last_mut() {
                Some(last) if last.bin == bin => {
                    last.weight += w;
                    last.f1_sum += f1;
                    last.f0_sum += f0;
                    last.n_merged += 1;
                    n_merges += 1;
                    let idx = events.len() - 1;
                    wsum_mark[idx] += w * ev.mark;
                    msum[idx] += ev.mark;
                    event_of_source.push(idx);
                }
                _ => {
                    events.push(GridEvent {
                        bin,
                        weight: w,
                        mark: ev.mark,
                        f1_sum: f1,
                        f0_sum: f0,
                        n_merged: 1,
                    });
                    wsum_mark.push(w * ev.mark);
                    msum.push(ev.mark);
                    event_of_source.push(events.len() - 1);
                }
            }
        }
        let mut z = vec![0.0; g + 1];
        for (i, ge) in events.iter_mut().enumerate() {
            ge.mark = if ge.weight > 0.0 {
                wsum_mark[i] / ge.weight
            } else {
                msum[i] / ge.n_merged as f64
            };
            z[ge.bin] = ge.weight;
        }
        types.push(TypeGrid { events, z, event_of_source });
    }
    Ok(DiscretizedSequence { delta, g, t_horizon: seq.t_horizon, types, n_merges })
}

/// Dense weighted vector `z~_j = rho_j (.) z_j` for one type.
pub fn weighted_vector(
    dseq: &DiscretizedSequence,
    rho: &MixtureAssignment,
    type_j: usize,
) -> Result<Vec<f64>> {
    let tg = &dseq.types[type_j];
    if rho.rho[type_j].len() != tg.events.len() {
        return Err(Error::Internal(format!(
            "mixture slots ({}) misaligned with grid events ({}) for type {type_j}",
            rho.rho[type_j].len(),
            tg.events.len()
        )));
    }
    let mut zt = vec![0.0; dseq.g + 1];
    for (ge, &r) in tg.events.iter().zip(&rho.rho[type_j]) {
        zt[ge.bin] = r * ge.weight;
    }
    Ok(zt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::MarkedEvent;

    fn model() -> MarkModel {
        MarkModel::builtin("identity-linear").unwrap()
    }

    fn seq(events: Vec<MarkedEvent>, t: f64) -> EventSequence {
        EventSequence::from_raw(vec![events], t).unwrap()
    }

    #[test]
    fn grid_size_and_single_event_projection() {
        let s = seq(vec![MarkedEvent::new(0.504, 0.5)], 100.0);
        let d = discretize_events(&s, 0.01, &model()).unwrap();
        assert_eq!(d.g, 10_000);
        assert_eq!(d.types[0].events.len(), 1);
        assert_eq!(d.types[0].events[0].bin, 50);
        assert_eq!(d.types[0].z[50], 0.5); // omega = identity
        assert_eq!(d.types[0].z.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn same_bin_events_merge_with_summed_weight() {
        let s = seq(
            vec![MarkedEvent::new(1.001, 0.3), MarkedEvent::new(1.004, 0.4)],
            10.0,
        );
        let d = discretize_events(&s, 0.01, &model()).unwrap();
        let tg = &d.types[0];
        assert_eq!(tg.events.len(), 1);
        assert_eq!(d.n_merges, 1);
        assert!((tg.z[100] - 0.7).abs() < 1e-15);
        assert_eq!(tg.event_of_source, vec![0, 0]);
        // omega-weighted mean mark: (0.09 + 0.16) / 0.7
        assert!((tg.events[0].mark - 0.25 / 0.7).abs() < 1e-15);
    }

    #[test]
    fn projection_conserves_total_weight() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = model();
        let evs: Vec<MarkedEvent> = (0..500)
            .map(|_| MarkedEvent::new(rng.gen::<f64>() * 20.0, rng.gen::<f64>()))
            .collect();
        let s = seq(evs, 20.0);
        let d = discretize_events(&s, 0.1, &m).unwrap();
        // group the reference sum identically (per bin) so equality is exact
        let per_bin: f64 = d.types[0].z.iter().sum();
        let mut by_event = 0.0;
        for ge in &d.types[0].events {
            by_event += ge.weight;
        }
        assert_eq!(per_bin, by_event);
        let flat: f64 = s.events[0].iter().map(|e| m.omega(e.mark)).sum();
        assert!((per_bin - flat).abs() <= 1e-12 * flat.abs());
        // projection error bounded by delta/2 (tail clamp aside)
        for (src, ge_idx) in d.types[0].event_of_source.iter().enumerate() {
            let t = s.events[0][src].t;
            let node = d.types[0].events[*ge_idx].bin as f64 * 0.1;
            assert!((t - node).abs() <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn tail_events_clamp_to_last_bin() {
        // T = 0.95, delta = 0.1 -> G = 9; t = 0.99 projects past node 9
        let s = seq(vec![MarkedEvent::new(0.949, 0.5)], 0.95);
        let d = discretize_events(&s, 0.1, &model()).unwrap();
        assert_eq!(d.g, 9);
        assert_eq!(d.types[0].events[0].bin, 9);
        assert!(discretize_events(&s, 1.0, &model()).is_err()); // delta >= T
    }

    #[test]
    fn weighted_vector_scales_z() {
        let s = seq(
            vec![MarkedEvent::new(1.0, 0.5), MarkedEvent::new(2.0, 0.8)],
            10.0,
        );
        let d = discretize_events(&s, 0.01, &model()).unwrap();
        let ones = MixtureAssignment::constant(&d, 1.0);
        let half = MixtureAssignment::constant(&d, 0.5);
        let zero = MixtureAssignment::constant(&d, 0.0);
        let zt1 = weighted_vector(&d, &ones, 0).unwrap();
        assert_eq!(zt1, d.types[0].z);
        let zt0 = weighted_vector(&d, &zero, 0).unwrap();
        assert!(zt0.iter().all(|v| *v == 0.0));
        let zth = weighted_vector(&d, &half, 0).unwrap();
        for (a, b) in zth.iter().zip(&d.types[0].z) {
            assert_eq!(*a, 0.5 * b);
        }
    }
}
