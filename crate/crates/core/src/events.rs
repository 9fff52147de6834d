//! Marked event streams: the in-memory representation shared by the
//! simulator, the estimators and the file formats.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One timestamped marked event. `label` is the ground-truth source when
/// known (0 = spurious/noise, 1 = structured); `gen` the generation depth of
/// simulated events (0 = immigrant), kept for diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedEvent {
    pub t: f64,
    pub mark: f64,
    pub label: Option<u8>,
    pub gen: Option<u32>,
}

impl MarkedEvent {
    pub fn new(t: f64, mark: f64) -> Self {
        Self { t, mark, label: None, gen: None }
    }
}

/// Per-type, time-sorted event lists over the observation window `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub events: Vec<Vec<MarkedEvent>>,
    pub t_horizon: f64,
}

impl EventSequence {
    /// Build from raw per-type lists: sorts each list, and bumps exact
    /// timestamp ties by 1e-9 s so ordering is strict (ties keep insertion
    /// order first).
    pub fn from_raw(mut events: Vec<Vec<MarkedEvent>>, t_horizon: f64) -> Result<Self> {
        if !(t_horizon > 0.0) {
            return Err(Error::Config(format!("horizon T = {t_horizon} must be > 0")));
        }
        for list in &mut events {
            if list.iter().any(|e| !e.t.is_finite() || e.t < 0.0) {
                return Err(Error::Data("event times must be finite and nonnegative".into()));
            }
            list.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
            for i in 1..list.len() {
                if list[i].t <= list[i - 1].t {
                    list[i].t = list[i - 1].t + 1e-9;
                }
            }
        }
        Ok(Self { events, t_horizon })
    }

    pub fn n_types(&self) -> usize {
        self.events.len()
    }

    pub fn total_events(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_events() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_raw_sorts_and_breaks_ties() {
        let evs = vec![vec![
            MarkedEvent::new(2.0, 0.1),
            MarkedEvent::new(1.0, 0.2),
            MarkedEvent::new(1.0, 0.3),
        ]];
        let seq = EventSequence::from_raw(evs, 10.0).unwrap();
        let ts: Vec<f64> = seq.events[0].iter().map(|e| e.t).collect();
        assert!(ts[0] < ts[1] && ts[1] < ts[2]);
        assert_eq!(seq.events[0][0].mark, 0.2); // insertion order kept for the tie
        assert!((ts[1] - 1.0 - 1e-9).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_times_and_horizon() {
        assert!(EventSequence::from_raw(vec![vec![MarkedEvent::new(-1.0, 0.5)]], 10.0).is_err());
        assert!(EventSequence::from_raw(vec![vec![]], 0.0).is_err());
    }
}
