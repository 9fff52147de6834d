//! Joint inference of marked Hawkes process parameters and per-event
//! noise/structure labels from event streams polluted by spurious
//! detections.
//!
//! The pipeline: simulate or load a marked event stream, project it on a
//! regular grid, fit the mixture with the alternating solver, and score the
//! result (label precision/recall, parameter error, test NLL).

pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod events;
pub mod experiments;
pub mod grid;
pub mod init;
pub mod io;
pub mod kernel;
pub mod mark;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
