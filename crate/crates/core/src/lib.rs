//! Label-free diagnostics for scoring classifiers and the experiment-design
//! arithmetic that goes with shipping them.
//!
//! - [`rdc`]: response distribution charts, mode/valley detection, pathology
//!   classification and threshold bands.
//! - [`construction`]: class balance, learnability gap and the
//!   labeled-vs-unlabeled selection-bias probe.
//! - [`experiments`]: disagreement between correlated models, the
//!   impacted-traffic bound, sample sizing and a disagreement-routed A/B
//!   simulator.
//! - [`blocked`]: the base / compute-only / compute+expose blocked experiment.
//! - [`monitor`]: windowed RDC monitoring, drift alerts and output overrides.
//! - [`synth`]: seeded score generators for each chart shape.
//! - [`cli`]: the `scorescope` command line.

#![forbid(unsafe_code)]

pub mod blocked;
pub mod cli;
pub mod construction;
pub mod error;
pub mod experiments;
pub mod ingest;
pub mod monitor;
pub mod rdc;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
