//! Cognitive bias measurement and regulation for language-model agents.
//!
//! The crate is organised around the measurement loop:
//!
//! * [`testbed`] holds the classic social-experiment paradigms, their scenario
//!   templates and placeholder bindings, and option-order randomization.
//! * [`cbi`] turns per-variant option distributions into a Cognitive Bias
//!   Index (CBI) on the 0–4 scale.
//! * [`backend`] is the uniform agent interface (mock oracle, scripted agent,
//!   OpenAI-compatible chat client, steering sidecar client).
//! * [`regulation`] applies control methods and runs sweeps and closed-loop
//!   calibration toward a target CBI.
//! * [`metrics`] scores control curves (monotonicity, smoothness,
//!   expressiveness) and cross-paradigm / cross-model reproducibility.
//! * [`contagion`] runs the emotional-contagion dose–response experiment.
//! * [`report`] covers experiment configs, persisted run records, CSV export
//!   and plots.

pub mod backend;
pub mod cbi;
pub mod contagion;
mod error;
mod exec;
pub mod metrics;
pub mod regulation;
pub mod report;
pub mod seed;
pub mod testbed;

pub use error::{Error, EXIT_BACKEND, EXIT_NON_CONVERGENCE, EXIT_OK, EXIT_VALIDATION};
