//! Engine for designing and analyzing time-sequential clinical trials with
//! survival endpoints.
//!
//! The crate is organized around five subsystems:
//!
//! - [`survival_core`]: staggered-entry survival data, calendar-time snapshots,
//!   and the nonparametric estimators (pooled product-limit, Kaplan-Meier,
//!   Breslow) everything else consumes.
//! - [`rank_stats`]: time-sequential censored rank statistics, their variance
//!   estimates, the Cox score/information, and asymptotic moment integrals.
//! - [`boundary_engine`]: group-sequential stopping boundaries via recursive
//!   numerical integration of discretely monitored Brownian motion, error
//!   spending, and modified Haybittle-Peto thresholds.
//! - [`trial_sim`]: scenario-driven Monte Carlo estimation of operating
//!   characteristics (Type I error, power, expected duration) and sample size.
//! - [`resample`]: importance resampling for bootstrap tail probabilities and
//!   hybrid-resampling confidence intervals for the Cox regression parameter.
//!
//! [`repro`] holds the tabular study harnesses driven by the `reproduce` CLI
//! subcommand.

// Negated float comparisons like `!(v > 0.0)` are deliberate: they reject
// NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary_engine;
pub mod numeric;
pub mod rank_stats;
pub mod repro;
pub mod resample;
pub mod survival_core;
pub mod trial_sim;

mod error;

pub use error::{Error, Result};
