//! Monte Carlo harness for the cascaded filtering library: scenario
//! simulators, consistency metrics, deterministic parallel execution, result
//! persistence, and log replay.
//!
//! Layout:
//!
//! - [`config`] — run parameters with JSON file loading and validation.
//! - [`seed`] — master-seed to per-trial seed derivation.
//! - [`metrics`] — NEES with chi-square bounds, RMSE, 3σ coverage, KL.
//! - [`scenario`] — the linear toy and nonlinear strapdown trial simulators.
//! - [`runner`] — worker-pool execution, order-deterministic reduction, CSV
//!   and JSON outputs.
//! - [`replay`] — runs the filters over recorded IMU/position logs.
//! - [`report`] — renders a finished run as a text table.

pub mod config;
pub mod metrics;
pub mod replay;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod seed;
