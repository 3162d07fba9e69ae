//! Monte Carlo trial simulators.
//!
//! Each scenario module owns a single-trial function that generates truth and
//! sensor data from one RNG seed, runs every estimator on the *same* data,
//! and returns per-step traces ready for cross-trial aggregation. Everything
//! a trial does is a pure function of its seed, which is what makes the
//! output byte-stable under any parallel schedule.

pub mod linear;
pub mod nonlinear;

use cascade_core::Result;
use nalgebra::{DMatrix, DVector};

use crate::metrics;

/// Estimator order used by the linear toy scenario and its output files.
pub const LINEAR_ESTIMATORS: [&str; 5] = ["full", "proposed-sp", "proposed-lin", "naive", "spci"];

/// Estimator order used by the nonlinear scenario and its output files.
///
/// `ahrs` is the feeding attitude filter itself; its "error" is the attitude
/// error so its RMSE column doubles as the attitude accuracy of the cascade.
pub const NONLINEAR_ESTIMATORS: [&str; 6] = [
    "full",
    "proposed-sp",
    "proposed-lin",
    "naive",
    "spci",
    "ahrs",
];

/// Per-step traces of one estimator over one trial.
///
/// Flat row-major buffers keep a trial's footprint small and cheap to fold
/// into the cross-trial accumulators.
pub struct EstimatorTrial {
    /// Estimator name; matches the output directory it is written to.
    pub name: &'static str,
    /// Error-state dimension.
    pub dim: usize,
    /// Number of recorded steps.
    pub steps: usize,
    /// `steps × dim`: truth minus estimate at each step.
    pub errors: Vec<f64>,
    /// `steps × dim × dim`: reported covariance at each step.
    pub covs: Vec<f64>,
    /// `steps`: normalized estimation error squared at each step.
    pub nees: Vec<f64>,
    /// `steps`: cross-covariance deflation rounds spent at each step.
    pub deflations: Vec<u64>,
    /// `steps`: squared attitude-error norms, for estimators that carry an
    /// attitude estimate on the side of their tabulated error state.
    pub att_err_sq: Option<Vec<f64>>,
}

impl EstimatorTrial {
    /// Creates an empty trace for `steps` steps of a `dim`-dimensional error.
    pub fn new(name: &'static str, dim: usize, steps: usize) -> Self {
        Self {
            name,
            dim,
            steps,
            errors: vec![0.0; steps * dim],
            covs: vec![0.0; steps * dim * dim],
            nees: vec![0.0; steps],
            deflations: vec![0; steps],
            att_err_sq: None,
        }
    }

    /// Records one step: the error vector, the covariance the estimator
    /// reported for it, and how many deflation rounds the step consumed.
    pub fn record(
        &mut self,
        step: usize,
        error: &DVector<f64>,
        cov: &DMatrix<f64>,
        deflations: u64,
    ) -> Result<()> {
        debug_assert!(step < self.steps);
        debug_assert_eq!(error.len(), self.dim);
        let n = self.dim;
        self.errors[step * n..(step + 1) * n].copy_from_slice(error.as_slice());
        self.covs[step * n * n..(step + 1) * n * n].copy_from_slice(cov.as_slice());
        self.nees[step] = metrics::nees(error, cov)?;
        self.deflations[step] = deflations;
        Ok(())
    }

    /// Records a squared attitude-error norm alongside the tabulated state.
    pub fn record_att_err_sq(&mut self, step: usize, err_sq: f64) {
        self.att_err_sq
            .get_or_insert_with(|| vec![0.0; self.steps])[step] = err_sq;
    }

    /// Error vector at `step` as a view.
    pub fn error_at(&self, step: usize) -> &[f64] {
        &self.errors[step * self.dim..(step + 1) * self.dim]
    }

    /// Covariance at `step` as a view (column-major `dim × dim`).
    pub fn cov_at(&self, step: usize) -> &[f64] {
        let nn = self.dim * self.dim;
        &self.covs[step * nn..(step + 1) * nn]
    }
}
