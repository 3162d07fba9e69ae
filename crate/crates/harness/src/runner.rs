//! Monte Carlo execution: schedule trials over a worker pool, reduce their
//! traces deterministically, and persist the results.
//!
//! Trials are independent and self-seeded, so they may run on any thread in
//! any order; determinism comes from reducing them strictly in trial-index
//! order on the coordinating thread. Runs are processed in bounded chunks to
//! cap peak memory at a handful of trials regardless of the trial count.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::metrics;
use crate::scenario::EstimatorTrial;
use crate::seed::trial_seed;

/// Trials whose raw error traces are written to `errors.csv`. Keeping the
/// full per-trial traces for every trial would dwarf the statistics the run
/// is actually after; the first few trials are enough for envelope plots.
pub const RETAINED_TRIALS: usize = 10;

/// Two-sided NEES acceptance probability.
pub const NEES_COVERAGE: f64 = 0.95;

/// Errors that abort a whole run (as opposed to flagging one trial).
#[derive(Debug)]
pub enum RunError {
    /// The worker pool could not be constructed.
    Pool(String),
    /// Writing results failed.
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Pool(e) => write!(f, "worker pool: {e}"),
            RunError::Io(e) => write!(f, "writing results: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Raw error/sigma traces of one retained trial.
pub struct RetainedTrial {
    /// Global trial index (also the `trial` column in `errors.csv`).
    pub index: usize,
    /// `steps × dim` error components.
    pub errors: Vec<f64>,
    /// `steps × dim` reported standard deviations.
    pub sigmas: Vec<f64>,
}

/// Cross-trial aggregate for one estimator.
pub struct EstimatorSummary {
    pub name: &'static str,
    pub dim: usize,
    /// Per-step NEES averaged over trials.
    pub nees_mean: Vec<f64>,
    pub nees_lower: f64,
    pub nees_upper: f64,
    /// Per-step KL divergence of the empirical error distribution from the
    /// reported belief.
    pub kl: Vec<f64>,
    /// Per-step mean deflation rounds.
    pub deflation_mean: Vec<f64>,
    /// RMS of full error-vector norms over all trials and steps.
    pub rmse: f64,
    /// RMS over the leading position components (the full vector for scalar
    /// states).
    pub pos_rmse: f64,
    /// RMS of the side-channel attitude error, for estimators that carry one.
    pub att_rmse: Option<f64>,
    /// Fraction of (trial, step, component) errors within the reported 3σ.
    pub coverage: f64,
    pub retained: Vec<RetainedTrial>,
}

impl EstimatorSummary {
    /// Fraction of steps whose mean NEES lies inside the acceptance bounds.
    pub fn nees_within_fraction(&self) -> f64 {
        if self.nees_mean.is_empty() {
            return f64::NAN;
        }
        let inside = self
            .nees_mean
            .iter()
            .filter(|&&v| v >= self.nees_lower && v <= self.nees_upper)
            .count();
        inside as f64 / self.nees_mean.len() as f64
    }

    /// Mean of the finite per-step KL values.
    pub fn mean_kl(&self) -> f64 {
        let finite: Vec<f64> = self.kl.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return f64::NAN;
        }
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// Everything a Monte Carlo run produces, ready for persistence or
/// programmatic checks.
pub struct RunOutcome {
    pub scenario: &'static str,
    pub steps: usize,
    pub trials_requested: usize,
    pub trials_used: usize,
    pub flagged: Vec<usize>,
    pub estimators: Vec<EstimatorSummary>,
}

impl RunOutcome {
    /// Summary for a named estimator.
    pub fn estimator(&self, name: &str) -> &EstimatorSummary {
        self.estimators
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("unknown estimator {name}"))
    }

    /// Whether the flagged-trial fraction exceeds the run-failure threshold.
    pub fn failure_threshold_exceeded(&self) -> bool {
        self.flagged.len() as f64 > 0.01 * self.trials_requested as f64
    }
}

/// Streaming accumulator for one estimator.
struct Accum {
    name: &'static str,
    dim: usize,
    steps: usize,
    trials: usize,
    nees_sum: Vec<f64>,
    err_sum: Vec<f64>,
    err_outer_sum: Vec<f64>,
    cov_sum: Vec<f64>,
    defl_sum: Vec<u64>,
    sq_norm_sum: f64,
    pos_sq_sum: f64,
    norm_count: usize,
    att_sq_sum: f64,
    att_count: usize,
    hits: u64,
    components: u64,
    retained: Vec<RetainedTrial>,
}

impl Accum {
    fn new(name: &'static str, dim: usize, steps: usize) -> Self {
        Self {
            name,
            dim,
            steps,
            trials: 0,
            nees_sum: vec![0.0; steps],
            err_sum: vec![0.0; steps * dim],
            err_outer_sum: vec![0.0; steps * dim * dim],
            cov_sum: vec![0.0; steps * dim * dim],
            defl_sum: vec![0; steps],
            sq_norm_sum: 0.0,
            pos_sq_sum: 0.0,
            norm_count: 0,
            att_sq_sum: 0.0,
            att_count: 0,
            hits: 0,
            components: 0,
            retained: Vec::new(),
        }
    }

    fn absorb(&mut self, trial_index: usize, trial: &EstimatorTrial) {
        debug_assert_eq!(trial.dim, self.dim);
        debug_assert_eq!(trial.steps, self.steps);
        let n = self.dim;
        let nn = n * n;
        let pos_dims = n.min(3);
        let mut sigmas = if self.retained.len() < RETAINED_TRIALS {
            Some(vec![0.0; self.steps * n])
        } else {
            None
        };

        for s in 0..self.steps {
            let e = trial.error_at(s);
            let p = trial.cov_at(s);
            self.nees_sum[s] += trial.nees[s];
            self.defl_sum[s] += trial.deflations[s];
            let base = s * n;
            let base2 = s * nn;
            let mut norm_sq = 0.0;
            let mut pos_sq = 0.0;
            for i in 0..n {
                let ei = e[i];
                self.err_sum[base + i] += ei;
                norm_sq += ei * ei;
                if i < pos_dims {
                    pos_sq += ei * ei;
                }
                // Column-major like the stored covariance slice.
                for j in 0..n {
                    self.err_outer_sum[base2 + j * n + i] += ei * e[j];
                }
                let var = p[i * n + i];
                if metrics::within_3sigma(ei, var) {
                    self.hits += 1;
                }
                self.components += 1;
                if let Some(sig) = sigmas.as_mut() {
                    sig[base + i] = var.max(0.0).sqrt();
                }
            }
            for q in 0..nn {
                self.cov_sum[base2 + q] += p[q];
            }
            self.sq_norm_sum += norm_sq;
            self.pos_sq_sum += pos_sq;
            self.norm_count += 1;
        }

        if let Some(att) = trial.att_err_sq.as_ref() {
            for &sq in att {
                self.att_sq_sum += sq;
                self.att_count += 1;
            }
        }
        if let Some(sigmas) = sigmas {
            self.retained.push(RetainedTrial {
                index: trial_index,
                errors: trial.errors.clone(),
                sigmas,
            });
        }
        self.trials += 1;
    }

    fn finish(self) -> EstimatorSummary {
        let n = self.dim;
        let nn = n * n;
        let trials = self.trials.max(1) as f64;
        let mut nees_mean = Vec::with_capacity(self.steps);
        let mut kl = Vec::with_capacity(self.steps);
        let mut deflation_mean = Vec::with_capacity(self.steps);
        for s in 0..self.steps {
            nees_mean.push(self.nees_sum[s] / trials);
            deflation_mean.push(self.defl_sum[s] as f64 / trials);

            let mean = DVector::from_fn(n, |i, _| self.err_sum[s * n + i] / trials);
            let mut emp = DMatrix::zeros(n, n);
            let mut rep = DMatrix::zeros(n, n);
            for j in 0..n {
                for i in 0..n {
                    let second = self.err_outer_sum[s * nn + j * n + i] / trials;
                    emp[(i, j)] = second - mean[i] * mean[j];
                    rep[(i, j)] = self.cov_sum[s * nn + j * n + i] / trials;
                }
            }
            kl.push(metrics::empirical_kl(&mean, &emp, &rep));
        }

        let (nees_lower, nees_upper) = metrics::nees_bounds(self.trials.max(1), n, NEES_COVERAGE);
        EstimatorSummary {
            name: self.name,
            dim: n,
            nees_mean,
            nees_lower,
            nees_upper,
            kl,
            deflation_mean,
            rmse: metrics::rmse_from_accum(self.sq_norm_sum, self.norm_count),
            pos_rmse: metrics::rmse_from_accum(self.pos_sq_sum, self.norm_count),
            att_rmse: (self.att_count > 0)
                .then(|| metrics::rmse_from_accum(self.att_sq_sum, self.att_count)),
            coverage: if self.components == 0 {
                f64::NAN
            } else {
                self.hits as f64 / self.components as f64
            },
            retained: self.retained,
        }
    }
}

/// Runs `trials` self-seeded trials of `simulate` over a pool of `workers`
/// threads (`0` = library default) and reduces them in index order.
///
/// `dims` gives the error dimension per estimator (same order as the trial
/// output); `chunk` bounds how many trial traces are alive at once.
pub fn run_scenario<F>(
    scenario: &'static str,
    trials: usize,
    steps: usize,
    names: &[&'static str],
    dims: &[usize],
    master_seed: u64,
    workers: usize,
    chunk: usize,
    simulate: F,
) -> Result<RunOutcome, RunError>
where
    F: Fn(u64) -> cascade_core::Result<Vec<EstimatorTrial>> + Sync,
{
    assert_eq!(names.len(), dims.len());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;

    let mut accums: Vec<Accum> = names
        .iter()
        .zip(dims)
        .map(|(name, &dim)| Accum::new(name, dim, steps))
        .collect();
    let mut flagged = Vec::new();

    let indices: Vec<usize> = (0..trials).collect();
    for chunk_indices in indices.chunks(chunk.max(1)) {
        // Parallel map preserves input order in the collected vector, so the
        // sequential reduction below is independent of scheduling.
        let results: Vec<(usize, cascade_core::Result<Vec<EstimatorTrial>>)> = pool.install(|| {
            use rayon::prelude::*;
            chunk_indices
                .par_iter()
                .map(|&i| (i, simulate(trial_seed(master_seed, i as u64))))
                .collect()
        });
        for (i, result) in results {
            match result {
                Ok(trial) => {
                    for (accum, est) in accums.iter_mut().zip(&trial) {
                        accum.absorb(i, est);
                    }
                }
                Err(_) => flagged.push(i),
            }
        }
    }

    let trials_used = trials - flagged.len();
    Ok(RunOutcome {
        scenario,
        steps,
        trials_requested: trials,
        trials_used,
        flagged,
        estimators: accums.into_iter().map(Accum::finish).collect(),
    })
}

#[derive(Serialize)]
struct EstimatorJson {
    dim: usize,
    rmse: f64,
    pos_rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    att_rmse: Option<f64>,
    coverage_3sigma: f64,
    nees_lower: f64,
    nees_upper: f64,
    nees_within_fraction: f64,
    mean_kl: f64,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    scenario: &'a str,
    build: &'a str,
    trials_requested: usize,
    trials_used: usize,
    flagged_trials: usize,
    flagged_indices: &'a [usize],
    steps: usize,
    attitude_error_metric: &'a str,
    config: &'a serde_json::Value,
    estimators: BTreeMap<&'a str, EstimatorJson>,
}

/// Writes `nees.csv`, `errors.csv`, `kl.csv`, and `deflations.csv` per
/// estimator plus a top-level `summary.json` under `out_dir`.
pub fn write_outputs(
    outcome: &RunOutcome,
    out_dir: &Path,
    config: &serde_json::Value,
) -> Result<(), RunError> {
    fs::create_dir_all(out_dir)?;
    for est in &outcome.estimators {
        let dir = out_dir.join(est.name);
        fs::create_dir_all(&dir)?;

        let mut nees = csv::Writer::from_path(dir.join("nees.csv")).map_err(csv_io)?;
        nees.write_record(["step", "epsilon_bar", "lower", "upper"])
            .map_err(csv_io)?;
        for (s, eps) in est.nees_mean.iter().enumerate() {
            nees.write_record([
                (s + 1).to_string(),
                eps.to_string(),
                est.nees_lower.to_string(),
                est.nees_upper.to_string(),
            ])
            .map_err(csv_io)?;
        }
        nees.flush()?;

        let mut errors = csv::Writer::from_path(dir.join("errors.csv")).map_err(csv_io)?;
        errors
            .write_record(["trial", "step", "component", "error", "sigma"])
            .map_err(csv_io)?;
        for trial in &est.retained {
            for s in 0..outcome.steps {
                for c in 0..est.dim {
                    let at = s * est.dim + c;
                    errors
                        .write_record([
                            trial.index.to_string(),
                            (s + 1).to_string(),
                            c.to_string(),
                            trial.errors[at].to_string(),
                            trial.sigmas[at].to_string(),
                        ])
                        .map_err(csv_io)?;
                }
            }
        }
        errors.flush()?;

        let mut kl = csv::Writer::from_path(dir.join("kl.csv")).map_err(csv_io)?;
        kl.write_record(["step", "kl"]).map_err(csv_io)?;
        for (s, v) in est.kl.iter().enumerate() {
            kl.write_record([(s + 1).to_string(), v.to_string()])
                .map_err(csv_io)?;
        }
        kl.flush()?;

        let mut defl = csv::Writer::from_path(dir.join("deflations.csv")).map_err(csv_io)?;
        defl.write_record(["step", "mean_rounds"]).map_err(csv_io)?;
        for (s, v) in est.deflation_mean.iter().enumerate() {
            defl.write_record([(s + 1).to_string(), v.to_string()])
                .map_err(csv_io)?;
        }
        defl.flush()?;
    }

    let estimators: BTreeMap<&str, EstimatorJson> = outcome
        .estimators
        .iter()
        .map(|e| {
            (
                e.name,
                EstimatorJson {
                    dim: e.dim,
                    rmse: e.rmse,
                    pos_rmse: e.pos_rmse,
                    att_rmse: e.att_rmse,
                    coverage_3sigma: e.coverage,
                    nees_lower: e.nees_lower,
                    nees_upper: e.nees_upper,
                    nees_within_fraction: e.nees_within_fraction(),
                    mean_kl: e.mean_kl(),
                },
            )
        })
        .collect();
    let summary = SummaryJson {
        scenario: outcome.scenario,
        build: env!("BUILD_DESCRIBE"),
        trials_requested: outcome.trials_requested,
        trials_used: outcome.trials_used,
        flagged_trials: outcome.flagged.len(),
        flagged_indices: &outcome.flagged,
        steps: outcome.steps,
        attitude_error_metric: "geodesic tangent norm (rad)",
        config,
        estimators,
    };
    let mut file = fs::File::create(out_dir.join("summary.json"))?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

fn csv_io(e: csv::Error) -> RunError {
    RunError::Io(std::io::Error::other(e))
}

/// Runs the linear toy scenario.
pub fn run_linear(
    cfg: &crate::config::LinearToyConfig,
    master_seed: u64,
    workers: usize,
) -> Result<RunOutcome, RunError> {
    let names = crate::scenario::LINEAR_ESTIMATORS;
    run_scenario(
        "linear",
        cfg.trials,
        cfg.steps,
        &names,
        &[1; 5],
        master_seed,
        workers,
        64,
        |seed| crate::scenario::linear::simulate_trial(cfg, seed),
    )
}

/// Runs the nonlinear scenario.
pub fn run_nonlinear(
    cfg: &crate::config::NonlinearConfig,
    master_seed: u64,
    workers: usize,
) -> Result<RunOutcome, RunError> {
    let names = crate::scenario::NONLINEAR_ESTIMATORS;
    let steps = cfg.ticks();
    run_scenario(
        "nonlinear",
        cfg.trials,
        steps,
        &names,
        &[6, 6, 6, 6, 6, 3],
        master_seed,
        workers,
        8,
        |seed| crate::scenario::nonlinear::simulate_trial(cfg, seed),
    )
}
