//! Run configuration: serde-backed, JSON on disk, strict about unknown keys
//! so typos fail loudly instead of silently running defaults.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

fn default_trials_linear() -> usize {
    1000
}
fn default_steps() -> usize {
    1000
}
fn default_one() -> f64 {
    1.0
}
fn default_q2() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.9
}
fn default_spci_w() -> f64 {
    0.99
}

/// Scalar two-filter toy scenario: receiving `x¹ₖ = x¹ₖ₋₁ − x²ₖ₋₁ + w¹`,
/// feeding random walk, measurements `y¹ = x¹ + x² + ν¹`, `y² = x² + ν²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearToyConfig {
    pub trials: usize,
    pub steps: usize,
    /// Receiving process-noise variance.
    pub q1: f64,
    /// Feeding process-noise variance; together with `r2` it sets how long
    /// the feeding filter's error (and thus the cross-correlation) persists —
    /// the feeding gain is roughly `sqrt(q2/r2)`, so the defaults give a
    /// memory of a few dozen steps.
    pub q2: f64,
    /// Receiving measurement-noise variance; large enough that the receiving
    /// filter leans on the feeding estimate instead of correcting every
    /// contamination away within a step.
    pub r1: f64,
    /// Feeding measurement-noise variance.
    pub r2: f64,
    pub init_mean1: f64,
    pub init_mean2: f64,
    pub init_var1: f64,
    pub init_var2: f64,
    /// Cross-block deflation factor for the cascaded estimators.
    pub beta: f64,
    /// Intersection weight for the covariance-intersection estimator.
    pub spci_w: f64,
}

impl Default for LinearToyConfig {
    fn default() -> Self {
        Self {
            trials: default_trials_linear(),
            steps: default_steps(),
            q1: default_one(),
            q2: default_q2(),
            r1: 3.0,
            r2: 100.0,
            init_mean1: 0.0,
            init_mean2: 0.0,
            init_var1: 1.0,
            init_var2: 1.0,
            beta: default_beta(),
            spci_w: default_spci_w(),
        }
    }
}

/// Strapdown scenario: a body flies a smooth sinusoidal trajectory; an
/// attitude filter feeds a position/velocity filter that fuses IMU
/// propagation with position fixes through a lever arm.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearConfig {
    pub trials: usize,
    /// Simulation length in seconds.
    pub duration_s: f64,
    /// IMU (gyro/accel/mag) rate in Hz.
    pub imu_hz: f64,
    /// Position fixes arrive every this many IMU ticks.
    pub pos_every_ticks: usize,
    /// Per-sample sensor noise standard deviations.
    pub gyro_std: f64,
    pub accel_std: f64,
    pub mag_std: f64,
    pub pos_std: f64,
    /// Initial estimate error standard deviations.
    pub init_pos_std: f64,
    pub init_vel_std: f64,
    pub init_att_std: f64,
    /// Body-frame antenna offset.
    pub lever_arm: [f64; 3],
    pub gravity: [f64; 3],
    /// World-frame magnetic reference field.
    pub mag_ref: [f64; 3],
    /// Trajectory: per-axis position amplitudes (m) and frequencies (Hz),
    /// angular-rate amplitude (rad/s) and frequencies (Hz). Phases are
    /// randomized per trial.
    pub traj_amp: [f64; 3],
    pub traj_freq_hz: [f64; 3],
    pub omega_amp: f64,
    pub omega_freq_hz: [f64; 3],
    /// Attitude-filter accelerometer aiding: noise inflation and the
    /// acceptance gate half-width around the gravity norm (m/s²).
    pub accel_noise_scale: f64,
    pub accel_gate: f64,
    /// Attitude-filter process-noise floor (rad/√s) absorbing the slowly
    /// varying trajectory acceleration that leaks through the aiding gate.
    pub att_process_std: f64,
    /// When true the attitude filter publishes its exact error-transition
    /// factor; otherwise the cascade falls back to the identity stand-in.
    pub cooperation: bool,
    pub beta: f64,
    pub spci_w: f64,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            duration_s: 60.0,
            imu_hz: 100.0,
            pos_every_ticks: 2,
            gyro_std: 0.0032,
            accel_std: 0.10,
            mag_std: 2.0,
            pos_std: 0.22,
            init_pos_std: 0.45,
            init_vel_std: 0.45,
            init_att_std: 0.22,
            lever_arm: [1.5, 0.0, 0.0],
            gravity: [0.0, 0.0, -9.81],
            mag_ref: [25.0, 0.0, -43.301_270_189_221_93],
            traj_amp: [2.5, 2.0, 1.0],
            traj_freq_hz: [0.07, 0.085, 0.11],
            omega_amp: 1.2,
            omega_freq_hz: [0.17, 0.23, 0.11],
            accel_noise_scale: 25.0,
            accel_gate: 0.5,
            att_process_std: 0.015,
            cooperation: true,
            beta: default_beta(),
            spci_w: default_spci_w(),
        }
    }
}

impl LinearToyConfig {
    /// Rejects parameter values the estimators cannot run with.
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.trials > 0, "trials must be positive")?;
        ensure(self.steps > 0, "steps must be positive")?;
        for (name, v) in [
            ("q1", self.q1),
            ("q2", self.q2),
            ("r1", self.r1),
            ("r2", self.r2),
        ] {
            ensure(v > 0.0, &format!("{name} must be a positive variance"))?;
        }
        ensure(self.init_var1 > 0.0, "init_var1 must be positive")?;
        ensure(self.init_var2 > 0.0, "init_var2 must be positive")?;
        ensure(
            self.beta > 0.0 && self.beta <= 1.0,
            "beta must lie in (0, 1]",
        )?;
        ensure(
            self.spci_w > 0.0 && self.spci_w < 1.0,
            "spci_w must lie strictly inside (0, 1)",
        )
    }
}

impl NonlinearConfig {
    /// Rejects parameter values the estimators cannot run with.
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.trials > 0, "trials must be positive")?;
        ensure(self.duration_s > 0.0, "duration_s must be positive")?;
        ensure(self.imu_hz > 0.0, "imu_hz must be positive")?;
        ensure(
            self.pos_every_ticks > 0,
            "pos_every_ticks must be positive",
        )?;
        for (name, v) in [
            ("gyro_std", self.gyro_std),
            ("accel_std", self.accel_std),
            ("mag_std", self.mag_std),
            ("pos_std", self.pos_std),
            ("init_pos_std", self.init_pos_std),
            ("init_vel_std", self.init_vel_std),
            ("init_att_std", self.init_att_std),
        ] {
            ensure(v > 0.0, &format!("{name} must be positive"))?;
        }
        ensure(
            self.accel_noise_scale >= 1.0,
            "accel_noise_scale must be at least 1",
        )?;
        ensure(self.accel_gate >= 0.0, "accel_gate must be non-negative")?;
        ensure(
            self.att_process_std >= 0.0,
            "att_process_std must be non-negative",
        )?;
        ensure(
            self.beta > 0.0 && self.beta <= 1.0,
            "beta must lie in (0, 1]",
        )?;
        ensure(
            self.spci_w > 0.0 && self.spci_w < 1.0,
            "spci_w must lie strictly inside (0, 1)",
        )
    }

    /// Number of IMU ticks in one trial.
    pub fn ticks(&self) -> usize {
        (self.duration_s * self.imu_hz).round() as usize
    }
}

/// On-disk configuration: one block per scenario, each fully optional and
/// falling back to the shipped defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub linear: LinearToyConfig,
    pub nonlinear: NonlinearConfig,
}

impl FileConfig {
    /// Reads and validates a JSON config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let cfg: FileConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.linear.validate()?;
        cfg.nonlinear.validate()?;
        Ok(cfg)
    }
}

/// A configuration problem: unreadable file, malformed JSON, unknown key, or
/// an out-of-range value.
#[derive(Debug, Clone)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn ensure(ok: bool, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError(msg.to_string()))
    }
}
