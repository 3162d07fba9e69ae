//! Replays recorded IMU/position logs through the attitude filter and the
//! cascaded position/velocity filter.
//!
//! Inputs are plain CSVs: IMU rows `t,gx,gy,gz,ax,ay,az,mx,my,mz` (SI units,
//! seconds) and position rows `t,px,py,pz` (meters), both strictly increasing
//! in time. Noise levels and geometry come from the nonlinear scenario
//! configuration, since a log carries no covariances of its own.

use std::fmt;
use std::path::Path;

use cascade_core::filters::{
    apply_psi, cascade_correct, cascade_predict, Ahrs, AhrsParams, CascadeBelief, CorrectionGain,
};
use cascade_core::gaussian::Gaussian;
use cascade_core::so3::Rotation3;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::config::NonlinearConfig;

/// One IMU record: gyro (rad/s), specific force (m/s²), magnetometer (same
/// units as the configured reference field).
#[derive(Debug, Clone, Copy)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub mag: Vector3<f64>,
}

/// One position-fix record (antenna position, meters).
#[derive(Debug, Clone, Copy)]
pub struct UwbSample {
    pub t: f64,
    pub pos: Vector3<f64>,
}

/// Problems in replay inputs or processing.
#[derive(Debug)]
pub enum ReplayError {
    Read(String),
    Format { line: usize, message: String },
    NonMonotonic { line: usize, t: f64 },
    Empty(&'static str),
    Filter(cascade_core::Error),
    Write(std::io::Error),
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayError::Read(e) => write!(f, "reading log: {e}"),
            ReplayError::Format { line, message } => {
                write!(f, "log line {line}: {message}")
            }
            ReplayError::NonMonotonic { line, t } => {
                write!(f, "log line {line}: timestamp {t} does not increase")
            }
            ReplayError::Empty(which) => write!(f, "{which} log contains no samples"),
            ReplayError::Filter(e) => write!(f, "filter diverged during replay: {e}"),
            ReplayError::Write(e) => write!(f, "writing estimates: {e}"),
        }
    }
}

impl std::error::Error for ReplayError {}

impl From<cascade_core::Error> for ReplayError {
    fn from(e: cascade_core::Error) -> Self {
        ReplayError::Filter(e)
    }
}

impl From<std::io::Error> for ReplayError {
    fn from(e: std::io::Error) -> Self {
        ReplayError::Write(e)
    }
}

fn parse_row(record: &csv::StringRecord, line: usize, want: usize) -> Result<Vec<f64>, ReplayError> {
    if record.len() != want {
        return Err(ReplayError::Format {
            line,
            message: format!("expected {want} columns, found {}", record.len()),
        });
    }
    record
        .iter()
        .map(|field| {
            field.trim().parse::<f64>().map_err(|_| ReplayError::Format {
                line,
                message: format!("not a number: {field:?}"),
            })
        })
        .collect()
}

fn read_rows(path: &Path, want: usize) -> Result<Vec<Vec<f64>>, ReplayError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        // Report wrong column counts ourselves, with a line number.
        .flexible(true)
        .from_path(path)
        .map_err(|e| ReplayError::Read(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    // Header occupies line 1.
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| ReplayError::Read(e.to_string()))?;
        let row = parse_row(&record, line, want)?;
        if row[0] <= last_t {
            return Err(ReplayError::NonMonotonic { line, t: row[0] });
        }
        last_t = row[0];
        rows.push(row);
    }
    Ok(rows)
}

/// Reads an IMU log (`t,gx,gy,gz,ax,ay,az,mx,my,mz`).
pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>, ReplayError> {
    let rows = read_rows(path, 10)?;
    Ok(rows
        .into_iter()
        .map(|r| ImuSample {
            t: r[0],
            gyro: Vector3::new(r[1], r[2], r[3]),
            accel: Vector3::new(r[4], r[5], r[6]),
            mag: Vector3::new(r[7], r[8], r[9]),
        })
        .collect())
}

/// Reads a position-fix log (`t,px,py,pz`).
pub fn read_uwb_csv(path: &Path) -> Result<Vec<UwbSample>, ReplayError> {
    let rows = read_rows(path, 4)?;
    Ok(rows
        .into_iter()
        .map(|r| UwbSample {
            t: r[0],
            pos: Vector3::new(r[1], r[2], r[3]),
        })
        .collect())
}

/// Counts of what a replay consumed and produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayStats {
    pub imu_samples: usize,
    pub position_fixes: usize,
    pub deflations: usize,
}

/// Runs the attitude filter and the sigma-point cascade over the logs,
/// writing per-sample attitude estimates to `ahrs_out` and, when given,
/// fused position/velocity estimates to `fused_out`.
///
/// The attitude starts at identity with the configured initial uncertainty;
/// position starts at the first fix (or the origin when no fix precedes the
/// second IMU sample) and velocity at zero.
pub fn replay(
    imu: &[ImuSample],
    uwb: &[UwbSample],
    cfg: &NonlinearConfig,
    ahrs_out: &Path,
    fused_out: Option<&Path>,
) -> Result<ReplayStats, ReplayError> {
    if imu.len() < 2 {
        return Err(ReplayError::Empty("IMU"));
    }
    let gravity = Vector3::new(cfg.gravity[0], cfg.gravity[1], cfg.gravity[2]);
    let mag_ref = Vector3::new(cfg.mag_ref[0], cfg.mag_ref[1], cfg.mag_ref[2]);
    let lever = Vector3::new(cfg.lever_arm[0], cfg.lever_arm[1], cfg.lever_arm[2]);

    let mut ahrs = Ahrs::new(
        Rotation3::identity(),
        Matrix3::identity() * cfg.init_att_std.powi(2),
        AhrsParams {
            gyro_std: cfg.gyro_std,
            accel_std: cfg.accel_std,
            accel_noise_scale: cfg.accel_noise_scale,
            accel_gate: cfg.accel_gate,
            att_process_std: cfg.att_process_std,
            mag_std: cfg.mag_std,
            mag_ref,
            gravity,
            cooperation: cfg.cooperation,
        },
    );

    let pos0 = uwb.first().map(|s| s.pos).unwrap_or_else(Vector3::zeros);
    let mut rv_cov = DMatrix::zeros(6, 6);
    for i in 0..3 {
        rv_cov[(i, i)] = cfg.init_pos_std.powi(2);
        rv_cov[(i + 3, i + 3)] = cfg.init_vel_std.powi(2);
    }
    let mut mean0 = DVector::zeros(6);
    mean0.fixed_rows_mut::<3>(0).copy_from(&pos0);
    let mut belief = CascadeBelief::uncorrelated(Gaussian::new(mean0, rv_cov), 3);

    let q1 = DMatrix::identity(3, 3) * cfg.accel_std.powi(2);
    let r1 = DMatrix::identity(3, 3) * cfg.pos_std.powi(2);

    let mut ahrs_writer = csv::Writer::from_path(ahrs_out).map_err(csv_write)?;
    ahrs_writer
        .write_record(["t", "phi_x", "phi_y", "phi_z", "sigma_x", "sigma_y", "sigma_z"])
        .map_err(csv_write)?;
    let mut fused_writer = match fused_out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path).map_err(csv_write)?;
            w.write_record([
                "t", "px", "py", "pz", "vx", "vy", "vz", "sigma_px", "sigma_py", "sigma_pz",
                "sigma_vx", "sigma_vy", "sigma_vz",
            ])
            .map_err(csv_write)?;
            Some(w)
        }
        None => None,
    };

    let mut fixes = uwb.iter().peekable();
    let mut used_fixes = 0usize;
    let mut deflations = 0usize;

    for k in 1..imu.len() {
        let dt = imu[k].t - imu[k - 1].t;
        let u = imu[k - 1].accel;

        let c_prev = ahrs.attitude().clone();
        let feed_prev = Gaussian::new(
            DVector::zeros(3),
            DMatrix::from_column_slice(3, 3, ahrs.cov().as_slice()),
        );
        let est = ahrs.step(&imu[k - 1].gyro, dt, Some(&u), Some(&imu[k].mag))?;
        let c_now = est.att.clone();
        let feed_now = Gaussian::new(
            DVector::zeros(3),
            DMatrix::from_column_slice(3, 3, est.cov.as_slice()),
        );
        let psi = match est.psi.as_ref() {
            Some(p) => DMatrix::from_column_slice(3, 3, p.as_slice()),
            None => DMatrix::identity(3, 3),
        };

        let process = |x1: &DVector<f64>, dphi: &DVector<f64>, w: &DVector<f64>| {
            let r = Vector3::new(x1[0], x1[1], x1[2]);
            let v = Vector3::new(x1[3], x1[4], x1[5]);
            let c = c_prev.compose(&Rotation3::exp_map(&Vector3::new(dphi[0], dphi[1], dphi[2])));
            let force = c.rotate(&(u - Vector3::new(w[0], w[1], w[2]))) + gravity;
            let (r2, v2) = (r + dt * v, v + dt * force);
            DVector::from_column_slice(&[r2[0], r2[1], r2[2], v2[0], v2[1], v2[2]])
        };
        let (mut predicted, d1) = cascade_predict(&belief, &feed_prev, &process, &q1, cfg.beta)?;
        predicted.cross12 = apply_psi(&predicted.cross12, &psi)?;
        deflations += d1;

        // Consume every fix timestamped inside the step we just finished.
        belief = predicted;
        while let Some(fix) = fixes.peek() {
            if fix.t > imu[k].t {
                break;
            }
            let fix = fixes.next().expect("peeked");
            let measure = |x1: &DVector<f64>, dphi: &DVector<f64>, nu: &DVector<f64>| {
                let r = Vector3::new(x1[0], x1[1], x1[2]);
                let c =
                    c_now.compose(&Rotation3::exp_map(&Vector3::new(dphi[0], dphi[1], dphi[2])));
                let y = r + c.rotate(&lever);
                DVector::from_column_slice(&[y[0], y[1], y[2]]) + nu
            };
            let y = DVector::from_column_slice(fix.pos.as_slice());
            let (corrected, d2) = cascade_correct(
                &belief,
                &feed_now,
                &measure,
                &r1,
                &y,
                cfg.beta,
                CorrectionGain::Marginal,
            )?;
            belief = corrected;
            deflations += d2;
            used_fixes += 1;
        }

        let phi = ahrs.attitude().log_map();
        let acov = ahrs.cov();
        ahrs_writer
            .write_record([
                imu[k].t.to_string(),
                phi[0].to_string(),
                phi[1].to_string(),
                phi[2].to_string(),
                acov[(0, 0)].max(0.0).sqrt().to_string(),
                acov[(1, 1)].max(0.0).sqrt().to_string(),
                acov[(2, 2)].max(0.0).sqrt().to_string(),
            ])
            .map_err(csv_write)?;
        if let Some(w) = fused_writer.as_mut() {
            let m = belief.x1.mean();
            let p = belief.x1.cov();
            let mut record = vec![imu[k].t.to_string()];
            for i in 0..6 {
                record.push(m[i].to_string());
            }
            for i in 0..6 {
                record.push(p[(i, i)].max(0.0).sqrt().to_string());
            }
            w.write_record(&record).map_err(csv_write)?;
        }
    }

    ahrs_writer.flush()?;
    if let Some(mut w) = fused_writer {
        w.flush()?;
    }
    Ok(ReplayStats {
        imu_samples: imu.len(),
        position_fixes: used_fixes,
        deflations,
    })
}

fn csv_write(e: csv::Error) -> ReplayError {
    ReplayError::Write(std::io::Error::other(e))
}
