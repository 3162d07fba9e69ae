//! Attitude and heading reference system: a multiplicative EKF on SO(3).
//!
//! The attitude estimate is a rotation `C` mapping body to world coordinates,
//! carried as a nominal rotation with a right-multiplied error,
//! `C = C̄ · exp(δφ)`, `δφ ~ N(0, P)` in the body frame. Gyro samples drive
//! the propagation; magnetometer and (gated) accelerometer vector
//! observations pull the nominal back. Each step can also publish the exact
//! transition factor of its own error state, which downstream consumers use
//! to advance a cross-covariance.

use nalgebra::{Matrix3, Vector3};

use crate::gaussian::JITTER_SCALE;
use crate::so3::{skew, Rotation3};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct AhrsParams {
    /// Gyro white-noise standard deviation per sample (rad/s).
    pub gyro_std: f64,
    /// Accelerometer white-noise standard deviation per sample (m/s²).
    pub accel_std: f64,
    /// Inflation applied to the accelerometer noise when used for attitude
    /// aiding, absorbing unmodeled trajectory acceleration.
    pub accel_noise_scale: f64,
    /// Aiding gate: accept an accelerometer sample only when its norm is
    /// within this band of the local gravity norm (m/s²).
    pub accel_gate: f64,
    /// Additive attitude random-walk standard deviation (rad/√s). Covers
    /// slowly varying aiding disturbances — chiefly trajectory acceleration
    /// admitted through the gate — which look like a drifting reference
    /// rather than white noise, so they are budgeted as process noise to
    /// keep the reported covariance at the disturbance scale.
    pub att_process_std: f64,
    /// Magnetometer white-noise standard deviation per axis.
    pub mag_std: f64,
    /// World-frame reference magnetic field.
    pub mag_ref: Vector3<f64>,
    /// World-frame gravity vector.
    pub gravity: Vector3<f64>,
    /// When true, each step reports the exact error-transition factor.
    pub cooperation: bool,
}

impl Default for AhrsParams {
    fn default() -> Self {
        Self {
            gyro_std: 0.0032,
            accel_std: 0.10,
            accel_noise_scale: 10.0,
            accel_gate: 0.5,
            att_process_std: 0.01,
            mag_std: 2.0,
            mag_ref: Vector3::new(25.0, 0.0, -43.301_270_189_221_93),
            gravity: Vector3::new(0.0, 0.0, -9.81),
            cooperation: true,
        }
    }
}

/// Attitude belief published after each step.
#[derive(Clone, Debug)]
pub struct AttitudeEstimate {
    pub att: Rotation3,
    /// Covariance of the body-frame attitude error `δφ`.
    pub cov: Matrix3<f64>,
    /// Transpose of this step's error-transition matrix, present when
    /// cooperation is enabled.
    pub psi: Option<Matrix3<f64>>,
}

pub struct Ahrs {
    att: Rotation3,
    cov: Matrix3<f64>,
    params: AhrsParams,
}

impl Ahrs {
    pub fn new(att: Rotation3, cov: Matrix3<f64>, params: AhrsParams) -> Self {
        Self {
            att,
            cov: 0.5 * (cov + cov.transpose()),
            params,
        }
    }

    pub fn attitude(&self) -> &Rotation3 {
        &self.att
    }

    pub fn cov(&self) -> &Matrix3<f64> {
        &self.cov
    }

    /// Current belief without stepping (no transition factor).
    pub fn estimate(&self) -> AttitudeEstimate {
        AttitudeEstimate {
            att: self.att.clone(),
            cov: self.cov,
            psi: None,
        }
    }

    /// Fuses one vector observation `y = ŷ(C) + ν`, `ν ~ N(0, r·I)`, where the
    /// model Jacobian with respect to the body-frame error is `skew(ŷ)`.
    ///
    /// The correction is iterated Gauss–Newton style: each pass relinearizes
    /// the prediction about the current iterate, so large pre-alignment
    /// errors — where a single first-order step systematically under-rotates
    /// — still land on the posterior mode the reported covariance assumes.
    fn vector_update(
        &mut self,
        measured: &Vector3<f64>,
        predict: impl Fn(&Rotation3) -> Vector3<f64>,
        r_var: f64,
        transition: &mut Matrix3<f64>,
    ) -> Result<()> {
        const GN_ITERS: usize = 3;
        let prior = self.att.clone();
        let mut delta = Vector3::zeros();
        let mut i_kh = Matrix3::identity();
        for _ in 0..GN_ITERS {
            let iterate = prior.compose(&Rotation3::exp_map(&delta));
            let predicted = predict(&iterate);
            let h = skew(&predicted);
            let mut s = h * self.cov * h.transpose() + Matrix3::identity() * r_var;
            s += Matrix3::identity() * (JITTER_SCALE * s.trace() / 3.0);
            let chol = s.cholesky().ok_or(Error::NotPositiveDefinite)?;
            let gain = chol.solve(&(h * self.cov)).transpose();
            let residual = measured - predicted;
            delta = &gain * (residual + h * delta);
            i_kh = Matrix3::identity() - &gain * h;
        }
        self.att = prior.compose(&Rotation3::exp_map(&delta));
        let cov = &i_kh * self.cov;
        self.cov = 0.5 * (cov + cov.transpose());
        *transition = i_kh * *transition;
        Ok(())
    }

    /// One filter cycle: propagate with the gyro sample over `dt`, then fuse
    /// whichever of the accelerometer / magnetometer samples are present.
    pub fn step(
        &mut self,
        gyro: &Vector3<f64>,
        dt: f64,
        accel: Option<&Vector3<f64>>,
        mag: Option<&Vector3<f64>>,
    ) -> Result<AttitudeEstimate> {
        // Propagate: C̄ ← C̄ exp(ω dt); body-frame error picks up the adjoint
        // of the increment, δφ ← exp(−ω dt) δφ − (noise) dt.
        let f = Rotation3::exp_map(&(-gyro * dt)).matrix().clone();
        self.att = self.att.compose(&Rotation3::exp_map(&(gyro * dt)));
        let gyro_var = (self.params.gyro_std * dt).powi(2);
        let drift_var = self.params.att_process_std.powi(2) * dt;
        let cov = &f * self.cov * f.transpose() + Matrix3::identity() * (gyro_var + drift_var);
        self.cov = 0.5 * (cov + cov.transpose());
        let mut transition = f;

        if let Some(m) = mag {
            // y = Cᵀ m_ref + ν.
            let mag_ref = self.params.mag_ref;
            self.vector_update(
                m,
                move |att| att.rotate_inv(&mag_ref),
                self.params.mag_std.powi(2),
                &mut transition,
            )?;
        }

        if let Some(a) = accel {
            // Specific force under quasi-static motion: u ≈ −Cᵀ g, accepted
            // only when the sample norm sits near gravity.
            let g_norm = self.params.gravity.norm();
            if (a.norm() - g_norm).abs() < self.params.accel_gate {
                let gravity = self.params.gravity;
                let r_std = self.params.accel_std * self.params.accel_noise_scale;
                self.vector_update(
                    a,
                    move |att| -att.rotate_inv(&gravity),
                    r_std.powi(2),
                    &mut transition,
                )?;
            }
        }

        let psi = self.params.cooperation.then(|| transition.transpose());
        Ok(AttitudeEstimate {
            att: self.att.clone(),
            cov: self.cov,
            psi,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn static_params() -> AhrsParams {
        AhrsParams {
            accel_noise_scale: 1.0,
            cooperation: true,
            ..AhrsParams::default()
        }
    }

    /// Noise-free static samples for a body at the given true attitude.
    fn static_samples(truth: &Rotation3, params: &AhrsParams) -> (Vector3<f64>, Vector3<f64>) {
        let accel = -truth.rotate_inv(&params.gravity);
        let mag = truth.rotate_inv(&params.mag_ref);
        (accel, mag)
    }

    #[test]
    fn pure_propagation_rotates_and_inflates() {
        let params = static_params();
        let mut ahrs = Ahrs::new(Rotation3::identity(), Matrix3::identity() * 0.01, params);
        let gyro = Vector3::new(0.0, 0.0, 0.5);
        let est = ahrs.step(&gyro, 0.01, None, None).unwrap();
        let expected = Rotation3::exp_map(&Vector3::new(0.0, 0.0, 0.005));
        assert!(est.att.tangent_to(&expected).norm() < 1e-12);
        assert!(est.cov.trace() > 0.03);
        // With no updates the published factor is the propagation adjoint
        // transposed, i.e. exp(+ω dt).
        let psi = est.psi.unwrap();
        let expected_psi = Rotation3::exp_map(&Vector3::new(0.0, 0.0, 0.005));
        assert_relative_eq!(
            (psi - expected_psi.matrix()).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn static_aiding_converges_from_tilt() {
        let params = static_params();
        let truth = Rotation3::identity();
        let (accel, mag) = static_samples(&truth, &params);
        let init = Rotation3::exp_map(&Vector3::new(0.15, -0.1, 0.2));
        let mut ahrs = Ahrs::new(init, Matrix3::identity() * 0.05, params);
        for _ in 0..500 {
            ahrs.step(&Vector3::zeros(), 0.01, Some(&accel), Some(&mag))
                .unwrap();
        }
        let err = ahrs.attitude().tangent_to(&truth).norm();
        assert!(err < 1e-3, "residual attitude error {err}");
        assert!(ahrs.cov().trace() < 0.05);
    }

    #[test]
    fn accel_gate_rejects_dynamic_samples() {
        let params = static_params();
        let truth = Rotation3::identity();
        let (_, mag) = static_samples(&truth, &params);
        let mut with_bad_accel = Ahrs::new(
            Rotation3::identity(),
            Matrix3::identity() * 0.05,
            params.clone(),
        );
        let mut mag_only = Ahrs::new(Rotation3::identity(), Matrix3::identity() * 0.05, params);
        // Norm far outside the gate: must be ignored entirely.
        let bad = Vector3::new(4.0, 0.0, 12.0);
        let a = with_bad_accel
            .step(&Vector3::zeros(), 0.01, Some(&bad), Some(&mag))
            .unwrap();
        let b = mag_only
            .step(&Vector3::zeros(), 0.01, None, Some(&mag))
            .unwrap();
        assert_relative_eq!((a.cov - b.cov).norm(), 0.0, epsilon = 1e-15);
        assert!(a.att.tangent_to(&b.att).norm() < 1e-15);
    }

    #[test]
    fn updates_shrink_covariance_and_report_transition() {
        let params = static_params();
        let truth = Rotation3::exp_map(&Vector3::new(0.3, 0.2, -0.4));
        let (accel, mag) = static_samples(&truth, &params);
        let mut ahrs = Ahrs::new(truth.clone(), Matrix3::identity() * 0.05, params);
        let est = ahrs
            .step(&Vector3::zeros(), 0.01, Some(&accel), Some(&mag))
            .unwrap();
        assert!(est.cov.trace() < 0.15);
        // Error transition must be a contraction when updates fire.
        let psi = est.psi.unwrap();
        assert!(psi.norm() < 3.0f64.sqrt());
    }
}
