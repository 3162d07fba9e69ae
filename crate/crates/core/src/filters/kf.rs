//! Plain linear Kalman steps, plus the feeding-filter wrapper that publishes
//! the exact cross-transition factor for cooperating receivers.

use nalgebra::{DMatrix, DVector};

use crate::filters::cascade::FeedingOutput;
use crate::gaussian::{symmetrize, Gaussian, PsdFactor};
use crate::Result;

/// One predict/update cycle of a linear Kalman filter.
///
/// Predict: `x̌ = A x̂`, `P̌ = A P Aᵀ + Q`. Update with `y = C x + ν`,
/// `ν ~ N(0, R)`: optimal gain through a Cholesky solve, covariance
/// `P̂ = P̌ − K C P̌` symmetrized.
pub fn kf_step(
    prior: &Gaussian,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<Gaussian> {
    kf_step_detailed(prior, a, q, c, r, y).map(|step| step.posterior)
}

/// A [`kf_step`] with the intermediates exposed.
pub struct KfStep {
    pub predicted: Gaussian,
    pub posterior: Gaussian,
    pub gain: DMatrix<f64>,
}

pub fn kf_step_detailed(
    prior: &Gaussian,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<KfStep> {
    let pred_mean = a * prior.mean();
    let pred_cov = symmetrize(&(a * prior.cov() * a.transpose() + q));
    let predicted = Gaussian::new(pred_mean, pred_cov);

    let sigma_xy = predicted.cov() * c.transpose();
    let innovation_cov = c * &sigma_xy + r;
    let chol = PsdFactor::new(&innovation_cov)?;
    let gain = chol.solve_mat(&sigma_xy.transpose()).transpose();
    let innovation = y - c * predicted.mean();
    let mean = predicted.mean() + &gain * innovation;
    let cov = symmetrize(&(predicted.cov() - &gain * sigma_xy.transpose()));
    Ok(KfStep {
        posterior: Gaussian::new(mean, cov),
        predicted,
        gain,
    })
}

/// A stateful linear feeding filter.
///
/// Each step runs [`kf_step_detailed`] and publishes the posterior as a
/// [`FeedingOutput`]. With cooperation enabled it also publishes the exact
/// cross-transition factor `Ψ = ((I − G C) A)ᵀ`, the transpose of its own
/// error-transition matrix, which receivers use to advance their tracked
/// cross-covariance without approximation.
pub struct LinearFeedingKf {
    pub state: Gaussian,
    pub cooperation: bool,
}

impl LinearFeedingKf {
    pub fn new(state: Gaussian, cooperation: bool) -> Self {
        Self { state, cooperation }
    }

    pub fn step(
        &mut self,
        a: &DMatrix<f64>,
        q: &DMatrix<f64>,
        c: &DMatrix<f64>,
        r: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<FeedingOutput> {
        let step = kf_step_detailed(&self.state, a, q, c, r, y)?;
        self.state = step.posterior.clone();
        if self.cooperation {
            let n = a.nrows();
            let psi = ((DMatrix::identity(n, n) - &step.gain * c) * a).transpose();
            Ok(FeedingOutput::with_psi(step.posterior, psi))
        } else {
            Ok(FeedingOutput::new(step.posterior))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 1, &[v])
    }

    #[test]
    fn scalar_riccati_step_by_hand() {
        // P=1, A=1, Q=1 → P̌=2; C=1, R=1 → K=2/3, P̂=2/3.
        let prior = Gaussian::standard(1);
        let step = kf_step_detailed(
            &prior,
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &DVector::from_row_slice(&[0.0]),
        )
        .unwrap();
        assert_relative_eq!(step.predicted.cov()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(step.gain[(0, 0)], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(step.posterior.cov()[(0, 0)], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(step.posterior.mean()[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn huge_noise_reduces_to_prediction() {
        let prior = Gaussian::new(DVector::from_row_slice(&[2.0]), scalar(0.5));
        let post = kf_step(
            &prior,
            &scalar(1.5),
            &scalar(0.1),
            &scalar(1.0),
            &scalar(1e12),
            &DVector::from_row_slice(&[100.0]),
        )
        .unwrap();
        assert_relative_eq!(post.mean()[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(post.cov()[(0, 0)], 0.5 * 2.25 + 0.1, epsilon = 1e-9);
    }

    #[test]
    fn tiny_noise_snaps_to_measurement() {
        let prior = Gaussian::new(DVector::from_row_slice(&[2.0]), scalar(0.5));
        let post = kf_step(
            &prior,
            &scalar(1.0),
            &scalar(0.0),
            &scalar(1.0),
            &scalar(1e-12),
            &DVector::from_row_slice(&[7.0]),
        )
        .unwrap();
        assert_relative_eq!(post.mean()[0], 7.0, epsilon = 1e-6);
    }

    #[test]
    fn feeding_filter_publishes_exact_psi() {
        let mut feeding = LinearFeedingKf::new(Gaussian::standard(1), true);
        let out = feeding
            .step(
                &scalar(1.0),
                &scalar(1.0),
                &scalar(1.0),
                &scalar(1.0),
                &DVector::from_row_slice(&[0.0]),
            )
            .unwrap();
        // K = 2/3 → Ψ = (1 − 2/3)·1 = 1/3.
        assert_relative_eq!(out.psi.unwrap()[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
    }
}
