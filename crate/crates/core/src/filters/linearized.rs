//! Linearized (Jacobian-based) variant of the cascaded filter.
//!
//! Moment propagation through the receiving model is done with closed-form
//! matrix algebra instead of sigma points; the correction step shares the
//! same gain solver as the sigma-point path, so for affine models the two
//! variants agree to numerical precision.

use nalgebra::{DMatrix, DVector};

use crate::filters::cascade::{solve_correction, CascadeBelief, CorrectionGain};
use crate::gaussian::{symmetrize, Gaussian};
use crate::{Error, Result};

/// Jacobians and noise covariances for a linear(ized) cascade pair.
///
/// Receiving process `x¹ₖ = A¹x¹ₖ₋₁ + B¹x²ₖ₋₁ + L¹w¹`, receiving measurement
/// `y¹ = C¹x¹ + D¹x² + M¹ν¹`; feeding process `x² = A²x² + L²w²`, feeding
/// measurement `y² = C²x² + M²ν²`.
#[derive(Clone)]
pub struct LinearCascadeModel {
    pub a1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub l2: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    /// Stand-in cross-transition factor used when the feeding filter does not
    /// publish its exact one.
    pub psi_hat: DMatrix<f64>,
}

impl LinearCascadeModel {
    pub fn dim1(&self) -> usize {
        self.a1.nrows()
    }

    pub fn dim2(&self) -> usize {
        self.a2.nrows()
    }
}

/// Closed-form moment propagation through the receiving process model.
///
/// Returns the predicted receiving belief with its cross-covariance against
/// the feeding posterior at the *previous* step; apply a cross-transition
/// factor afterwards to re-align it with the current feeding posterior.
pub fn linearized_predict(
    belief: &CascadeBelief,
    feeding_prev: &Gaussian,
    model: &LinearCascadeModel,
) -> Result<CascadeBelief> {
    let mean = &model.a1 * belief.x1.mean() + &model.b1 * feeding_prev.mean();
    linearized_predict_about(belief, feeding_prev, model, mean)
}

/// [`linearized_predict`] with the predicted mean supplied by the caller.
///
/// For a nonlinear model the Jacobians in `model` describe the expansion
/// around the current estimate while the mean is propagated through the full
/// nonlinear map; passing it in keeps this function usable as the covariance
/// half of an extended-filter step.
pub fn linearized_predict_about(
    belief: &CascadeBelief,
    feeding_prev: &Gaussian,
    model: &LinearCascadeModel,
    predicted_mean: DVector<f64>,
) -> Result<CascadeBelief> {
    let n1 = belief.x1.dim();
    let n2 = feeding_prev.dim();
    if model.a1.ncols() != n1 || model.b1.ncols() != n2 {
        return Err(Error::DimensionMismatch {
            expected: model.a1.ncols(),
            found: n1,
        });
    }
    let p1 = belief.x1.cov();
    let p12 = &belief.cross12;
    let p2 = feeding_prev.cov();

    let a_p12_b = &model.a1 * p12 * model.b1.transpose();
    let cov = symmetrize(
        &(&model.a1 * p1 * model.a1.transpose()
            + &a_p12_b
            + a_p12_b.transpose()
            + &model.b1 * p2 * model.b1.transpose()
            + &model.l1 * &model.q1 * model.l1.transpose()),
    );
    let cross = &model.a1 * p12 + &model.b1 * p2;
    Ok(CascadeBelief::new(
        Gaussian::new(predicted_mean, cov),
        cross,
    ))
}

/// Closed-form correction of the receiving belief with a `y¹` measurement.
///
/// Innovation statistics come from the linear measurement model; the gain and
/// covariance updates are identical to the sigma-point path.
pub fn linearized_correct(
    belief: &CascadeBelief,
    feeding_now: &Gaussian,
    model: &LinearCascadeModel,
    y1: &DVector<f64>,
    gain: CorrectionGain,
) -> Result<CascadeBelief> {
    let predicted_y = &model.c1 * belief.x1.mean() + &model.d1 * feeding_now.mean();
    linearized_correct_about(belief, feeding_now, model, y1, &predicted_y, gain)
}

/// [`linearized_correct`] with the predicted measurement supplied by the
/// caller — the measurement half of an extended-filter step around a
/// nonlinear model.
pub fn linearized_correct_about(
    belief: &CascadeBelief,
    feeding_now: &Gaussian,
    model: &LinearCascadeModel,
    y1: &DVector<f64>,
    predicted_y: &DVector<f64>,
    gain: CorrectionGain,
) -> Result<CascadeBelief> {
    let p1 = belief.x1.cov();
    let p12 = &belief.cross12;
    let p2 = feeding_now.cov();

    let innovation = y1 - predicted_y;

    let sigma_x1y = p1 * model.c1.transpose() + p12 * model.d1.transpose();
    let sigma_x2y = p12.transpose() * model.c1.transpose() + p2 * model.d1.transpose();
    let c_p12_d = &model.c1 * p12 * model.d1.transpose();
    let innovation_cov = symmetrize(
        &(&model.c1 * p1 * model.c1.transpose()
            + &c_p12_d
            + c_p12_d.transpose()
            + &model.d1 * p2 * model.d1.transpose()
            + &model.m1 * &model.r1 * model.m1.transpose()),
    );

    let (shift, p1_post, p12_post) = solve_correction(
        p1,
        p12,
        p2,
        &sigma_x1y,
        &sigma_x2y,
        &innovation_cov,
        &innovation,
        gain,
    )?;
    let mean = belief.x1.mean() + shift;
    Ok(CascadeBelief::new(Gaussian::new(mean, p1_post), p12_post))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::cascade::apply_psi;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 1, &[v])
    }

    fn toy_model() -> LinearCascadeModel {
        // x¹ₖ = x¹ − x² + w¹, y¹ = x¹ + x² + ν¹, feeding a random walk.
        LinearCascadeModel {
            a1: scalar(1.0),
            b1: scalar(-1.0),
            l1: scalar(1.0),
            c1: scalar(1.0),
            d1: scalar(1.0),
            m1: scalar(1.0),
            q1: scalar(1.0),
            r1: scalar(1.0),
            a2: scalar(1.0),
            l2: scalar(1.0),
            c2: scalar(1.0),
            m2: scalar(1.0),
            q2: scalar(1e-5),
            r2: scalar(1.0),
            psi_hat: scalar(1.0),
        }
    }

    #[test]
    fn toy_prediction_matches_hand_expansion() {
        // P̂¹=2, P̂¹·²=0.3, P̂²=0.5, q¹=1:
        // P̌¹ = 2 − 2·0.3 + 0.5 + 1 = 2.9, P̌¹·² = 0.3 − 0.5 = −0.2.
        let model = toy_model();
        let belief = CascadeBelief::new(
            Gaussian::new(DVector::from_row_slice(&[1.0]), scalar(2.0)),
            scalar(0.3),
        );
        let feeding = Gaussian::new(DVector::from_row_slice(&[0.4]), scalar(0.5));
        let pred = linearized_predict(&belief, &feeding, &model).unwrap();
        assert_relative_eq!(pred.x1.mean()[0], 0.6, epsilon = 1e-14);
        assert_relative_eq!(pred.x1.cov()[(0, 0)], 2.9, epsilon = 1e-14);
        assert_relative_eq!(pred.cross12[(0, 0)], -0.2, epsilon = 1e-14);
    }

    #[test]
    fn toy_correction_gain_one_third() {
        // P̌¹=1, P̌¹·²=0, P̂²=1, r¹=1 → K = (1+0)/(1+0+1+1) = 1/3.
        let model = toy_model();
        let belief = CascadeBelief::new(Gaussian::standard(1), scalar(0.0));
        let feeding = Gaussian::standard(1);
        let y = DVector::from_row_slice(&[3.0]);
        let post = linearized_correct(&belief, &feeding, &model, &y, CorrectionGain::Marginal)
            .unwrap();
        assert_relative_eq!(post.x1.mean()[0], 1.0, epsilon = 1e-14);
        // P̂¹ = P̌¹ − K Σ₁ = 1 − (1/3)·1 = 2/3.
        assert_relative_eq!(post.x1.cov()[(0, 0)], 2.0 / 3.0, epsilon = 1e-14);
        // P̂¹·² = 0 − (1/3)(0 + 1) = −1/3.
        assert_relative_eq!(post.cross12[(0, 0)], -1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn psi_advance_is_plain_product() {
        let cross = scalar(-0.2);
        let advanced = apply_psi(&cross, &scalar(0.25)).unwrap();
        assert_relative_eq!(advanced[(0, 0)], -0.05, epsilon = 1e-15);
    }
}
