//! Sigma-point cascaded filtering with cross-covariance tracking.
//!
//! The receiving filter consumes the feeding filter's posterior `(x̂², P̂²)`
//! in its process and measurement models. Its belief therefore carries, next
//! to its own Gaussian, the cross-covariance `P¹·²` between the two
//! estimation errors. Each step:
//!
//! 1. [`cascade_predict`] assembles the joint `(x¹, x², w¹)`, repairs it by
//!    cross-block deflation if the tracked cross made it indefinite,
//!    propagates cubature points through the process model, and reads the
//!    predicted mean/covariance plus the refreshed cross off the sample
//!    statistics;
//! 2. [`apply_psi`] advances the cross through the feeding filter's own
//!    step, either with the exact error-transition transpose when the
//!    feeding filter cooperates or with a steady-state stand-in;
//! 3. [`cascade_correct`] assembles `(x̌¹, x̂², ν¹)`, pushes points through
//!    the measurement model, and applies the gain.
//!
//! Two correction forms are provided. [`CorrectionGain::Marginal`] applies
//! the MSE-optimal gain on the receiving state only; its reported covariance
//! and cross equal the true moments of the update whenever the inputs are
//! exact, which is what the joint-filter equivalence tests pin down.
//! [`CorrectionGain::Coupled`] additionally folds the locally corrected
//! feeding state back into the receiving update through the coupling gain
//! `K¹·²`; it conditions on the feeding mean as if it were a fresh value and
//! is kept as an explicitly selectable variant.
//!
//! The naive baseline ([`naive_predict`]/[`naive_correct`]) runs the same
//! sigma-point machinery with the cross pinned to zero — the feeding estimate
//! is treated as fresh, uncorrelated information at every step.

use nalgebra::{DMatrix, DVector};

use crate::gaussian::{symmetrize, Gaussian, JointGaussian2, PsdFactor};
use crate::sigma::{cubature_points, transform, BlockLayout};
use crate::{Error, Result};

/// Receiving-filter belief: own Gaussian plus the error cross-covariance
/// against the feeding filter's estimate (`dim1 × dim2`).
#[derive(Debug, Clone)]
pub struct CascadeBelief {
    pub x1: Gaussian,
    pub cross12: DMatrix<f64>,
}

impl CascadeBelief {
    pub fn new(x1: Gaussian, cross12: DMatrix<f64>) -> Self {
        assert_eq!(cross12.nrows(), x1.dim(), "cross rows must match state");
        Self { x1, cross12 }
    }

    /// Belief with a zero cross block (how every run starts).
    pub fn uncorrelated(x1: Gaussian, feeding_dim: usize) -> Self {
        let cross12 = DMatrix::zeros(x1.dim(), feeding_dim);
        Self { x1, cross12 }
    }
}

/// What the feeding filter publishes each step: its posterior and, when
/// cooperation is enabled, the transpose of its error transition used to
/// advance the cross-covariance exactly.
#[derive(Debug, Clone)]
pub struct FeedingOutput {
    pub x2: Gaussian,
    pub psi: Option<DMatrix<f64>>,
}

impl FeedingOutput {
    pub fn new(x2: Gaussian) -> Self {
        Self { x2, psi: None }
    }

    pub fn with_psi(x2: Gaussian, psi: DMatrix<f64>) -> Self {
        Self { x2, psi: Some(psi) }
    }
}

/// Which correction form to apply; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionGain {
    /// Optimal gain on the receiving state; exactly moment-matched.
    Marginal,
    /// Adds the `K¹·²`-weighted local feeding correction to the update.
    Coupled,
}

/// Vector-state cascade model: process `f(x1, x2, w)`, measurement
/// `g(x1, x2, v)`, their noise covariances, and the steady-state
/// cross-transition stand-in used when the feeding filter does not publish
/// an exact one.
pub struct CascadeModel {
    pub process: Box<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub process_noise: DMatrix<f64>,
    pub measure: Box<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub measurement_noise: DMatrix<f64>,
    pub psi_hat: DMatrix<f64>,
}

/// Stacks a (deflated) joint with an independent trailing noise block into a
/// single Gaussian ready for sigma-point generation.
fn augment(joint: &JointGaussian2, noise_cov: &DMatrix<f64>) -> Gaussian {
    let (n1, n2, nw) = (joint.dim1(), joint.dim2(), noise_cov.nrows());
    let dim = n1 + n2 + nw;
    let mut mean = DVector::zeros(dim);
    mean.rows_mut(0, n1).copy_from(&joint.mean1);
    mean.rows_mut(n1, n2).copy_from(&joint.mean2);
    let mut cov = DMatrix::zeros(dim, dim);
    cov.view_mut((0, 0), (n1, n1)).copy_from(&joint.cov11);
    cov.view_mut((n1, n1), (n2, n2)).copy_from(&joint.cov22);
    cov.view_mut((0, n1), (n1, n2)).copy_from(&joint.cov12);
    cov.view_mut((n1, 0), (n2, n1))
        .copy_from(&joint.cov12.transpose());
    cov.view_mut((n1 + n2, n1 + n2), (nw, nw)).copy_from(noise_cov);
    Gaussian::new(mean, cov)
}

fn slice(v: &DVector<f64>, offset: usize, len: usize) -> DVector<f64> {
    v.rows(offset, len).clone_owned()
}

/// Prediction through the process model.
///
/// Returns the predicted belief — whose cross block pairs the predicted state
/// with the feeding posterior *of the previous step* — plus the number of
/// deflation rounds spent repairing the assembled joint.
pub fn cascade_predict<F>(
    belief: &CascadeBelief,
    feeding_prev: &Gaussian,
    process: F,
    process_noise: &DMatrix<f64>,
    beta: f64,
) -> Result<(CascadeBelief, usize)>
where
    F: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let (n1, n2, nw) = (belief.x1.dim(), feeding_prev.dim(), process_noise.nrows());
    let joint = JointGaussian2::new(
        belief.x1.mean().clone(),
        feeding_prev.mean().clone(),
        belief.x1.cov().clone(),
        feeding_prev.cov().clone(),
        belief.cross12.clone(),
    );
    let (joint, deflations) = joint.deflate_to_psd(beta);
    let augmented = augment(&joint, process_noise);
    let points = cubature_points(&augmented)?;
    let layout = BlockLayout::new(&[("x1", n1), ("x2", n2)]);
    let stats = transform(
        &points,
        |s| process(&slice(s, 0, n1), &slice(s, n1, n2), &slice(s, n1 + n2, nw)),
        &layout,
    )?;
    let cross12 = stats
        .cross_cov("x2")
        .expect("x2 block is in the layout")
        .transpose();
    Ok((
        CascadeBelief::new(Gaussian::new(stats.mean.clone(), stats.cov.clone()), cross12),
        deflations,
    ))
}

/// Advances the cross-covariance through one feeding-filter step:
/// `P¹·²ₖ,ₖ = P¹·²ₖ,ₖ₋₁ · Ψ`.
pub fn apply_psi(cross: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cross.ncols() != psi.nrows() {
        return Err(Error::DimensionMismatch {
            expected: cross.ncols(),
            found: psi.nrows(),
        });
    }
    Ok(cross * psi)
}

/// The correction algebra shared by the sigma-point and linearized paths.
///
/// Inputs are the (already deflated) prior blocks and the innovation
/// statistics; output is the mean shift plus posterior `P¹` and `P¹·²`.
pub(crate) fn solve_correction(
    pred_cov: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    feeding_cov: &DMatrix<f64>,
    sigma_x1y: &DMatrix<f64>,
    sigma_x2y: &DMatrix<f64>,
    innovation_cov: &DMatrix<f64>,
    innovation: &DVector<f64>,
    gain: CorrectionGain,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let chol = PsdFactor::new(innovation_cov)?;
    let k1 = chol.solve_mat(&sigma_x1y.transpose()).transpose();
    let pos_cross = cross - &k1 * sigma_x2y.transpose();
    match gain {
        CorrectionGain::Marginal => {
            let shift = &k1 * innovation;
            let p1 = symmetrize(&(pred_cov - &k1 * sigma_x1y.transpose()));
            Ok((shift, p1, pos_cross))
        }
        CorrectionGain::Coupled => {
            let k2 = chol.solve_mat(&sigma_x2y.transpose()).transpose();
            let feeding_post = symmetrize(&(feeding_cov - &k2 * sigma_x2y.transpose()));
            let chol2 = PsdFactor::new(&feeding_post)?;
            // K¹·² = (P¹·² − K¹Σ₂ᵀ)(P̂²⁺)⁻¹, via solves against the symmetric factor.
            let k12 = chol2.solve_mat(&pos_cross.transpose()).transpose();
            let shift = &k1 * innovation - &k12 * (&k2 * innovation);
            let p1 = symmetrize(
                &(pred_cov
                    - &k1 * sigma_x1y.transpose()
                    - &k12 * (cross.transpose() - &k2 * sigma_x1y.transpose())),
            );
            Ok((shift, p1, pos_cross))
        }
    }
}

/// Measurement correction through the measurement model.
///
/// `belief` must already carry the cross advanced to the current step (see
/// [`apply_psi`]); `feeding_now` is the feeding posterior of the current
/// step. Returns the corrected belief and the deflation rounds spent on the
/// assembled joint.
pub fn cascade_correct<G>(
    belief: &CascadeBelief,
    feeding_now: &Gaussian,
    measure: G,
    measurement_noise: &DMatrix<f64>,
    y1: &DVector<f64>,
    beta: f64,
    gain: CorrectionGain,
) -> Result<(CascadeBelief, usize)>
where
    G: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let (n1, n2, nv) = (belief.x1.dim(), feeding_now.dim(), measurement_noise.nrows());
    let joint = JointGaussian2::new(
        belief.x1.mean().clone(),
        feeding_now.mean().clone(),
        belief.x1.cov().clone(),
        feeding_now.cov().clone(),
        belief.cross12.clone(),
    );
    let (joint, deflations) = joint.deflate_to_psd(beta);
    let augmented = augment(&joint, measurement_noise);
    let points = cubature_points(&augmented)?;
    let layout = BlockLayout::new(&[("x1", n1), ("x2", n2)]);
    let stats = transform(
        &points,
        |s| measure(&slice(s, 0, n1), &slice(s, n1, n2), &slice(s, n1 + n2, nv)),
        &layout,
    )?;
    if stats.mean.len() != y1.len() {
        return Err(Error::DimensionMismatch {
            expected: stats.mean.len(),
            found: y1.len(),
        });
    }
    let innovation = y1 - &stats.mean;
    let sigma_x1y = stats.cross_cov("x1").expect("x1 in layout");
    let sigma_x2y = stats.cross_cov("x2").expect("x2 in layout");
    let (shift, p1, cross) = solve_correction(
        &joint.cov11,
        &joint.cov12,
        &joint.cov22,
        sigma_x1y,
        sigma_x2y,
        &stats.cov,
        &innovation,
        gain,
    )?;
    let mean = belief.x1.mean() + shift;
    Ok((CascadeBelief::new(Gaussian::new(mean, p1), cross), deflations))
}

/// One full predict → cross-advance → correct cycle on a vector-state model.
///
/// `feeding_prev` feeds the prediction, `feeding_now` the correction; the
/// cross is advanced with `feeding_now.psi` when present, otherwise with the
/// model's stand-in.
pub fn cascade_step(
    belief: &CascadeBelief,
    feeding_prev: &FeedingOutput,
    feeding_now: &FeedingOutput,
    y1: &DVector<f64>,
    model: &CascadeModel,
    beta: f64,
    gain: CorrectionGain,
) -> Result<(CascadeBelief, usize)> {
    let (mut predicted, d1) = cascade_predict(
        belief,
        &feeding_prev.x2,
        &model.process,
        &model.process_noise,
        beta,
    )?;
    let psi = feeding_now.psi.as_ref().unwrap_or(&model.psi_hat);
    predicted.cross12 = apply_psi(&predicted.cross12, psi)?;
    let (corrected, d2) = cascade_correct(
        &predicted,
        &feeding_now.x2,
        &model.measure,
        &model.measurement_noise,
        y1,
        beta,
        gain,
    )?;
    Ok((corrected, d1 + d2))
}

/// Naive prediction: the joint is assembled with a zero cross block.
pub fn naive_predict<F>(
    x1: &Gaussian,
    feeding_prev: &Gaussian,
    process: F,
    process_noise: &DMatrix<f64>,
) -> Result<Gaussian>
where
    F: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let belief = CascadeBelief::uncorrelated(x1.clone(), feeding_prev.dim());
    let (predicted, _) = cascade_predict(&belief, feeding_prev, process, process_noise, 1.0)?;
    Ok(predicted.x1)
}

/// Naive correction: zero cross, plain optimal update on the receiving state.
pub fn naive_correct<G>(
    x1: &Gaussian,
    feeding_now: &Gaussian,
    measure: G,
    measurement_noise: &DMatrix<f64>,
    y1: &DVector<f64>,
) -> Result<Gaussian>
where
    G: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let belief = CascadeBelief::uncorrelated(x1.clone(), feeding_now.dim());
    let (corrected, _) = cascade_correct(
        &belief,
        feeding_now,
        measure,
        measurement_noise,
        y1,
        1.0,
        CorrectionGain::Marginal,
    )?;
    Ok(corrected.x1)
}
