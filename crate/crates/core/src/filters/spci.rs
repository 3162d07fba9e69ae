//! Sigma-point covariance intersection.
//!
//! Instead of tracking the cross-covariance between the receiving and feeding
//! states, each fusion step inflates the two marginals by `1/w` and
//! `1/(1 − w)` and treats them as independent. The result is conservative for
//! any actual correlation, at the price of pessimism controlled by `w`.

use nalgebra::{DMatrix, DVector};

use crate::gaussian::{symmetrize, Gaussian, PsdFactor};
use crate::sigma::{cubature_points, transform, BlockLayout};
use crate::Result;

fn inflated_joint(
    x1: &Gaussian,
    x2: &Gaussian,
    noise: &Gaussian,
    w: f64,
) -> Gaussian {
    assert!(w > 0.0 && w < 1.0, "intersection weight must lie in (0, 1)");
    let (n1, n2, nw) = (x1.dim(), x2.dim(), noise.dim());
    let n = n1 + n2 + nw;
    let mut mean = DVector::zeros(n);
    mean.rows_mut(0, n1).copy_from(x1.mean());
    mean.rows_mut(n1, n2).copy_from(x2.mean());
    mean.rows_mut(n1 + n2, nw).copy_from(noise.mean());
    let mut cov = DMatrix::zeros(n, n);
    cov.view_mut((0, 0), (n1, n1)).copy_from(&(x1.cov() / w));
    cov.view_mut((n1, n1), (n2, n2))
        .copy_from(&(x2.cov() / (1.0 - w)));
    cov.view_mut((n1 + n2, n1 + n2), (nw, nw))
        .copy_from(noise.cov());
    Gaussian::new(mean, cov)
}

/// Propagates the receiving belief through the process model, treating the
/// feeding posterior as an uncorrelated input via intersection weights.
pub fn spci_predict<F>(
    x1: &Gaussian,
    feeding_prev: &Gaussian,
    process: F,
    process_noise: &Gaussian,
    w: f64,
) -> Result<Gaussian>
where
    F: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let (n1, n2) = (x1.dim(), feeding_prev.dim());
    let joint = inflated_joint(x1, feeding_prev, process_noise, w);
    let points = cubature_points(&joint)?;
    let layout = BlockLayout::new(&[("x1", n1)]);
    let result = transform(
        &points,
        |z| {
            process(
                &z.rows(0, n1).into_owned(),
                &z.rows(n1, n2).into_owned(),
                &z.rows(n1 + n2, z.len() - n1 - n2).into_owned(),
            )
        },
        &layout,
    )?;
    Ok(Gaussian::new(result.mean, result.cov))
}

/// Fuses a receiving measurement that depends on both states, with the
/// feeding posterior handled by intersection weights. The posterior
/// covariance descends from the inflated prior `P̌¹ / w`, which is what keeps
/// the update conservative.
pub fn spci_correct<G>(
    x1_pred: &Gaussian,
    feeding_now: &Gaussian,
    measure: G,
    measurement_noise: &Gaussian,
    y1: &DVector<f64>,
    w: f64,
) -> Result<Gaussian>
where
    G: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let (n1, n2) = (x1_pred.dim(), feeding_now.dim());
    let joint = inflated_joint(x1_pred, feeding_now, measurement_noise, w);
    let points = cubature_points(&joint)?;
    let layout = BlockLayout::new(&[("x1", n1)]);
    let result = transform(
        &points,
        |z| {
            measure(
                &z.rows(0, n1).into_owned(),
                &z.rows(n1, n2).into_owned(),
                &z.rows(n1 + n2, z.len() - n1 - n2).into_owned(),
            )
        },
        &layout,
    )?;

    let sigma_x1y = result.cross_cov("x1").expect("x1 in layout");
    let innovation_cov = result.cov.clone();
    let chol = PsdFactor::new(&innovation_cov)?;
    let gain = chol.solve_mat(&sigma_x1y.transpose()).transpose();
    let innovation = y1 - &result.mean;
    let mean = x1_pred.mean() + &gain * innovation;
    let cov = symmetrize(&(x1_pred.cov() / w - &gain * sigma_x1y.transpose()));
    Ok(Gaussian::new(mean, cov))
}
