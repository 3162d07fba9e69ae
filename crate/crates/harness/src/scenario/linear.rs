//! Linear toy scenario: a scalar receiving state driven by a scalar feeding
//! random walk.
//!
//! System:
//!
//! - feeding:   `x²ₖ = x²ₖ₋₁ + w²`, measured as `y² = x² + ν²`
//! - receiving: `x¹ₖ = x¹ₖ₋₁ − x²ₖ₋₁ + w¹`, measured as `y¹ = x¹ + x² + ν¹`
//!
//! The feeding estimate enters both the receiving process and measurement
//! models, so the receiving error is correlated with the feeding error and a
//! naive cascade becomes overconfident. Every estimator in one trial consumes
//! the same truth and the same measurement draws, which makes cross-estimator
//! comparisons paired.

use cascade_core::filters::{
    apply_psi, cascade_step, linearized_correct, linearized_predict, naive_correct, naive_predict,
    spci_correct, spci_predict, CascadeBelief, CascadeModel, CorrectionGain, FeedbackMode,
    FeedingOutput, LinearCascadeModel, LinearFeedingKf, StackedKf,
};
use cascade_core::gaussian::Gaussian;
use cascade_core::Result;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::LinearToyConfig;
use crate::scenario::{EstimatorTrial, LINEAR_ESTIMATORS};

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 1, &[v])
}

fn vec1(v: f64) -> DVector<f64> {
    DVector::from_row_slice(&[v])
}

fn toy_matrices(cfg: &LinearToyConfig) -> LinearCascadeModel {
    LinearCascadeModel {
        a1: scalar(1.0),
        b1: scalar(-1.0),
        l1: scalar(1.0),
        c1: scalar(1.0),
        d1: scalar(1.0),
        m1: scalar(1.0),
        q1: scalar(cfg.q1),
        r1: scalar(cfg.r1),
        a2: scalar(1.0),
        l2: scalar(1.0),
        c2: scalar(1.0),
        m2: scalar(1.0),
        q2: scalar(cfg.q2),
        r2: scalar(cfg.r2),
        psi_hat: scalar(1.0),
    }
}

fn toy_closures(cfg: &LinearToyConfig) -> CascadeModel {
    CascadeModel {
        process: Box::new(|x1, x2, w| vec1(x1[0] - x2[0] + w[0])),
        process_noise: scalar(cfg.q1),
        measure: Box::new(|x1, x2, v| vec1(x1[0] + x2[0] + v[0])),
        measurement_noise: scalar(cfg.r1),
        psi_hat: scalar(1.0),
    }
}

/// Runs one linear toy trial and returns per-step traces for each estimator
/// in [`LINEAR_ESTIMATORS`] order.
pub fn simulate_trial(cfg: &LinearToyConfig, seed: u64) -> Result<Vec<EstimatorTrial>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draw = move |std: f64| -> f64 {
        let n: f64 = StandardNormal.sample(&mut rng);
        n * std
    };

    let model = toy_matrices(cfg);
    let closures = toy_closures(cfg);
    let q1_noise = Gaussian::new(vec1(0.0), scalar(cfg.q1));
    let r1_noise = Gaussian::new(vec1(0.0), scalar(cfg.r1));

    // Truth starts from the same prior the estimators are initialized with.
    let mut x1 = cfg.init_mean1 + draw(cfg.init_var1.sqrt());
    let mut x2 = cfg.init_mean2 + draw(cfg.init_var2.sqrt());

    let init1 = Gaussian::new(vec1(cfg.init_mean1), scalar(cfg.init_var1));
    let init2 = Gaussian::new(vec1(cfg.init_mean2), scalar(cfg.init_var2));

    let mut stacked = StackedKf::new(&model, &init1, &init2, FeedbackMode::Full);
    let mut sp_belief = CascadeBelief::uncorrelated(init1.clone(), 1);
    let mut lin_belief = sp_belief.clone();
    let mut naive_state = init1.clone();
    let mut spci_state = init1.clone();
    let mut feeding = LinearFeedingKf::new(init2.clone(), true);
    let mut feeding_out = FeedingOutput::new(feeding.state.clone());

    let steps = cfg.steps;
    let mut out: Vec<EstimatorTrial> = LINEAR_ESTIMATORS
        .iter()
        .map(|name| EstimatorTrial::new(name, 1, steps))
        .collect();

    for k in 0..steps {
        // Truth propagates first (receiving uses the feeding state of the
        // previous step), then both measurements are taken at the new step.
        let w1 = draw(cfg.q1.sqrt());
        let w2 = draw(cfg.q2.sqrt());
        let v1 = draw(cfg.r1.sqrt());
        let v2 = draw(cfg.r2.sqrt());
        let x1_new = x1 - x2 + w1;
        let x2_new = x2 + w2;
        x1 = x1_new;
        x2 = x2_new;
        let y1 = vec1(x1 + x2 + v1);
        let y2 = vec1(x2 + v2);

        let prev_out = feeding_out.clone();
        feeding_out = feeding.step(&model.a2, &model.q2, &model.c2, &model.r2, &y2)?;

        // Centralized baseline over the stacked state.
        stacked.step(&y2, &y1)?;

        // Sigma-point cascade with the exact cross transition published by
        // the cooperating feeding filter.
        let (sp_next, sp_defl) = cascade_step(
            &sp_belief,
            &prev_out,
            &feeding_out,
            &y1,
            &closures,
            cfg.beta,
            CorrectionGain::Marginal,
        )?;
        sp_belief = sp_next;

        // Linearized cascade on the same schedule.
        let mut lin_pred = linearized_predict(&lin_belief, &prev_out.x2, &model)?;
        let psi = feeding_out
            .psi
            .as_ref()
            .expect("cooperating feeding filter publishes its transition");
        lin_pred.cross12 = apply_psi(&lin_pred.cross12, psi)?;
        lin_belief = linearized_correct(
            &lin_pred,
            &feeding_out.x2,
            &model,
            &y1,
            CorrectionGain::Marginal,
        )?;

        // Naive cascade: feeding estimate treated as exogenous and exact.
        let naive_pred = naive_predict(
            &naive_state,
            &prev_out.x2,
            &closures.process,
            &closures.process_noise,
        )?;
        naive_state = naive_correct(
            &naive_pred,
            &feeding_out.x2,
            &closures.measure,
            &closures.measurement_noise,
            &y1,
        )?;

        // Covariance-intersection cascade.
        let spci_pred = spci_predict(
            &spci_state,
            &prev_out.x2,
            &closures.process,
            &q1_noise,
            cfg.spci_w,
        )?;
        spci_state = spci_correct(
            &spci_pred,
            &feeding_out.x2,
            &closures.measure,
            &r1_noise,
            &y1,
            cfg.spci_w,
        )?;

        let truth = vec1(x1);
        let record = |trial: &mut EstimatorTrial, mean: &DVector<f64>, cov: &DMatrix<f64>, d: u64| {
            let err = &truth - mean;
            trial.record(k, &err, cov, d)
        };
        record(
            &mut out[0],
            stacked.marginal1().mean(),
            stacked.marginal1().cov(),
            0,
        )?;
        record(
            &mut out[1],
            sp_belief.x1.mean(),
            sp_belief.x1.cov(),
            sp_defl as u64,
        )?;
        record(&mut out[2], lin_belief.x1.mean(), lin_belief.x1.cov(), 0)?;
        record(&mut out[3], naive_state.mean(), naive_state.cov(), 0)?;
        record(&mut out[4], spci_state.mean(), spci_state.cov(), 0)?;
    }

    Ok(out)
}
