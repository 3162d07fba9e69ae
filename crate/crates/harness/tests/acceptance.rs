//! End-to-end acceptance run: every shipped claim about the estimator zoo is
//! checked here, one PASS/FAIL line per criterion, against the default
//! configurations and fixed seeds. Runs without the libtest harness so the
//! verdict lines always reach the terminal; the process exits non-zero if
//! any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use cascade_core::filters::{
    apply_psi, cascade_correct, cascade_predict, linearized_correct, linearized_predict,
    CascadeBelief, CorrectionGain, FeedbackMode, FeedingOutput, LinearCascadeModel,
    LinearFeedingKf, StackedKf,
};
use cascade_core::gaussian::{kl_divergence, Gaussian, JointGaussian2};
use cascade_core::sigma::{cubature_points, transform, BlockLayout};
use cascade_core::so3::Rotation3;
use cascade_fuse::config::{LinearToyConfig, NonlinearConfig};
use cascade_fuse::runner::{run_linear, run_nonlinear, write_outputs, RunOutcome};

const SEED: u64 = 42;

struct Tally {
    failed: Vec<&'static str>,
}

impl Tally {
    fn new() -> Self {
        Tally { failed: Vec::new() }
    }

    fn check(&mut self, name: &'static str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {name}: {detail}");
        if !pass {
            self.failed.push(name);
        }
    }
}

fn main() {
    let mut tally = Tally::new();

    // One Monte Carlo bundle per scenario feeds several criteria.
    let lin_cfg = LinearToyConfig::default();
    let started = Instant::now();
    let lin = run_linear(&lin_cfg, SEED, 0).expect("linear scenario runs");
    let lin_elapsed = started.elapsed();

    criterion_1_linear_consistency(&mut tally, &lin, lin_elapsed);
    criterion_2_linear_accuracy_ratios(&mut tally, &lin);

    let nl_cfg = NonlinearConfig::default();
    let started = Instant::now();
    let nl = run_nonlinear(&nl_cfg, SEED, 0).expect("nonlinear scenario runs");
    let nl_elapsed = started.elapsed();

    criterion_3_nonlinear_ordering(&mut tally, &nl, nl_elapsed);
    criterion_4_nonlinear_consistency(&mut tally, &nl);
    criterion_5_intersection_weight(&mut tally, &nl_cfg);
    criterion_6_linearized_equals_sigma_point(&mut tally);
    criterion_7_exact_transition_oracle(&mut tally);
    criterion_8_primitive_properties(&mut tally);
    criterion_9_determinism(&mut tally);

    if tally.failed.is_empty() {
        println!("all 9 criteria passed");
    } else {
        println!("failed criteria: {}", tally.failed.join(", "));
        std::process::exit(1);
    }
}

/// Consistency on the scalar toy: the cascade that tracks the
/// cross-covariance stays inside the chi-square envelope, while the
/// independence-assuming estimator locks above the upper bound.
fn criterion_1_linear_consistency(tally: &mut Tally, lin: &RunOutcome, elapsed: Duration) {
    let proposed = lin.estimator("proposed-sp");
    let fraction = proposed.nees_within_fraction();

    let naive = lin.estimator("naive");
    let after = &naive.nees_mean[200..];
    let above = after.iter().filter(|&&v| v > naive.nees_upper).count();
    let above_fraction = above as f64 / after.len() as f64;

    let budget = Duration::from_secs(120);
    let pass = fraction >= 0.90 && above_fraction >= 0.50 && elapsed < budget;
    tally.check(
        "1 linear consistency",
        pass,
        format!(
            "cascade in-bounds {:.1}% (need >= 90%), naive above upper after step 200 \
             {:.1}% (need >= 50%), {:.1}s (budget 120s)",
            100.0 * fraction,
            100.0 * above_fraction,
            elapsed.as_secs_f64()
        ),
    );
}

/// Accuracy ratios on the scalar toy against the centralized reference.
fn criterion_2_linear_accuracy_ratios(tally: &mut Tally, lin: &RunOutcome) {
    let full = lin.estimator("full").rmse;
    let proposed = lin.estimator("proposed-sp").rmse / full;
    let naive = lin.estimator("naive").rmse / full;

    let pass = (1.30..=1.60).contains(&proposed) && (1.70..=2.10).contains(&naive);
    tally.check(
        "2 linear accuracy ratios",
        pass,
        format!(
            "proposed/full {proposed:.3} (need 1.30..1.60), naive/full {naive:.3} \
             (need 1.70..2.10)"
        ),
    );
}

/// Strapdown scenario: strict position-RMSE ordering across the estimator
/// zoo, ratio windows against the centralized filter, the attitude penalty
/// of the standalone feeding filter, and the divergence ordering.
fn criterion_3_nonlinear_ordering(tally: &mut Tally, nl: &RunOutcome, elapsed: Duration) {
    let full = nl.estimator("full");
    let sp = nl.estimator("proposed-sp");
    let spci = nl.estimator("spci");
    let naive = nl.estimator("naive");
    let ahrs = nl.estimator("ahrs");

    let ordered = full.pos_rmse < sp.pos_rmse
        && sp.pos_rmse < spci.pos_rmse
        && spci.pos_rmse < naive.pos_rmse;
    let sp_ratio = sp.pos_rmse / full.pos_rmse;
    let naive_ratio = naive.pos_rmse / full.pos_rmse;
    let att_ratio = ahrs.rmse / full.att_rmse.expect("full filter reports attitude");
    let kl_ordered = sp.mean_kl() < naive.mean_kl();

    let budget = Duration::from_secs(600);
    let pass = ordered
        && (1.2..=1.7).contains(&sp_ratio)
        && naive_ratio > 2.0
        && (1.3..=2.1).contains(&att_ratio)
        && kl_ordered
        && elapsed < budget;
    tally.check(
        "3 nonlinear ordering",
        pass,
        format!(
            "position RMSE full {:.4} < cascade {:.4} < intersection {:.4} < naive {:.4} \
             ({}), cascade/full {:.2} (need 1.2..1.7), naive/full {:.2} (need > 2.0), \
             attitude feeding/full {:.2} (need 1.3..2.1), divergence ordered {}, {:.1}s \
             (budget 600s)",
            full.pos_rmse,
            sp.pos_rmse,
            spci.pos_rmse,
            naive.pos_rmse,
            if ordered { "ordered" } else { "NOT ordered" },
            sp_ratio,
            naive_ratio,
            att_ratio,
            kl_ordered,
            elapsed.as_secs_f64()
        ),
    );
}

/// The cascaded filter's mean NEES stays inside the chi-square envelope for
/// the required share of steps.
fn criterion_4_nonlinear_consistency(tally: &mut Tally, nl: &RunOutcome) {
    let fraction = nl.estimator("proposed-sp").nees_within_fraction();
    tally.check(
        "4 nonlinear consistency",
        fraction >= 0.85,
        format!("cascade in-bounds {:.1}% (need >= 85%)", 100.0 * fraction),
    );
}

/// The shipped covariance-intersection weight beats the plausible
/// alternatives on a small sweep.
fn criterion_5_intersection_weight(tally: &mut Tally, base: &NonlinearConfig) {
    let mut rmse = Vec::new();
    for w in [0.5, 0.9, 0.99] {
        let cfg = NonlinearConfig {
            trials: 25,
            spci_w: w,
            ..base.clone()
        };
        let outcome = run_nonlinear(&cfg, SEED, 0).expect("sweep runs");
        rmse.push((w, outcome.estimator("spci").pos_rmse));
    }
    let best = rmse
        .iter()
        .cloned()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    tally.check(
        "5 intersection weight default",
        best.0 == 0.99,
        format!(
            "position RMSE by weight: {}",
            rmse.iter()
                .map(|(w, r)| format!("w={w}: {r:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

fn random_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Random square matrix with max-row-sum norm capped, so 200-step recursions
/// stay bounded.
fn random_stable(rng: &mut ChaCha12Rng, n: usize, bound: f64) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    let norm = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    m * (bound / norm.max(bound))
}

fn random_spd(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n, scale);
    &a * a.transpose() + DMatrix::identity(n, n) * (0.1 * scale * scale)
}

/// Random affine cascade model; `direct_feedthrough` controls whether the
/// receiving measurement also sees the feeding state.
fn random_model(rng: &mut ChaCha12Rng, direct_feedthrough: bool) -> LinearCascadeModel {
    let n1 = rng.gen_range(1..=3);
    let n2 = rng.gen_range(1..=3);
    let m1 = rng.gen_range(1..=2);
    let m2 = rng.gen_range(1..=2);
    let d1 = if direct_feedthrough {
        random_matrix(rng, m1, n2, 1.0)
    } else {
        DMatrix::zeros(m1, n2)
    };
    LinearCascadeModel {
        a1: random_stable(rng, n1, 0.95),
        b1: random_matrix(rng, n1, n2, 0.8),
        l1: random_matrix(rng, n1, n1, 1.0),
        c1: random_matrix(rng, m1, n1, 1.0),
        d1,
        m1: random_matrix(rng, m1, m1, 1.0),
        q1: random_spd(rng, n1, 0.7),
        r1: random_spd(rng, m1, 0.7),
        a2: random_stable(rng, n2, 0.95),
        l2: DMatrix::identity(n2, n2),
        c2: random_matrix(rng, m2, n2, 1.0),
        m2: DMatrix::identity(m2, m2),
        q2: random_spd(rng, n2, 0.7),
        r2: random_spd(rng, m2, 0.7),
        psi_hat: DMatrix::identity(n2, n2),
    }
}

struct CascadeRun {
    sigma: CascadeBelief,
    linearized: CascadeBelief,
    stacked: StackedKf,
    worst_sigma_vs_lin: f64,
    worst_cascade_vs_stacked: f64,
}

/// Advances the sigma-point cascade, the linearized cascade, and the
/// block-restricted stacked Kalman filter over the same measurement stream,
/// recording the worst per-step block discrepancies.
fn run_three_paths(seed: u64, steps: usize, direct_feedthrough: bool) -> CascadeRun {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let model = random_model(&mut rng, direct_feedthrough);
    let (n1, n2) = (model.dim1(), model.dim2());
    let (m1_dim, m2_dim) = (model.c1.nrows(), model.c2.nrows());

    let init1 = Gaussian::new(
        random_matrix(&mut rng, n1, 1, 1.0).column(0).into_owned(),
        random_spd(&mut rng, n1, 0.8),
    );
    let init2 = Gaussian::new(
        random_matrix(&mut rng, n2, 1, 1.0).column(0).into_owned(),
        random_spd(&mut rng, n2, 0.8),
    );

    let mut run = CascadeRun {
        sigma: CascadeBelief::uncorrelated(init1.clone(), n2),
        linearized: CascadeBelief::uncorrelated(init1.clone(), n2),
        stacked: StackedKf::new(&model, &init1, &init2, FeedbackMode::NoFeedback),
        worst_sigma_vs_lin: 0.0,
        worst_cascade_vs_stacked: 0.0,
    };
    let mut feeding = LinearFeedingKf::new(init2, true);
    let mut feeding_out = FeedingOutput::new(feeding.state.clone());

    let q2_eff = &model.l2 * &model.q2 * model.l2.transpose();
    let r2_eff = &model.m2 * &model.r2 * model.m2.transpose();

    for _ in 0..steps {
        let y2 = DVector::from_fn(m2_dim, |_, _| rng.gen_range(-2.0..2.0));
        let y1 = DVector::from_fn(m1_dim, |_, _| rng.gen_range(-2.0..2.0));

        let prev_out = feeding_out.clone();
        feeding_out = feeding
            .step(&model.a2, &q2_eff, &model.c2, &r2_eff, &y2)
            .expect("feeding filter steps");
        let psi = feeding_out.psi.clone().expect("cooperative feeding filter");

        let (mut sigma_pred, _) = cascade_predict(
            &run.sigma,
            &prev_out.x2,
            |x1, x2, w| &model.a1 * x1 + &model.b1 * x2 + &model.l1 * w,
            &model.q1,
            0.9,
        )
        .expect("sigma predict");
        sigma_pred.cross12 = apply_psi(&sigma_pred.cross12, &psi).expect("cross advance");
        let (sigma_post, _) = cascade_correct(
            &sigma_pred,
            &feeding_out.x2,
            |x1, x2, v| &model.c1 * x1 + &model.d1 * x2 + &model.m1 * v,
            &model.r1,
            &y1,
            0.9,
            CorrectionGain::Marginal,
        )
        .expect("sigma correct");
        run.sigma = sigma_post;

        let mut lin_pred =
            linearized_predict(&run.linearized, &prev_out.x2, &model).expect("linearized predict");
        lin_pred.cross12 = apply_psi(&lin_pred.cross12, &psi).expect("cross advance");
        run.linearized = linearized_correct(
            &lin_pred,
            &feeding_out.x2,
            &model,
            &y1,
            CorrectionGain::Marginal,
        )
        .expect("linearized correct");

        run.stacked.step(&y2, &y1).expect("stacked filter steps");

        let mean = (run.sigma.x1.mean() - run.linearized.x1.mean()).abs().max();
        let cov = (run.sigma.x1.cov() - run.linearized.x1.cov()).abs().max();
        let cross = (&run.sigma.cross12 - &run.linearized.cross12).abs().max();
        run.worst_sigma_vs_lin = run.worst_sigma_vs_lin.max(mean).max(cov).max(cross);

        let cov = (run.stacked.marginal1().cov() - run.sigma.x1.cov()).abs().max();
        let cross = (&run.stacked.cross12() - &run.sigma.cross12).abs().max();
        run.worst_cascade_vs_stacked = run.worst_cascade_vs_stacked.max(cov).max(cross);
    }
    run
}

/// The linearized cascade and the sigma-point cascade are algebraically the
/// same filter on affine models; they must agree to numerical precision.
fn criterion_6_linearized_equals_sigma_point(tally: &mut Tally) {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let run = run_three_paths(seed, 40, true);
        worst = worst.max(run.worst_sigma_vs_lin);
    }
    tally.check(
        "6 linearized equals sigma-point",
        worst < 1e-9,
        format!("worst per-step block deviation over 100 random systems {worst:.2e} (need < 1e-9)"),
    );
}

/// With no direct feedthrough and the exact per-step cross-transition
/// factor, the cascade reproduces the receiving covariance and the cross
/// block of the jointly propagated Kalman filter with block-restricted
/// gains.
fn criterion_7_exact_transition_oracle(tally: &mut Tally) {
    let mut worst: f64 = 0.0;
    for seed in 1000..1020 {
        let run = run_three_paths(seed, 200, false);
        worst = worst.max(run.worst_cascade_vs_stacked);
    }
    tally.check(
        "7 exact cross-transition oracle",
        worst < 1e-9,
        format!("worst (P1, P12) deviation over 20 systems x 200 steps {worst:.2e} (need < 1e-9)"),
    );
}

/// Primitive-level properties: cubature transform exactness on affine maps,
/// rotation exp/log round trips, Gaussian conditioning against the textbook
/// formula, and closed-form KL divergence values.
fn criterion_8_primitive_properties(tally: &mut Tally) {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut worst_affine: f64 = 0.0;
    let mut worst_roundtrip: f64 = 0.0;
    let mut worst_conditioning: f64 = 0.0;
    let mut worst_kl: f64 = 0.0;

    for _ in 0..200 {
        // Cubature transform of an affine map reproduces mean, covariance,
        // and cross-covariance exactly.
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=4);
        let g = Gaussian::new(
            random_matrix(&mut rng, n, 1, 3.0).column(0).into_owned(),
            random_spd(&mut rng, n, 1.0),
        );
        let a = random_matrix(&mut rng, m, n, 2.0);
        let b = random_matrix(&mut rng, m, 1, 2.0).column(0).into_owned();
        let pts = cubature_points(&g).expect("sigma points");
        let layout = BlockLayout::new(&[("x", n)]);
        let out = transform(&pts, |z| &a * z + &b, &layout).expect("transform");
        worst_affine = worst_affine
            .max((&out.mean - (&a * g.mean() + &b)).abs().max())
            .max((&out.cov - &a * g.cov() * a.transpose()).abs().max())
            .max((out.cross_cov("x").unwrap() - g.cov() * a.transpose()).abs().max());

        // Rotation logarithm inverts the exponential inside the injectivity
        // radius.
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if axis.norm() > 1e-3 {
            let phi = axis.normalize() * rng.gen_range(1e-6..3.1);
            let back = Rotation3::exp_map(&phi).log_map();
            worst_roundtrip = worst_roundtrip.max((back - phi).norm());
        }

        // Conditioning through Cholesky solves equals the explicit-inverse
        // formula.
        let n1 = rng.gen_range(1..=3);
        let n2 = rng.gen_range(1..=3);
        let cov11 = random_spd(&mut rng, n1, 1.0);
        let cov22 = random_spd(&mut rng, n2, 1.0) + DMatrix::identity(n2, n2);
        let cov12 = random_matrix(&mut rng, n1, n2, 0.3);
        let mean1 = random_matrix(&mut rng, n1, 1, 2.0).column(0).into_owned();
        let mean2 = random_matrix(&mut rng, n2, 1, 2.0).column(0).into_owned();
        let joint = JointGaussian2::new(
            mean1.clone(),
            mean2.clone(),
            cov11.clone(),
            cov22.clone(),
            cov12.clone(),
        );
        let obs = random_matrix(&mut rng, n2, 1, 2.0).column(0).into_owned();
        let got = joint.condition_on_second(&obs).expect("conditioning");
        let inv22 = cov22.clone().try_inverse().expect("regular block");
        let want_mean = &mean1 + &cov12 * &inv22 * (&obs - &mean2);
        let want_cov = &cov11 - &cov12 * &inv22 * cov12.transpose();
        worst_conditioning = worst_conditioning
            .max((got.mean() - want_mean).abs().max())
            .max((got.cov() - want_cov).abs().max());
    }

    // Closed-form KL values: identical pair, pure mean shift, pure scaling.
    let std2 = Gaussian::standard(2);
    worst_kl = worst_kl.max(kl_divergence(&std2, &std2).abs());
    let shifted = Gaussian::new(DVector::from_row_slice(&[0.7, -1.1]), DMatrix::identity(2, 2));
    let want = 0.5 * (0.7f64 * 0.7 + 1.1 * 1.1);
    worst_kl = worst_kl.max((kl_divergence(&shifted, &std2) - want).abs());
    let sigma2 = 2.5f64;
    let scaled = Gaussian::new(DVector::zeros(3), DMatrix::identity(3, 3) * sigma2);
    let want = 0.5 * 3.0 * (1.0 / sigma2 - 1.0 + sigma2.ln());
    worst_kl = worst_kl.max((kl_divergence(&Gaussian::standard(3), &scaled) - want).abs());

    let elapsed = started.elapsed();
    let pass = worst_affine < 1e-9
        && worst_roundtrip < 1e-8
        && worst_conditioning < 1e-9
        && worst_kl < 1e-12
        && elapsed < Duration::from_secs(30);
    tally.check(
        "8 primitive properties",
        pass,
        format!(
            "affine cubature {worst_affine:.2e} (< 1e-9), exp/log round trip \
             {worst_roundtrip:.2e} (< 1e-8), conditioning {worst_conditioning:.2e} (< 1e-9), \
             closed-form KL {worst_kl:.2e} (< 1e-12), {:.1}s (budget 30s)",
            elapsed.as_secs_f64()
        ),
    );
}

/// Byte-identical outputs for a fixed seed, independent of worker count and
/// of rerunning.
fn criterion_9_determinism(tally: &mut Tally) {
    let lin_cfg = LinearToyConfig {
        trials: 40,
        steps: 200,
        ..LinearToyConfig::default()
    };
    let nl_cfg = NonlinearConfig {
        trials: 6,
        duration_s: 4.0,
        ..NonlinearConfig::default()
    };
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg_json = serde_json::json!({ "acceptance": "determinism probe" });

    let write = |name: &str, outcome: &RunOutcome| {
        let dir = tmp.path().join(name);
        write_outputs(outcome, &dir, &cfg_json).expect("outputs written");
        dir
    };

    let lin_w1 = write("lin_w1", &run_linear(&lin_cfg, SEED, 1).unwrap());
    let lin_w4 = write("lin_w4", &run_linear(&lin_cfg, SEED, 4).unwrap());
    let nl_w1 = write("nl_w1", &run_nonlinear(&nl_cfg, SEED, 1).unwrap());
    let nl_w3 = write("nl_w3", &run_nonlinear(&nl_cfg, SEED, 3).unwrap());
    let nl_w3_again = write("nl_w3_again", &run_nonlinear(&nl_cfg, SEED, 3).unwrap());

    let lin_same = dirs_identical(&lin_w1, &lin_w4);
    let nl_same = dirs_identical(&nl_w1, &nl_w3);
    let rerun_same = dirs_identical(&nl_w3, &nl_w3_again);

    tally.check(
        "9 determinism",
        lin_same && nl_same && rerun_same,
        format!(
            "linear workers 1 vs 4 identical {lin_same}, nonlinear workers 1 vs 3 identical \
             {nl_same}, rerun identical {rerun_same}"
        ),
    );
}

/// Recursively compares two directories by relative path and file bytes.
fn dirs_identical(a: &Path, b: &Path) -> bool {
    let list = |root: &Path| -> Vec<std::path::PathBuf> {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).expect("readable dir") {
                let path = entry.expect("dir entry").path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push(path.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        files.sort();
        files
    };
    let files_a = list(a);
    if files_a != list(b) {
        return false;
    }
    files_a.iter().all(|rel| {
        std::fs::read(a.join(rel)).expect("readable file")
            == std::fs::read(b.join(rel)).expect("readable file")
    })
}
