//! Gaussian containers and the covariance plumbing shared by every filter.
//!
//! Two invariants are enforced at construction time and preserved by every
//! operation here:
//!
//! 1. covariances are stored symmetrized — `(P + Pᵀ)/2` — so downstream
//!    factorizations never see asymmetric rounding noise;
//! 2. factorization failures are handled in one place, [`cholesky_psd`],
//!    which retries once with a trace-scaled jitter before giving up.
//!
//! [`JointGaussian2`] models a two-block joint distribution. Its off-diagonal
//! block is the quantity the cascaded filters approximate, and because the
//! approximation can overshoot, the joint may momentarily be indefinite;
//! [`JointGaussian2::deflate_to_psd`] shrinks the cross block geometrically
//! until the joint factorizes again.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative jitter applied on the one-shot factorization retry.
pub(crate) const JITTER_SCALE: f64 = 1e-12;

/// Hard cap on deflation rounds; reaching it zeroes the cross block outright.
const MAX_DEFLATIONS: usize = 1000;

/// Returns the symmetric part `(m + mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    s += m.transpose();
    s *= 0.5;
    s
}

/// A Cholesky factorization obtained with the one-shot jitter fallback,
/// usable for triangular solves without ever forming an inverse.
pub struct PsdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl PsdFactor {
    /// Factorizes a (possibly barely) PSD matrix.
    ///
    /// Tries the plain factorization first; on failure adds
    /// `1e-12 · trace/n` to the diagonal and retries once. Returns
    /// [`Error::NotPositiveDefinite`] if the jittered matrix still fails.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let sym = symmetrize(cov);
        if let Some(chol) = nalgebra::Cholesky::new(sym.clone()) {
            return Ok(Self { chol });
        }
        let n = sym.nrows().max(1);
        let jitter = JITTER_SCALE * sym.trace().abs() / n as f64;
        let jittered = sym + DMatrix::identity(cov.nrows(), cov.ncols()) * jitter;
        nalgebra::Cholesky::new(jittered)
            .map(|chol| Self { chol })
            .ok_or(Error::NotPositiveDefinite)
    }

    /// Lower-triangular factor `L` with `L Lᵀ` equal to the (jittered) input.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Solves `A x = rhs` for a matrix right-hand side.
    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// Solves `A x = rhs` for a vector right-hand side.
    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// Sum of `ln` of the factor diagonal, i.e. `½ ln det A`.
    pub fn half_log_det(&self) -> f64 {
        self.chol.l().diagonal().iter().map(|d| d.ln()).sum()
    }
}

/// Lower-triangular Cholesky factor of a (possibly barely) PSD matrix; see
/// [`PsdFactor::new`] for the jitter semantics.
pub fn cholesky_psd(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    PsdFactor::new(cov).map(|f| f.lower())
}

/// A multivariate Gaussian with a symmetrized covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian, symmetrizing the covariance.
    ///
    /// Panics if the covariance shape does not match the mean length; that is
    /// a programming error, not a runtime condition.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        assert_eq!(
            mean.len(),
            cov.nrows(),
            "covariance rows must match mean length"
        );
        assert_eq!(cov.nrows(), cov.ncols(), "covariance must be square");
        let cov = symmetrize(&cov);
        Self { mean, cov }
    }

    /// Standard normal of the given dimension.
    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance (with the jitter fallback).
    pub fn cov_factor(&self) -> Result<DMatrix<f64>> {
        cholesky_psd(&self.cov)
    }
}

/// A two-block joint Gaussian over `(x1, x2)`.
///
/// The cross block is stored as `cov12 = Cov(x1, x2)` with shape
/// `dim1 × dim2`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian2 {
    pub mean1: DVector<f64>,
    pub mean2: DVector<f64>,
    pub cov11: DMatrix<f64>,
    pub cov22: DMatrix<f64>,
    pub cov12: DMatrix<f64>,
}

impl JointGaussian2 {
    /// Builds the joint, symmetrizing the diagonal blocks and checking shapes.
    pub fn new(
        mean1: DVector<f64>,
        mean2: DVector<f64>,
        cov11: DMatrix<f64>,
        cov22: DMatrix<f64>,
        cov12: DMatrix<f64>,
    ) -> Self {
        assert_eq!(mean1.len(), cov11.nrows());
        assert_eq!(mean2.len(), cov22.nrows());
        assert_eq!(cov12.nrows(), mean1.len(), "cov12 rows must match x1");
        assert_eq!(cov12.ncols(), mean2.len(), "cov12 cols must match x2");
        Self {
            mean1,
            mean2,
            cov11: symmetrize(&cov11),
            cov22: symmetrize(&cov22),
            cov12,
        }
    }

    pub fn dim1(&self) -> usize {
        self.mean1.len()
    }

    pub fn dim2(&self) -> usize {
        self.mean2.len()
    }

    /// Stacks the blocks into a single Gaussian over `(x1, x2)`.
    pub fn assemble(&self) -> Gaussian {
        let (n1, n2) = (self.dim1(), self.dim2());
        let mut mean = DVector::zeros(n1 + n2);
        mean.rows_mut(0, n1).copy_from(&self.mean1);
        mean.rows_mut(n1, n2).copy_from(&self.mean2);
        let mut cov = DMatrix::zeros(n1 + n2, n1 + n2);
        cov.view_mut((0, 0), (n1, n1)).copy_from(&self.cov11);
        cov.view_mut((n1, n1), (n2, n2)).copy_from(&self.cov22);
        cov.view_mut((0, n1), (n1, n2)).copy_from(&self.cov12);
        cov.view_mut((n1, 0), (n2, n1))
            .copy_from(&self.cov12.transpose());
        Gaussian::new(mean, cov)
    }

    /// Conditions `x1` on an observed value of `x2`.
    ///
    /// Returns `N(mean1 + cov12·cov22⁻¹·(obs − mean2),
    /// cov11 − cov12·cov22⁻¹·cov12ᵀ)`, solving through the Cholesky factor of
    /// `cov22` rather than forming an inverse. Fails with
    /// [`Error::SingularConditioning`] when `cov22` cannot be factorized.
    pub fn condition_on_second(&self, observed2: &DVector<f64>) -> Result<Gaussian> {
        if observed2.len() != self.dim2() {
            return Err(Error::DimensionMismatch {
                expected: self.dim2(),
                found: observed2.len(),
            });
        }
        let chol = PsdFactor::new(&self.cov22).map_err(|_| Error::SingularConditioning)?;
        // cov22⁻¹ (obs − mean2) and cov22⁻¹ cov12ᵀ via triangular solves.
        let innov = observed2 - &self.mean2;
        let mean = &self.mean1 + &self.cov12 * chol.solve_vec(&innov);
        let cov = &self.cov11 - &self.cov12 * chol.solve_mat(&self.cov12.transpose());
        Ok(Gaussian::new(mean, cov))
    }

    /// Shrinks the cross block by `beta` per round until the assembled joint
    /// admits a (jittered) Cholesky factorization.
    ///
    /// Returns the repaired joint and the number of deflation rounds applied.
    /// With PSD diagonal blocks this terminates because the cross block decays
    /// geometrically toward the block-diagonal (PSD) limit; as a hard
    /// backstop the cross block is zeroed after `MAX_DEFLATIONS` rounds.
    pub fn deflate_to_psd(&self, beta: f64) -> (JointGaussian2, usize) {
        let mut joint = self.clone();
        let mut count = 0;
        loop {
            if cholesky_psd(joint.assemble().cov()).is_ok() {
                return (joint, count);
            }
            if count >= MAX_DEFLATIONS {
                joint.cov12.fill(0.0);
                return (joint, count);
            }
            joint.cov12 *= beta;
            count += 1;
        }
    }
}

/// KL divergence `D(p ‖ q)` between Gaussians of equal dimension, in nats.
///
/// Computed through the Cholesky factors as
/// `½(tr(Σq⁻¹Σp) + Δμᵀ Σq⁻¹ Δμ − n + ln det Σq − ln det Σp)` and clamped at
/// zero so identical arguments report exactly `0`. Returns `+∞` when `q` is
/// not factorizable (the divergence is unbounded in that direction).
pub fn kl_divergence(p: &Gaussian, q: &Gaussian) -> f64 {
    assert_eq!(p.dim(), q.dim(), "KL divergence needs equal dimensions");
    let n = p.dim() as f64;
    let chol_q = match PsdFactor::new(q.cov()) {
        Ok(c) => c,
        Err(_) => return f64::INFINITY,
    };
    let chol_p = match PsdFactor::new(p.cov()) {
        Ok(c) => c,
        Err(_) => return f64::INFINITY,
    };
    let trace_term = chol_q.solve_mat(p.cov()).trace();
    let dmu = q.mean() - p.mean();
    let maha = dmu.dot(&chol_q.solve_vec(&dmu));
    (0.5 * (trace_term + maha - n) + chol_q.half_log_det() - chol_p.half_log_det()).max(0.0)
}
