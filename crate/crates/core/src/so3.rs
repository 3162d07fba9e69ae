//! Rotation matrices with the exponential/logarithm maps and a geodesic mean.
//!
//! Rotations are stored as proper orthonormal 3×3 matrices. Perturbations use
//! the right/body convention `C = C̄ · exp(δφ)`, matching the attitude filters
//! in [`crate::filters`]. Orthonormality drift is watched on construction and
//! after compositions; past a tolerance the matrix is snapped back to SO(3)
//! by polar projection (SVD with a determinant fix).
//!
//! `log_map` handles the three classic regimes: a series below `1e-8` angle,
//! the generic `θ/(2 sin θ)·vee(C − Cᵀ)` branch, and the near-`π` branch where
//! the skew part vanishes and the axis is recovered from the dominant
//! eigenvector of the symmetric part.

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

/// Orthonormality drift (∞-norm of `CᵀC − I`) above which we re-project.
const ORTHO_TOL: f64 = 1e-9;

/// Angle below which the exp/log series expansions are used.
const SMALL_ANGLE: f64 = 1e-8;

/// Angle margin to π below which the symmetric-part branch is used.
const NEAR_PI: f64 = 1e-6;

/// Iteration cap and convergence tolerance for the geodesic mean.
const MEAN_MAX_ITERS: usize = 100;
const MEAN_TOL: f64 = 1e-10;

/// Skew-symmetric cross-product matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]: extracts the vector from a skew-symmetric matrix.
fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A rotation matrix constrained to SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3 {
    matrix: Matrix3<f64>,
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    /// Wraps a matrix, re-projecting onto SO(3) if drift exceeds tolerance.
    pub fn from_matrix(matrix: Matrix3<f64>) -> Self {
        let drift = (matrix.transpose() * matrix - Matrix3::identity()).abs().max();
        if drift > ORTHO_TOL {
            Self {
                matrix: polar_project(&matrix),
            }
        } else {
            Self { matrix }
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// Exponential map: Rodrigues' formula with a series fallback for tiny
    /// angles (`I + Φ + Φ²/2` below the switch point).
    pub fn exp_map(phi: &Vector3<f64>) -> Self {
        let theta = phi.norm();
        let phi_x = skew(phi);
        let matrix = if theta < SMALL_ANGLE {
            Matrix3::identity() + phi_x + phi_x * phi_x * 0.5
        } else {
            let a = theta.sin() / theta;
            let b = (1.0 - theta.cos()) / (theta * theta);
            Matrix3::identity() + phi_x * a + phi_x * phi_x * b
        };
        // Rodrigues output is orthonormal to rounding; no projection needed.
        Self { matrix }
    }

    /// Logarithm map returning a rotation vector with norm in `[0, π]`.
    pub fn log_map(&self) -> Vector3<f64> {
        let c = &self.matrix;
        let cos_theta = ((c.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let theta = cos_theta.acos();
        if theta < SMALL_ANGLE {
            // log ≈ vee(C − Cᵀ)/2 to second order.
            return vee(&(c - c.transpose())) * 0.5;
        }
        if theta > std::f64::consts::PI - NEAR_PI {
            // The skew part vanishes at π; the axis is the unit eigenvector
            // of the symmetric part with eigenvalue 1 (largest of the three).
            let sym = (c + c.transpose()) * 0.5;
            let eig = nalgebra::SymmetricEigen::new(sym);
            let mut max_idx = 0;
            for i in 1..3 {
                if eig.eigenvalues[i] > eig.eigenvalues[max_idx] {
                    max_idx = i;
                }
            }
            let mut axis = eig.eigenvectors.column(max_idx).into_owned();
            axis.normalize_mut();
            // Keep whatever sign information survives in the skew part; at
            // exactly π both signs are equivalent.
            let skew_axis = vee(&(c - c.transpose()));
            if axis.dot(&skew_axis) < 0.0 {
                axis = -axis;
            }
            return axis * theta;
        }
        vee(&(c - c.transpose())) * (theta / (2.0 * theta.sin()))
    }

    /// Rotation composition `self · other` (with drift-checked construction).
    pub fn compose(&self, other: &Rotation3) -> Self {
        Self::from_matrix(self.matrix * other.matrix)
    }

    pub fn inverse(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
        }
    }

    /// Applies the rotation to a vector.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }

    /// Applies the inverse rotation to a vector.
    pub fn rotate_inv(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix.transpose() * v
    }

    /// Tangent vector taking `self` to `other`: `log(selfᵀ · other)`.
    pub fn tangent_to(&self, other: &Rotation3) -> Vector3<f64> {
        Self {
            matrix: self.matrix.transpose() * other.matrix,
        }
        .log_map()
    }
}

/// Projects a near-orthonormal matrix onto SO(3) via SVD (`U Vᵀ`, with the
/// last column of `U` flipped when the determinant comes out negative).
fn polar_project(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = nalgebra::SVD::new(*m, true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fixed = u;
        let mut col = u_fixed.column_mut(2);
        col *= -1.0;
        r = u_fixed * v_t;
    }
    r
}

/// Riemannian (geodesic) L2 mean of a set of rotations.
///
/// Fixed-point iteration `C ← C · exp((1/N) Σ log(Cᵀ Cᵢ))` seeded with the
/// first element, stopping when the tangent increment norm drops below
/// `1e-10`. Errors with [`Error::NoConvergence`] after 100 iterations and
/// [`Error::DimensionMismatch`] on an empty input.
pub fn geodesic_mean(rotations: &[Rotation3]) -> Result<Rotation3> {
    if rotations.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let mut mean = rotations[0];
    for _ in 0..MEAN_MAX_ITERS {
        let mut tangent = Vector3::zeros();
        for r in rotations {
            tangent += mean.tangent_to(r);
        }
        tangent /= rotations.len() as f64;
        if tangent.norm() < MEAN_TOL {
            return Ok(mean);
        }
        mean = mean.compose(&Rotation3::exp_map(&tangent));
    }
    Err(Error::NoConvergence)
}
