//! Spherical-cubature sigma points and the block-aware statistics transform.
//!
//! An `L`-dimensional Gaussian is represented by `2L` equally weighted points
//! `v̂ ± √L · colᵢ(L)` where `L Lᵀ` is the covariance. Pushing the points
//! through a nonlinearity and re-collecting sample statistics gives the
//! propagated mean/covariance plus, crucially for cascaded filtering, the
//! cross-covariance between any named slice of the *input* and the output.
//!
//! The transform is exact for affine maps, which is the workhorse test oracle
//! for everything downstream; for even nonlinearities it collapses (e.g.
//! `x ↦ x²` on a symmetric distribution yields zero spread), a documented
//! property of this point set rather than a bug.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Named contiguous slices of a sigma-point input vector.
///
/// Blocks are laid out consecutively from index 0 and may cover only a prefix
/// of the input (trailing noise dimensions are typically left unnamed).
#[derive(Debug, Clone, Default)]
pub struct BlockLayout {
    blocks: Vec<(&'static str, usize)>,
}

impl BlockLayout {
    pub fn new(blocks: &[(&'static str, usize)]) -> Self {
        Self {
            blocks: blocks.to_vec(),
        }
    }

    /// Total length covered by the named blocks.
    pub fn covered_len(&self) -> usize {
        self.blocks.iter().map(|(_, len)| len).sum()
    }

    /// Start offset and length of a named block.
    pub fn span(&self, name: &str) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (block, len) in &self.blocks {
            if *block == name {
                return Some((offset, *len));
            }
            offset += len;
        }
        None
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.blocks.iter().map(|(name, _)| *name)
    }
}

/// The `2L` cubature points of a source Gaussian.
#[derive(Debug, Clone)]
pub struct SigmaPointSet {
    points: Vec<DVector<f64>>,
    source_mean: DVector<f64>,
}

impl SigmaPointSet {
    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn source_mean(&self) -> &DVector<f64> {
        &self.source_mean
    }

    pub fn dim(&self) -> usize {
        self.source_mean.len()
    }
}

/// Result of pushing a sigma-point set through a function.
#[derive(Debug, Clone)]
pub struct TransformResult {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    cross: Vec<(&'static str, DMatrix<f64>)>,
}

impl TransformResult {
    /// Cross-covariance `Cov(input block, output)` for a named block,
    /// shaped `block_len × output_dim`.
    pub fn cross_cov(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.cross
            .iter()
            .find(|(block, _)| *block == name)
            .map(|(_, m)| m)
    }
}

/// Generates the spherical-cubature point set of `g`: `mean ± √L·colᵢ(L)`.
///
/// Points `0..L` carry the `+` sign, points `L..2L` the `−` sign, so the
/// sample mean of the set equals the source mean exactly.
pub fn cubature_points(g: &crate::gaussian::Gaussian) -> Result<SigmaPointSet> {
    let l = g.dim();
    if l == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let factor = g.cov_factor()?;
    let scale = (l as f64).sqrt();
    let mut points = Vec::with_capacity(2 * l);
    for i in 0..l {
        points.push(g.mean() + factor.column(i) * scale);
    }
    for i in 0..l {
        points.push(g.mean() - factor.column(i) * scale);
    }
    Ok(SigmaPointSet {
        points,
        source_mean: g.mean().clone(),
    })
}

/// Propagates the point set through `f` and collects sample statistics.
///
/// Returns the output mean `(1/2L)Σ zᵢ`, the symmetrized output covariance,
/// and for each named input block `b` the cross-covariance
/// `(1/2L)Σ (sᵢ[b] − mean[b])(zᵢ − ẑ)ᵀ`. Evaluations and reductions run in
/// point-index order so results are bit-reproducible.
pub fn transform<F>(
    points: &SigmaPointSet,
    f: F,
    layout: &BlockLayout,
) -> Result<TransformResult>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if layout.covered_len() > points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            found: layout.covered_len(),
        });
    }
    let outputs: Vec<DVector<f64>> = points.points().iter().map(|s| f(s)).collect();
    let out_dim = outputs[0].len();
    for z in &outputs {
        if z.len() != out_dim {
            return Err(Error::DimensionMismatch {
                expected: out_dim,
                found: z.len(),
            });
        }
    }
    let weight = 1.0 / outputs.len() as f64;

    let mut mean = DVector::zeros(out_dim);
    for z in &outputs {
        mean += z;
    }
    mean *= weight;

    let mut cov = DMatrix::zeros(out_dim, out_dim);
    for z in &outputs {
        let dev = z - &mean;
        cov.ger(weight, &dev, &dev, 1.0);
    }
    let cov = crate::gaussian::symmetrize(&cov);

    let mut cross = Vec::new();
    for name in layout.names() {
        let (offset, len) = layout.span(name).expect("name comes from the layout");
        let block_mean = points.source_mean().rows(offset, len).clone_owned();
        let mut xc = DMatrix::zeros(len, out_dim);
        for (s, z) in points.points().iter().zip(&outputs) {
            let in_dev = s.rows(offset, len) - &block_mean;
            let out_dev = z - &mean;
            xc.ger(weight, &in_dev, &out_dev, 1.0);
        }
        cross.push((name, xc));
    }

    Ok(TransformResult { mean, cov, cross })
}
