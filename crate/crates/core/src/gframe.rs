//! Block families and their synthesis, analysis and frame operators.
//!
//! Index `ς` of a family carries a block `χ_ς` of shape `d_ς × n` acting from
//! the ambient space `ℂⁿ` into `ℂ^{d_ς}`. Integrals over the measure are
//! weighted sums in canonical index order.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, eigh, Matrix, PencilPlan, Tolerances, Vector};
use crate::measure::{MeasureSpace, Partition};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockFamily {
    space: MeasureSpace,
    dim: usize,
    blocks: Vec<Matrix>,
}

impl BlockFamily {
    pub fn new(space: MeasureSpace, dim: usize, blocks: Vec<Matrix>) -> Result<Self> {
        if blocks.len() != space.len() {
            return Err(Error::DimensionMismatch { what: "block count", expected: space.len(), found: blocks.len() });
        }
        for (index, b) in blocks.iter().enumerate() {
            if b.ncols() != dim || b.nrows() == 0 {
                return Err(Error::BlockShapeMismatch { index, expected: (b.nrows().max(1), dim), found: b.shape() });
            }
            linalg::check_finite(b)?;
        }
        Ok(BlockFamily { space, dim, blocks })
    }

    /// One row vector per index: a classical continuous frame `{F_ς}` with
    /// blocks `F_ς*`.
    pub fn from_rows(space: MeasureSpace, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let blocks = rows.iter().map(|r| linalg::real_matrix(1, r.len(), r)).collect();
        Self::new(space, dim, blocks)
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn block(&self, index: usize) -> &Matrix {
        &self.blocks[index]
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Matrix::nrows).collect()
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.space.weight(index)
    }

    /// Apply `f` to every block; the result must keep `cols == dim`.
    pub fn map_blocks(&self, mut f: impl FnMut(usize, &Matrix) -> Matrix) -> Result<Self> {
        let blocks = self.blocks.iter().enumerate().map(|(i, b)| f(i, b)).collect();
        Self::new(self.space.clone(), self.dim, blocks)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let blocks = self.blocks.iter().map(|b| b * c64(c, 0.0)).collect();
        BlockFamily { space: self.space.clone(), dim: self.dim, blocks }
    }

    /// Same shapes, all blocks zero.
    pub fn zeros_like(&self) -> Self {
        let blocks = self.blocks.iter().map(|b| Matrix::zeros(b.nrows(), b.ncols())).collect();
        BlockFamily { space: self.space.clone(), dim: self.dim, blocks }
    }

    pub fn with_space(&self, space: MeasureSpace) -> Result<Self> {
        Self::new(space, self.dim, self.blocks.clone())
    }

    /// Family on the listed indices only (the measure restricted accordingly).
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let space = self.space.restrict(indices)?;
        let blocks = indices.iter().map(|&i| self.blocks[i].clone()).collect();
        Self::new(space, self.dim, blocks)
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        check_compatible(self, other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect();
        Ok(BlockFamily { space: self.space.clone(), dim: self.dim, blocks })
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        check_compatible(self, other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect();
        Ok(BlockFamily { space: self.space.clone(), dim: self.dim, blocks })
    }

    /// Weighted Gram terms `w_ς χ_ς*χ_ς`.
    pub(crate) fn gram_terms(&self) -> Vec<Matrix> {
        self.blocks.iter().enumerate().map(|(i, b)| b.adjoint() * b * c64(self.weight(i), 0.0)).collect()
    }
}

/// Same space, same ambient dimension, same per-index output dimensions.
pub fn check_compatible(a: &BlockFamily, b: &BlockFamily) -> Result<()> {
    if a.space != b.space {
        return Err(Error::SpaceMismatch);
    }
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { what: "ambient dimension", expected: a.dim, found: b.dim });
    }
    for (index, (x, y)) in a.blocks.iter().zip(&b.blocks).enumerate() {
        if x.shape() != y.shape() {
            return Err(Error::BlockShapeMismatch { index, expected: x.shape(), found: y.shape() });
        }
    }
    Ok(())
}

/// An element of the direct-integral space: one vector per index.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    weights: Vec<f64>,
    parts: Vec<Vector>,
}

impl CoefficientVector {
    pub fn new(space: &MeasureSpace, parts: Vec<Vector>) -> Result<Self> {
        if parts.len() != space.len() {
            return Err(Error::ShapeMismatch(format!("{} coefficient parts for {} indices", parts.len(), space.len())));
        }
        Ok(CoefficientVector { weights: space.weights().to_vec(), parts })
    }

    pub fn zeros(fam: &BlockFamily) -> Self {
        let parts = fam.blocks.iter().map(|b| Vector::zeros(b.nrows())).collect();
        CoefficientVector { weights: fam.space.weights().to_vec(), parts }
    }

    pub fn parts(&self) -> &[Vector] {
        &self.parts
    }

    pub fn part(&self, index: usize) -> &Vector {
        &self.parts[index]
    }

    pub fn norm_squared(&self) -> f64 {
        self.weights.iter().zip(&self.parts).map(|(w, p)| w * p.norm_squared()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `∫ ⟨F_ς, G_ς⟩ dμ`.
    pub fn inner(&self, other: &Self) -> num_complex::Complex<f64> {
        self.weights.iter().zip(self.parts.iter().zip(&other.parts)).map(|(w, (a, b))| b.dotc(a) * w).sum()
    }

    /// Stacked coordinates `√w_ς · F_ς`, so the Euclidean norm is the
    /// direct-integral norm.
    pub fn to_stacked(&self) -> Vector {
        let total: usize = self.parts.iter().map(|p| p.len()).sum();
        let mut out = Vector::zeros(total);
        let mut at = 0;
        for (w, p) in self.weights.iter().zip(&self.parts) {
            let s = w.sqrt();
            for k in 0..p.len() {
                out[at + k] = p[k] * s;
            }
            at += p.len();
        }
        out
    }

    pub fn from_stacked(fam: &BlockFamily, stacked: &Vector) -> Result<Self> {
        let dims = fam.block_dims();
        let total: usize = dims.iter().sum();
        if stacked.len() != total {
            return Err(Error::ShapeMismatch(format!("stacked length {} != {total}", stacked.len())));
        }
        let mut parts = Vec::with_capacity(dims.len());
        let mut at = 0;
        for (i, d) in dims.into_iter().enumerate() {
            let s = fam.weight(i).sqrt();
            parts.push(Vector::from_iterator(d, (0..d).map(|k| stacked[at + k] / s)));
            at += d;
        }
        Ok(CoefficientVector { weights: fam.space.weights().to_vec(), parts })
    }
}

/// The operator `L` that lower frame inequalities are measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetOperator {
    matrix: Matrix,
}

impl TargetOperator {
    pub fn new(matrix: Matrix) -> Result<Self> {
        linalg::check_square(&matrix)?;
        linalg::check_finite(&matrix)?;
        Ok(TargetOperator { matrix })
    }

    pub fn identity(n: usize) -> Self {
        TargetOperator { matrix: Matrix::identity(n, n) }
    }

    pub fn zero(n: usize) -> Self {
        TargetOperator { matrix: Matrix::zeros(n, n) }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == Matrix::identity(self.dim(), self.dim())
    }

    /// `L L*`, the denominator of lower bounds `A‖L*f‖²`.
    pub fn outer_gram(&self) -> Matrix {
        &self.matrix * self.matrix.adjoint()
    }

    /// `L* L`, the denominator of bounds relative to `‖Lf‖²`.
    pub fn inner_gram(&self) -> Matrix {
        self.matrix.adjoint() * &self.matrix
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch { what: "target operator", expected: dim, found: self.dim() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    #[serde(serialize_with = "crate::harness::io::ser_extended")]
    pub lower: f64,
    #[serde(serialize_with = "crate::harness::io::ser_extended")]
    pub upper: f64,
    pub lower_witness: Vec<[f64; 2]>,
    pub upper_witness: Vec<[f64; 2]>,
    pub is_frame: bool,
}

fn weighted_sum(
    fam: &BlockFamily,
    subset: Option<&Partition>,
    mut term: impl FnMut(usize) -> Matrix,
) -> Result<Matrix> {
    if let Some(p) = subset {
        p.check_space(&fam.space)?;
    }
    let mut s = Matrix::zeros(fam.dim, fam.dim);
    for i in 0..fam.len() {
        if subset.is_none_or(|p| p.contains(i)) {
            s += term(i) * c64(fam.weight(i), 0.0);
        }
    }
    Ok(s)
}

/// `S_χ = Σ w_ς χ_ς*χ_ς`, restricted to `subset` when given.
pub fn frame_operator(fam: &BlockFamily, subset: Option<&Partition>) -> Result<Matrix> {
    weighted_sum(fam, subset, |i| fam.blocks[i].adjoint() * &fam.blocks[i])
}

/// `Σ w_ς top_ς* bottom_ς`, i.e. `T_top T_bottom*`.
pub fn mixed_frame_operator(top: &BlockFamily, bottom: &BlockFamily, subset: Option<&Partition>) -> Result<Matrix> {
    check_compatible(top, bottom)?;
    weighted_sum(top, subset, |i| top.blocks[i].adjoint() * &bottom.blocks[i])
}

pub fn synthesis_apply(fam: &BlockFamily, w: &CoefficientVector) -> Result<Vector> {
    if w.parts.len() != fam.len() {
        return Err(Error::ShapeMismatch(format!("{} parts for {} blocks", w.parts.len(), fam.len())));
    }
    let mut out = Vector::zeros(fam.dim);
    for (i, (b, part)) in fam.blocks.iter().zip(&w.parts).enumerate() {
        if part.len() != b.nrows() {
            return Err(Error::ShapeMismatch(format!("part {i} has length {} != {}", part.len(), b.nrows())));
        }
        out += b.adjoint() * part * c64(fam.weight(i), 0.0);
    }
    Ok(out)
}

pub fn analysis_apply(fam: &BlockFamily, f: &Vector) -> Result<CoefficientVector> {
    if f.len() != fam.dim {
        return Err(Error::ShapeMismatch(format!("vector length {} != dim {}", f.len(), fam.dim)));
    }
    let parts = fam.blocks.iter().map(|b| b * f).collect();
    Ok(CoefficientVector { weights: fam.space.weights().to_vec(), parts })
}

/// Vertical stack of `√w_ς χ_ς`; `stack* stack = S_χ`. Its adjoint is the
/// synthesis operator in stacked coefficient coordinates.
pub fn synthesis_matrix(fam: &BlockFamily) -> Matrix {
    synthesis_matrix_on(fam, None)
}

pub(crate) fn synthesis_matrix_on(fam: &BlockFamily, subset: Option<&Partition>) -> Matrix {
    let rows: usize = fam
        .blocks
        .iter()
        .enumerate()
        .filter(|(i, _)| subset.is_none_or(|p| p.contains(*i)))
        .map(|(_, b)| b.nrows())
        .sum();
    let mut out = Matrix::zeros(rows, fam.dim);
    let mut at = 0;
    for (i, b) in fam.blocks.iter().enumerate() {
        if subset.is_some_and(|p| !p.contains(i)) {
            continue;
        }
        let s = c64(fam.weight(i).sqrt(), 0.0);
        out.view_mut((at, 0), (b.nrows(), fam.dim)).copy_from(&(b * s));
        at += b.nrows();
    }
    out
}

/// Optimal g-frame bounds `λ_min(S)`, `λ_max(S)`.
pub fn gframe_bounds(fam: &BlockFamily, tol: &Tolerances) -> Result<BoundsReport> {
    lg_frame_bounds(fam, &TargetOperator::identity(fam.dim), tol)
}

/// Optimal L-g-frame bounds: the lower side against `‖L*f‖²`, the upper side
/// against `‖f‖²`.
pub fn lg_frame_bounds(fam: &BlockFamily, target: &TargetOperator, tol: &Tolerances) -> Result<BoundsReport> {
    target.check_dim(fam.dim)?;
    let s = frame_operator(fam, None)?;
    let plan = PencilPlan::new(&target.outer_gram(), tol)?;
    let lower = plan.inf(&s)?;
    let spec = eigh(&s);
    let upper = spec.max().max(0.0);
    let upper_witness = spec.vector(spec.values.len() - 1);
    Ok(BoundsReport {
        is_frame: lower.value.is_finite() && lower.value > tol.frame,
        lower: lower.value,
        upper,
        lower_witness: lower.witness,
        upper_witness: linalg::vector_to_pairs(&upper_witness),
    })
}

/// Upper (Bessel) bound `λ_max(S_χ)`.
pub fn bessel_bound(fam: &BlockFamily) -> Result<f64> {
    Ok(eigh(&frame_operator(fam, None)?).max().max(0.0))
}
