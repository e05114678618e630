//! Dense complex operator numerics.
//!
//! Every frame bound in this crate reduces to one of two pencil problems on
//! Hermitian positive semidefinite pairs `(M, P)`:
//!
//! * `inf`: the largest `A >= 0` with `M - A P ⪰ 0`,
//! * `sup`: the smallest `B` with `M ⪯ B P`.
//!
//! Both are solved by splitting the space into `range(P) ⊕ ker(P)` and taking
//! an extremal eigenvalue of a reduced matrix (a Schur complement for `inf`).
//! A bisection on `psd_margin` over the unreduced pencil cross-checks the
//! answer.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Matrix = DMatrix<C64>;
pub type Vector = DVector<C64>;

/// Numerical cushions. Everything is relative to the operator scale except
/// `frame` and `check`, which are absolute on computed bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Rank cut relative to the largest singular/eigen value.
    pub rank: f64,
    /// PSD acceptance, relative to `‖M‖`.
    pub psd: f64,
    /// Allowed relative gap between the Schur and bisection answers.
    pub cross_check: f64,
    /// Relative size of `M` on `ker(P)` still treated as zero.
    pub kernel: f64,
    /// Relative anti-Hermitian part tolerated before rejecting input.
    pub hermitian: f64,
    /// A family is a frame when its lower bound exceeds this.
    pub frame: f64,
    /// Slack on every predicted one-sided inequality.
    pub check: f64,
    pub max_bisection_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-10,
            psd: 1e-9,
            cross_check: 1e-8,
            kernel: 1e-8,
            hermitian: 1e-8,
            frame: 1e-8,
            check: 1e-8,
            max_bisection_iters: 200,
        }
    }
}

impl Tolerances {
    /// Defaults with the check tolerance replaced.
    pub fn with_check(check: f64) -> Self {
        Tolerances { check, ..Self::default() }
    }
}

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn real_diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_iterator(values.len(), values.iter().map(|&v| c64(v, 0.0))))
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

/// Real matrix from row-major data.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_iterator(rows, cols, data.iter().map(|&v| c64(v, 0.0)))
}

pub fn hermitian_part(m: &Matrix) -> Matrix {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

/// Real part of `⟨M f, f⟩`.
pub fn quadratic_form(m: &Matrix, f: &Vector) -> f64 {
    f.dotc(&(m * f)).re
}

/// Spectral norm.
pub fn op_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() { m * m.adjoint() } else { m.adjoint() * m };
    eigh(&gram).max().max(0.0).sqrt()
}

/// Thin singular triplets `m = Σ σ_k u_k v_k*`, values descending.
pub(crate) struct Triplets {
    pub values: Vec<f64>,
    pub left: Matrix,
    pub right: Matrix,
}

/// Singular triplets read off the Hermitian dilation `[[0, M], [M*, 0]]`,
/// whose eigenpairs are `±σ` with `(u, ±v)/√2`. Used instead of the complex
/// SVD, which loses accuracy on some rank-deficient inputs.
pub(crate) fn thin_svd(m: &Matrix) -> Triplets {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let mut dilation = Matrix::zeros(rows + cols, rows + cols);
    dilation.view_mut((0, rows), (rows, cols)).copy_from(m);
    dilation.view_mut((rows, 0), (cols, rows)).copy_from(&m.adjoint());
    let spec = eigh(&dilation);
    let top = rows + cols;
    let scale = c64(std::f64::consts::SQRT_2, 0.0);
    let picked: Vec<usize> = (top - k..top).rev().collect();
    Triplets {
        values: picked.iter().map(|&j| spec.values[j].max(0.0)).collect(),
        left: Matrix::from_fn(rows, k, |r, c| spec.vectors[(r, picked[c])] * scale),
        right: Matrix::from_fn(cols, k, |r, c| spec.vectors[(rows + r, picked[c])] * scale),
    }
}

/// Ascending.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s = thin_svd(m).values;
    s.reverse();
    s
}

/// Smallest singular value over the input dimension (zero when rank deficient
/// in the column sense).
pub fn sigma_min(m: &Matrix) -> f64 {
    if m.ncols() > m.nrows() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn sigma_max(m: &Matrix) -> f64 {
    op_norm(m)
}

pub fn check_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows())
}

pub fn check_finite(m: &Matrix) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Ascending eigenvalues with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn vector(&self, k: usize) -> Vector {
        self.vectors.column(k).into_owned()
    }
}

/// Eigen-decomposition of the Hermitian part, no input validation.
pub(crate) fn eigh(m: &Matrix) -> Spectrum {
    let n = m.nrows();
    if n == 0 {
        return Spectrum { values: Vec::new(), vectors: Matrix::zeros(0, 0) };
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Spectrum { values, vectors }
}

fn asymmetry(m: &Matrix) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / scale
}

pub fn hermitian_spectrum(m: &Matrix) -> Result<Spectrum> {
    hermitian_spectrum_with(m, &Tolerances::default())
}

pub fn hermitian_spectrum_with(m: &Matrix, tol: &Tolerances) -> Result<Spectrum> {
    check_square(m)?;
    let asym = asymmetry(m);
    if asym > tol.hermitian {
        return Err(Error::NonHermitian { asymmetry: asym });
    }
    Ok(eigh(m))
}

/// Moore–Penrose pseudo-inverse; singular values at or below
/// `rank_tol · σ_max` are treated as zero.
pub fn pseudo_inverse(m: &Matrix, rank_tol: f64) -> Matrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Matrix::zeros(cols, rows);
    }
    let svd = thin_svd(m);
    let smax = svd.values.first().copied().unwrap_or(0.0);
    let mut out = Matrix::zeros(cols, rows);
    if smax == 0.0 {
        return out;
    }
    let cut = rank_tol * smax;
    for (k, &sigma) in svd.values.iter().enumerate() {
        if sigma > cut {
            out += (svd.right.column(k) * svd.left.column(k).adjoint()) * c64(1.0 / sigma, 0.0);
        }
    }
    out
}

/// Pseudo-inverse of a Hermitian PSD matrix with an absolute eigenvalue cut.
/// Returns the inverse and the eigenvectors spanning the discarded subspace.
fn psd_pinv_abs(m: &Matrix, cut: f64) -> (Matrix, Matrix) {
    let n = m.nrows();
    let spec = eigh(m);
    let mut inv = Matrix::zeros(n, n);
    let mut dropped = Vec::new();
    for k in 0..n {
        let v = spec.vector(k);
        if spec.values[k] > cut {
            inv += (&v * v.adjoint()) * c64(1.0 / spec.values[k], 0.0);
        } else {
            dropped.push(v);
        }
    }
    let kernel = if dropped.is_empty() { Matrix::zeros(n, 0) } else { Matrix::from_columns(&dropped) };
    (inv, kernel)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn psd_margin(m: &Matrix) -> Result<f64> {
    check_square(m)?;
    Ok(eigh(m).min())
}

#[derive(Debug, Clone, Serialize)]
pub struct PencilResult {
    /// Extended nonnegative real; `f64::INFINITY` when unbounded or vacuous.
    pub value: f64,
    /// Unit vector realizing the extremal ratio (for `+∞` results a vector
    /// exposing the degeneracy).
    pub witness: Vec<[f64; 2]>,
    /// Absolute gap between the Schur and bisection answers, when both ran.
    pub method_agreement: Option<f64>,
}

impl PencilResult {
    pub fn witness_vector(&self) -> Vector {
        Vector::from_iterator(self.witness.len(), self.witness.iter().map(|z| c64(z[0], z[1])))
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

pub(crate) fn vector_to_pairs(v: &Vector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn normalized(v: Vector) -> Vector {
    let n = v.norm();
    if n > 0.0 {
        v / c64(n, 0.0)
    } else {
        v
    }
}

fn unit(n: usize, k: usize) -> Vector {
    let mut v = Vector::zeros(n);
    if n > 0 {
        v[k] = c64(1.0, 0.0);
    }
    v
}

/// Pre-split denominator `P = U_R diag(p) U_R*` for repeated pencil solves
/// against the same `P` (e.g. `LL*` across all partitions of a weaving scan).
#[derive(Debug, Clone)]
pub struct PencilPlan {
    n: usize,
    p: Matrix,
    p_max: f64,
    p_plus_min: f64,
    range: Matrix,
    kernel: Matrix,
    inv_sqrt: Vec<f64>,
    tol: Tolerances,
}

impl PencilPlan {
    pub fn new(p: &Matrix, tol: &Tolerances) -> Result<Self> {
        let n = check_square(p)?;
        let asym = asymmetry(p);
        if asym > tol.hermitian {
            return Err(Error::NonHermitian { asymmetry: asym });
        }
        let spec = eigh(p);
        let p_max = spec.max().max(0.0);
        if spec.min() < -tol.psd * p_max.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPsd { what: "pencil denominator", margin: spec.min() });
        }
        let cut = tol.rank * p_max;
        let mut range = Vec::new();
        let mut kernel = Vec::new();
        let mut inv_sqrt = Vec::new();
        for k in 0..n {
            if p_max > 0.0 && spec.values[k] > cut {
                range.push(spec.vector(k));
                inv_sqrt.push(1.0 / spec.values[k].sqrt());
            } else {
                kernel.push(spec.vector(k));
            }
        }
        let p_plus_min = inv_sqrt.iter().map(|s| 1.0 / (s * s)).fold(f64::INFINITY, f64::min);
        let cols = |vs: &[Vector]| if vs.is_empty() { Matrix::zeros(n, 0) } else { Matrix::from_columns(vs) };
        Ok(PencilPlan {
            n,
            p: hermitian_part(p),
            p_max,
            p_plus_min,
            range: cols(&range),
            kernel: cols(&kernel),
            inv_sqrt,
            tol: *tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.inv_sqrt.len()
    }

    pub fn is_zero(&self) -> bool {
        self.rank() == 0
    }

    fn check_numerator(&self, m: &Matrix) -> Result<f64> {
        let n = check_square(m)?;
        if n != self.n {
            return Err(Error::DimensionMismatch { what: "pencil pair", expected: self.n, found: n });
        }
        let asym = asymmetry(m);
        if asym > self.tol.hermitian {
            return Err(Error::NonHermitian { asymmetry: asym });
        }
        let spec = eigh(m);
        let scale = spec.max().max(0.0);
        if spec.min() < -self.tol.psd * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPsd { what: "pencil numerator", margin: spec.min() });
        }
        Ok(scale)
    }

    fn scaled_reduction(&self, block: &Matrix) -> Matrix {
        let r = self.rank();
        Matrix::from_fn(r, r, |i, j| block[(i, j)] * (self.inv_sqrt[i] * self.inv_sqrt[j]))
    }

    /// Optimal lower constant via the Schur complement on `ker(P)`.
    pub fn inf_schur(&self, m: &Matrix) -> Result<(f64, Vector)> {
        let m_norm = self.check_numerator(m)?;
        Ok(self.inf_schur_unchecked(m, m_norm))
    }

    fn inf_schur_unchecked(&self, m: &Matrix, m_norm: f64) -> (f64, Vector) {
        if self.is_zero() {
            return (f64::INFINITY, unit(self.n, 0));
        }
        let ur = &self.range;
        let mrr = ur.adjoint() * m * ur;
        let mut schur = mrr.clone();
        let mut back = None;
        if self.rank() < self.n {
            let un = &self.kernel;
            let mrn = ur.adjoint() * m * un;
            let mnn = un.adjoint() * m * un;
            let (mnn_inv, mnn_ker) = psd_pinv_abs(&mnn, self.tol.rank * m_norm);
            if mnn_ker.ncols() > 0 {
                let coupled = &mrn * &mnn_ker;
                let coupling = op_norm(&coupled);
                // PSD forces |coupling|² ≤ cut · ‖M‖, so anything larger means
                // M − A P fails for every A ≥ 0 on this direction.
                if coupling > 10.0 * self.tol.rank.sqrt() * m_norm {
                    let spec = eigh(&(coupled.adjoint() * &coupled));
                    let z = spec.vector(spec.values.len() - 1);
                    let v0 = un * (&mnn_ker * &z);
                    let c = &mrn * (&mnn_ker * &z);
                    let x = normalized(c.clone());
                    let xmx = quadratic_form(&mrr, &x);
                    let t = xmx / c.norm();
                    let f = ur * x - v0 * c64(t, 0.0);
                    return (0.0, normalized(f));
                }
            }
            schur -= &mrn * &mnn_inv * mrn.adjoint();
            back = Some((mrn, mnn_inv));
        }
        let reduced = self.scaled_reduction(&schur);
        let spec = eigh(&reduced);
        let y = spec.vector(0);
        let xr = Vector::from_iterator(y.len(), y.iter().zip(&self.inv_sqrt).map(|(v, s)| v * s));
        let mut f = ur * &xr;
        if let Some((mrn, mnn_inv)) = back {
            let xn = -(&mnn_inv * (mrn.adjoint() * &xr));
            f += &self.kernel * xn;
        }
        (spec.min().max(0.0), normalized(f))
    }

    /// Optimal upper constant; `+∞` when `M` does not vanish on `ker(P)`.
    pub fn sup_schur(&self, m: &Matrix) -> Result<(f64, Vector)> {
        let m_norm = self.check_numerator(m)?;
        Ok(self.sup_schur_unchecked(m, m_norm))
    }

    fn sup_schur_unchecked(&self, m: &Matrix, m_norm: f64) -> (f64, Vector) {
        if m_norm == 0.0 {
            let w = if self.is_zero() { unit(self.n, 0) } else { self.range.column(0).into_owned() };
            return (0.0, w);
        }
        if self.rank() < self.n {
            let leak = m * &self.kernel;
            if op_norm(&leak) > self.tol.kernel * m_norm {
                let spec = eigh(&(leak.adjoint() * &leak));
                let z = spec.vector(spec.values.len() - 1);
                return (f64::INFINITY, normalized(&self.kernel * z));
            }
        }
        let mrr = self.range.adjoint() * m * &self.range;
        let spec = eigh(&self.scaled_reduction(&mrr));
        let y = spec.vector(spec.values.len() - 1);
        let xr = Vector::from_iterator(y.len(), y.iter().zip(&self.inv_sqrt).map(|(v, s)| v * s));
        (spec.max().max(0.0), normalized(&self.range * xr))
    }

    /// Natural size of a ratio `⟨Mf,f⟩/⟨Pf,f⟩`, used to make gaps relative.
    fn ratio_scale(&self, m_norm: f64) -> f64 {
        if self.p_max > 0.0 {
            m_norm / self.p_max
        } else {
            0.0
        }
    }

    fn margin_floor(&self, m_norm: f64, a: f64) -> f64 {
        -64.0 * f64::EPSILON * (m_norm + a * self.p_max)
    }

    fn bisect_inf(&self, m: &Matrix, m_norm: f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = m_norm / self.p_plus_min;
        let feasible = |a: f64| eigh(&(m - &self.p * c64(a, 0.0))).min() >= self.margin_floor(m_norm, a);
        if feasible(hi) {
            return hi;
        }
        let scale = self.ratio_scale(m_norm);
        for _ in 0..self.tol.max_bisection_iters {
            if hi - lo <= 1e-3 * self.tol.cross_check * scale.max(lo) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn bisect_sup(&self, m: &Matrix, m_norm: f64) -> f64 {
        let feasible = |b: f64| eigh(&(&self.p * c64(b, 0.0) - m)).min() >= self.margin_floor(m_norm, b);
        let mut lo = 0.0;
        let mut hi = m_norm / self.p_plus_min;
        let mut grow = 0;
        while !feasible(hi) {
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return f64::INFINITY;
            }
        }
        let scale = self.ratio_scale(m_norm);
        for _ in 0..self.tol.max_bisection_iters {
            if hi - lo <= 1e-3 * self.tol.cross_check * scale.max(lo) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn agree(&self, schur: f64, bisection: f64, m_norm: f64) -> Result<f64> {
        if schur.is_infinite() || bisection.is_infinite() {
            if schur == bisection {
                return Ok(0.0);
            }
            return Err(Error::CrossCheckFailure { schur, bisection });
        }
        let gap = (schur - bisection).abs();
        let scale = schur.max(bisection).max(self.ratio_scale(m_norm));
        if gap > self.tol.cross_check * scale {
            return Err(Error::CrossCheckFailure { schur, bisection });
        }
        Ok(gap)
    }

    /// `sup{A ≥ 0 : M − A P ⪰ 0}` computed both ways and cross-checked.
    pub fn inf(&self, m: &Matrix) -> Result<PencilResult> {
        let m_norm = self.check_numerator(m)?;
        let (value, witness) = self.inf_schur_unchecked(m, m_norm);
        let method_agreement =
            if value.is_infinite() { None } else { Some(self.agree(value, self.bisect_inf(m, m_norm), m_norm)?) };
        Ok(PencilResult { value, witness: vector_to_pairs(&witness), method_agreement })
    }

    /// `inf{B : M ⪯ B P}` computed both ways and cross-checked.
    pub fn sup(&self, m: &Matrix) -> Result<PencilResult> {
        let m_norm = self.check_numerator(m)?;
        let (value, witness) = self.sup_schur_unchecked(m, m_norm);
        let method_agreement = if value.is_infinite() || m_norm == 0.0 {
            None
        } else {
            Some(self.agree(value, self.bisect_sup(m, m_norm), m_norm)?)
        };
        Ok(PencilResult { value, witness: vector_to_pairs(&witness), method_agreement })
    }
}

pub fn pencil_inf(m: &Matrix, p: &Matrix, tol: &Tolerances) -> Result<PencilResult> {
    PencilPlan::new(p, tol)?.inf(m)
}

pub fn pencil_sup(m: &Matrix, p: &Matrix, tol: &Tolerances) -> Result<PencilResult> {
    PencilPlan::new(p, tol)?.sup(m)
}
