//! Dense symmetric-matrix kernel.
//!
//! Every matrix quantity of the multiple-description problem (source and
//! distortion covariances, noise blocks, the coupling matrix, auxiliary
//! noise) is a real symmetric matrix. [`SymMatrix`] keeps that invariant
//! through construction, and the free functions here provide the PSD
//! ordering, principal square roots, the inversion lemmas, and the block
//! identities for the equal-coupling noise covariance.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// `log|M|` by in-place Cholesky of a row-major `n×n` buffer. Returns `None`
/// when `M` is not numerically positive definite. Allocation-free, for hot
/// loops on small matrices.
pub(crate) fn chol_log_det_in_place(buf: &mut [f64], n: usize) -> Option<f64> {
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = buf[j * n + j];
        for k in 0..j {
            d -= buf[j * n + k] * buf[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        buf[j * n + j] = d;
        acc += d.ln();
        for i in j + 1..n {
            let mut s = buf[i * n + j];
            for k in 0..j {
                s -= buf[i * n + k] * buf[j * n + k];
            }
            buf[i * n + j] = s / d;
        }
    }
    Some(2.0 * acc)
}

/// Default relative tolerance (against the spectral norm) for PSD decisions.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Largest accepted asymmetry, relative to the largest entry.
const SYMMETRY_TOL: f64 = 1e-12;

/// Dense real symmetric matrix.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

/// Eigen-decomposition with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, one per column, matching `values`.
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        SymMatrix::symmetrized(&scaled * self.vectors.transpose())
    }
}

impl SymMatrix {
    /// Builds a symmetric matrix, absorbing asymmetry up to 1e-12 relative.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidMatrix(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidMatrix("matrix is empty".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let scale = m.amax();
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidMatrix(format!(
                "asymmetry {asym:e} exceeds tolerance (max entry {scale:e})"
            )));
        }
        Ok(Self::symmetrized(m))
    }

    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} entries given for a {n}x{n} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    /// Symmetrizes `(M + Mᵗ)/2` without any check. Used for results of
    /// arithmetic that is symmetric in exact arithmetic.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        SymMatrix(DMatrix::identity(n, n) * s)
    }

    pub fn scalar(v: f64) -> Self {
        SymMatrix(DMatrix::from_element(1, 1, v))
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Row-major entries.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn eigen(&self) -> Eigen {
        let se = SymmetricEigen::new(self.0.clone());
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &se.eigenvectors.column(src));
        }
        Eigen { values, vectors }
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        DVector::from_vec(v)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let v = self.eigenvalues();
        v[v.len() - 1]
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Applies `f` to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        self.eigen().reassemble(f)
    }

    /// Inverse via Cholesky when positive definite, LU otherwise.
    pub fn inverse(&self) -> Result<SymMatrix> {
        if let Some(ch) = self.0.clone().cholesky() {
            return Ok(SymMatrix::symmetrized(ch.inverse()));
        }
        dense_inverse(&self.0).map(SymMatrix::symmetrized)
    }

    /// `log|M|` for a positive definite matrix.
    pub fn log_det(&self) -> Result<f64> {
        match self.0.clone().cholesky() {
            Some(ch) => Ok(2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()),
            None => Err(Error::NotPd { min_eigenvalue: self.min_eigenvalue() }),
        }
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    /// `T M Tᵗ`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrized(t * &self.0 * t.transpose())
    }

    /// `T M T` for symmetric `T`.
    pub fn sandwich(&self, t: &SymMatrix) -> SymMatrix {
        SymMatrix::symmetrized(&t.0 * &self.0 * &t.0)
    }

    pub fn mul_mat(&self, other: &SymMatrix) -> DMatrix<f64> {
        &self.0 * &other.0
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    /// Principal sub-matrix on the given (sorted) index set.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        let k = idx.len();
        SymMatrix(DMatrix::from_fn(k, k, |i, j| self.0[(idx[i], idx[j])]))
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{:?}", self.to_rows())
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix(-&self.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

fn check_finite(m: &SymMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidMatrix("non-finite entry".into()))
    }
}

fn check_same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{}x{} vs {}x{}", a.dim(), a.dim(), b.dim(), b.dim())))
    }
}

/// True iff the smallest eigenvalue of `m` exceeds `tol`.
pub fn is_pd(m: &SymMatrix, tol: f64) -> Result<bool> {
    check_finite(m)?;
    Ok(m.min_eigenvalue() > tol)
}

/// Outcome of comparing two symmetric matrices in the PSD order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrderVerdict {
    /// `A ≺ B`
    StrictlyLess,
    /// `A ≼ B`, not strictly
    LessOrEqual,
    /// `A ≻ B`
    StrictlyGreater,
    /// `A ≽ B`, not strictly
    GreaterOrEqual,
    Equal,
    Incomparable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdOrder {
    pub verdict: OrderVerdict,
    /// Most-violating eigenvalue of `B − A` for the verdict reached: the
    /// smallest eigenvalue for the "less" verdicts, the largest otherwise.
    pub witness_eigenvalue: f64,
}

/// Classifies `B − A` by the signs of its eigenvalues, with the band `±tol`
/// counted as zero.
pub fn psd_compare(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<PsdOrder> {
    check_same_dim(a, b)?;
    check_finite(a)?;
    check_finite(b)?;
    let ev = (b - a).eigenvalues();
    let lo = ev[0];
    let hi = ev[ev.len() - 1];
    let (verdict, witness) = if lo > tol {
        (OrderVerdict::StrictlyLess, lo)
    } else if hi < -tol {
        (OrderVerdict::StrictlyGreater, hi)
    } else if lo >= -tol && hi <= tol {
        (OrderVerdict::Equal, if lo.abs() > hi.abs() { lo } else { hi })
    } else if lo >= -tol {
        (OrderVerdict::LessOrEqual, lo)
    } else if hi <= tol {
        (OrderVerdict::GreaterOrEqual, hi)
    } else {
        (OrderVerdict::Incomparable, lo)
    };
    Ok(PsdOrder { verdict, witness_eigenvalue: witness })
}

/// Principal square root of a PSD matrix.
pub fn sqrt_psd(m: &SymMatrix) -> Result<SymMatrix> {
    check_finite(m)?;
    let eig = m.eigen();
    let norm = eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let lo = eig.values[0];
    if lo < -1e-8 * norm {
        return Err(Error::NotPsd { min_eigenvalue: lo });
    }
    Ok(eig.reassemble(|v| v.max(0.0).sqrt()))
}

/// Inverse square root of a PD matrix.
pub fn inv_sqrt_pd(m: &SymMatrix) -> Result<SymMatrix> {
    check_finite(m)?;
    let eig = m.eigen();
    let lo = eig.values[0];
    if lo <= 0.0 {
        return Err(Error::NotPd { min_eigenvalue: lo });
    }
    Ok(eig.reassemble(|v| 1.0 / v.sqrt()))
}

/// Dense inverse by LU decomposition.
pub fn dense_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("inverse of a non-square matrix".into()));
    }
    let inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("LU inverse".into()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("LU inverse overflowed".into()));
    }
    Ok(inv)
}

/// `(A + C B D)⁻¹` through the matrix inversion lemma
/// `A⁻¹ − A⁻¹C(B⁻¹ + DA⁻¹C)⁻¹DA⁻¹`.
///
/// `C` is `m×n`, `B` is `n×n`, `D` is `n×m`. The result is symmetric only
/// when `D = Cᵗ`, so it is returned as a general matrix.
pub fn woodbury_inverse(
    a: &SymMatrix,
    c: &DMatrix<f64>,
    b: &SymMatrix,
    d: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = a.dim();
    let n = b.dim();
    if c.shape() != (m, n) || d.shape() != (n, m) {
        return Err(Error::Dimension(format!(
            "woodbury: A is {m}x{m}, B is {n}x{n}, C is {:?}, D is {:?}",
            c.shape(),
            d.shape()
        )));
    }
    let a_inv = dense_inverse(a.as_matrix())?;
    let b_inv = dense_inverse(b.as_matrix())?;
    let a_inv_c = &a_inv * c;
    let inner = b_inv + d * &a_inv_c;
    let inner_inv = dense_inverse(&inner)?;
    Ok(&a_inv - &a_inv_c * inner_inv * d * &a_inv)
}

/// Blocks of the inverse of `[[A, B], [C, D]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInverse {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl BlockInverse {
    pub fn assemble(&self) -> DMatrix<f64> {
        let (p, q) = (self.x.nrows(), self.v.nrows());
        let mut m = DMatrix::zeros(p + q, p + q);
        m.view_mut((0, 0), (p, p)).copy_from(&self.x);
        m.view_mut((0, p), (p, q)).copy_from(&self.y);
        m.view_mut((p, 0), (q, p)).copy_from(&self.u);
        m.view_mut((p, p), (q, q)).copy_from(&self.v);
        m
    }
}

/// Inverse of a 2×2 partitioned matrix through the Schur complement of `A`.
pub fn block_2x2_inverse(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<BlockInverse> {
    let p = a.nrows();
    let q = d.nrows();
    if a.ncols() != p || d.ncols() != q || b.shape() != (p, q) || c.shape() != (q, p) {
        return Err(Error::Dimension(format!(
            "block inverse: A {:?}, B {:?}, C {:?}, D {:?}",
            a.shape(),
            b.shape(),
            c.shape(),
            d.shape()
        )));
    }
    let a_inv = dense_inverse(a).map_err(|_| Error::Singular("block inverse: A".into()))?;
    let schur = d - c * &a_inv * b;
    let s_inv =
        dense_inverse(&schur).map_err(|_| Error::Singular("block inverse: Schur complement".into()))?;
    let a_inv_b = &a_inv * b;
    let c_a_inv = c * &a_inv;
    Ok(BlockInverse {
        x: &a_inv + &a_inv_b * &s_inv * &c_a_inv,
        y: -(&a_inv_b * &s_inv),
        u: -(&s_inv * &c_a_inv),
        v: s_inv,
    })
}

fn check_blocks(blocks: &[SymMatrix], a: &SymMatrix) -> Result<usize> {
    if blocks.is_empty() {
        return Err(Error::Dimension("at least one noise block is required".into()));
    }
    let n = a.dim();
    if let Some((l, b)) = blocks.iter().enumerate().find(|(_, b)| b.dim() != n) {
        return Err(Error::Dimension(format!(
            "noise block {} is {}x{}, coupling is {n}x{n}",
            l + 1,
            b.dim(),
            b.dim()
        )));
    }
    Ok(n)
}

/// Noise covariance with `Kw_l` on the diagonal and `−A` on every
/// off-diagonal block.
pub fn assemble_kw(blocks: &[SymMatrix], a: &SymMatrix) -> Result<SymMatrix> {
    let n = check_blocks(blocks, a)?;
    let l = blocks.len();
    let mut m = DMatrix::zeros(l * n, l * n);
    for (i, block) in blocks.iter().enumerate() {
        for j in 0..l {
            let src = if i == j { block.as_matrix().clone() } else { -a.as_matrix() };
            m.view_mut((i * n, j * n), (n, n)).copy_from(&src);
        }
    }
    Ok(SymMatrix::symmetrized(m))
}

/// `(I…I) Kw⁻¹ (I…I)ᵗ` for the equal-coupling noise covariance, evaluated as
/// `[(Σ_l (Kw_l + A)⁻¹)⁻¹ − A]⁻¹` without forming the `LN×LN` inverse.
pub fn collapsed_inverse(blocks: &[SymMatrix], a: &SymMatrix) -> Result<SymMatrix> {
    let n = check_blocks(blocks, a)?;
    let kw = assemble_kw(blocks, a)?;
    if kw.as_matrix().clone().cholesky().is_none() {
        return Err(Error::NotPd { min_eigenvalue: kw.min_eigenvalue() });
    }
    let attempt = |coupling: &SymMatrix| -> Result<SymMatrix> {
        let mut acc = SymMatrix::zeros(n);
        for b in blocks {
            acc = &acc + &(b + coupling).inverse()?;
        }
        let inner = &acc.inverse()? - coupling;
        let eig = inner.eigenvalues();
        let scale = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if eig.iter().any(|v| v.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::Singular("collapsed inverse intermediate".into()));
        }
        inner.inverse()
    };
    match attempt(a) {
        Err(Error::Singular(_)) if a.min_eigenvalue() <= DEFAULT_REL_TOL * a.spectral_norm() => {
            let eps = 1e-10 * a.spectral_norm() + 1e-14;
            attempt(&(a + &SymMatrix::scaled_identity(n, eps)))
        }
        other => other,
    }
}

/// Dense-route reference for [`collapsed_inverse`]: sums all blocks of the
/// full `LN×LN` inverse.
pub fn collapsed_inverse_dense(blocks: &[SymMatrix], a: &SymMatrix) -> Result<SymMatrix> {
    let n = check_blocks(blocks, a)?;
    let kw = assemble_kw(blocks, a)?;
    let inv = dense_inverse(kw.as_matrix())?;
    let l = blocks.len();
    let mut acc = DMatrix::zeros(n, n);
    for i in 0..l {
        for j in 0..l {
            acc += inv.view((i * n, j * n), (n, n));
        }
    }
    Ok(SymMatrix::symmetrized(acc))
}
