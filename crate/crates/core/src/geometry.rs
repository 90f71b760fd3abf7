//! Dense geometric primitives on real subspaces.
//!
//! Matrices are `nalgebra::DMatrix<f64>` and therefore column-major. A
//! [`SubspaceBasis`] is an `n x d` matrix whose columns are orthonormal;
//! `d = 0` is allowed and denotes the trivial subspace.
//!
//! The d-dimensional volume of `X` is the product of its `d` largest singular
//! values. For a full-column-rank `X` with `d = cols(X)` it equals
//! `sqrt(det(X^T X))`. Volumes of rank-deficient matrices are exactly zero,
//! which numerically means: any of the `d` leading singular values below
//! [`SINGULAR_VALUE_FLOOR`] times the largest one counts as zero.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, VcError};

/// Relative singular-value floor used for rank and log-volume decisions.
pub const SINGULAR_VALUE_FLOOR: f64 = 1e-12;

/// Default tolerance when checking that a basis has orthonormal columns.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Relative symmetry tolerance accepted by [`symmetric_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    for (j, col) in x.column_iter().enumerate() {
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(VcError::NonFinite { row: i, col: j });
        }
    }
    Ok(())
}

/// Orthonormal basis of a subspace of `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Wraps `basis` after checking that its columns are orthonormal within `tol`.
    ///
    /// The error names the first offending column.
    pub fn new(basis: DMatrix<f64>, tol: f64) -> Result<Self> {
        if basis.nrows() == 0 {
            return Err(VcError::invalid("basis must have at least one row"));
        }
        if basis.ncols() > basis.nrows() {
            return Err(VcError::invalid(format!(
                "basis has {} columns but ambient dimension is {}",
                basis.ncols(),
                basis.nrows()
            )));
        }
        check_finite(&basis)?;
        let gram = basis.transpose() * &basis;
        for j in 0..gram.ncols() {
            for i in 0..=j {
                let target = if i == j { 1.0 } else { 0.0 };
                let dev = (gram[(i, j)] - target).abs();
                if dev > tol {
                    return Err(VcError::invalid(format!(
                        "basis column {j} is not orthonormal (deviation {dev:.3e} against column {i})"
                    )));
                }
            }
        }
        Ok(Self { basis })
    }

    pub(crate) fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    /// The trivial subspace `{0}` of `R^n`.
    pub fn empty(ambient_dim: usize) -> Self {
        Self {
            basis: DMatrix::zeros(ambient_dim, 0),
        }
    }

    /// Standard basis vectors `e_i` for the given indices.
    pub fn coordinate(ambient_dim: usize, indices: &[usize]) -> Result<Self> {
        let mut m = DMatrix::zeros(ambient_dim, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            if i >= ambient_dim {
                return Err(VcError::invalid(format!(
                    "coordinate index {i} out of range for dimension {ambient_dim}"
                )));
            }
            m[(i, j)] = 1.0;
        }
        Self::new(m, ORTHONORMAL_TOL)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.basis
    }

    /// `max |B^T B - I|` over all entries.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.basis.transpose() * &self.basis;
        let d = gram.nrows();
        (gram - DMatrix::<f64>::identity(d, d)).amax()
    }

    /// Projector `B B^T` onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    fn complement(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.dim() == 0 {
            return v.clone();
        }
        let coeffs = self.basis.tr_mul(v);
        v - &self.basis * coeffs
    }
}

/// Principal angles `0 <= theta_1 <= ... <= theta_m <= pi/2`, `m = min(d1, d2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalAngleSet {
    angles: Vec<f64>,
}

impl PrincipalAngleSet {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn smallest(&self) -> Option<f64> {
        self.angles.first().copied()
    }

    pub fn sine_product(&self) -> f64 {
        self.angles.iter().map(|t| t.sin()).product()
    }
}

/// Spectral decomposition of a symmetric matrix, values in descending order.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// Column `j` pairs with `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    /// The eigenvectors of the `k` largest eigenvalues as a basis.
    pub fn leading_basis(&self, k: usize) -> SubspaceBasis {
        SubspaceBasis::from_orthonormal(self.vectors.columns(0, k).into_owned())
    }
}

/// Orthonormal basis of the column space of `x`.
///
/// Classical Gram-Schmidt with a second projection pass. A column whose
/// residual norm falls below `tol * ||x||_F` is dropped, so the returned
/// dimension is the numerical rank of `x` at `tol`. An all-zero `x` yields a
/// zero-dimensional basis.
pub fn orthonormalize(x: &DMatrix<f64>, tol: f64) -> Result<SubspaceBasis> {
    if x.nrows() == 0 {
        return Err(VcError::invalid("matrix must have at least one row"));
    }
    if !(tol > 0.0) {
        return Err(VcError::invalid("orthonormalization tolerance must be positive"));
    }
    check_finite(x)?;
    let n = x.nrows();
    let scale = x.norm();
    let mut q = DMatrix::<f64>::zeros(n, x.ncols().min(n));
    let mut rank = 0;
    if scale == 0.0 {
        return Ok(SubspaceBasis::empty(n));
    }
    for col in x.column_iter() {
        if rank == n {
            break;
        }
        let mut v: DVector<f64> = col.into_owned();
        for _ in 0..2 {
            if rank > 0 {
                let qk = q.columns(0, rank);
                let h = qk.tr_mul(&v);
                v -= qk * h;
            }
        }
        let norm = v.norm();
        if norm >= tol * scale {
            q.set_column(rank, &(v / norm));
            rank += 1;
        }
    }
    Ok(SubspaceBasis::from_orthonormal(q.columns(0, rank).into_owned()))
}

/// Singular values of `x` in descending order.
pub fn singular_values(x: &DMatrix<f64>) -> Vec<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = x.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn leading_singular_values(x: &DMatrix<f64>, d: usize) -> Result<Option<Vec<f64>>> {
    if d > x.ncols() {
        return Err(VcError::invalid(format!(
            "volume order {d} exceeds column count {}",
            x.ncols()
        )));
    }
    check_finite(x)?;
    if d == 0 {
        return Ok(Some(Vec::new()));
    }
    if d > x.nrows() {
        return Ok(None);
    }
    let s = singular_values(x);
    let smax = s[0];
    if smax == 0.0 || s[d - 1] < SINGULAR_VALUE_FLOOR * smax {
        return Ok(None);
    }
    Ok(Some(s[..d].to_vec()))
}

/// d-dimensional volume: product of the `d` largest singular values of `x`.
pub fn volume(x: &DMatrix<f64>, d: usize) -> Result<f64> {
    Ok(leading_singular_values(x, d)?.map_or(0.0, |s| s.iter().product()))
}

/// Natural log of [`volume`], `-inf` when the volume is zero.
pub fn log_volume(x: &DMatrix<f64>, d: usize) -> Result<f64> {
    Ok(leading_singular_values(x, d)?.map_or(f64::NEG_INFINITY, |s| s.iter().map(|v| v.ln()).sum()))
}

fn check_same_ambient(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<()> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(VcError::DimensionMismatch {
            what: "ambient dimension",
            expected: a.ambient_dim(),
            got: b.ambient_dim(),
        });
    }
    Ok(())
}

/// Principal angles from the singular values of `A^T B`.
pub fn principal_angles(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<PrincipalAngleSet> {
    check_same_ambient(a, b)?;
    if a.dim() == 0 || b.dim() == 0 {
        return Err(VcError::invalid(
            "principal angles need two subspaces of dimension >= 1",
        ));
    }
    let cross = a.matrix().tr_mul(b.matrix());
    let mut angles: Vec<f64> = singular_values(&cross)
        .into_iter()
        .map(|c| c.clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(|x, y| x.total_cmp(y));
    Ok(PrincipalAngleSet { angles })
}

/// Log of `Vol_{k+d}([Q, B]) = det^{1/2}(Q^T P_B^perp Q)` for orthonormal
/// `Q` (`n x k`) and `B` (`n x d`).
///
/// With `B^T Q = U S V^T`, the columns of `P_B^perp Q V` are mutually
/// orthogonal; the first `min(d, k)` have norms `sin(theta_j)` and the rest
/// have norm one. The sines are taken as residual norms rather than
/// `sqrt(1 - cos^2)` so they stay accurate near zero, which is exactly where
/// detection happens.
pub fn stacked_log_volume(q: &SubspaceBasis, b: &SubspaceBasis) -> Result<f64> {
    check_same_ambient(q, b)?;
    let (k, d) = (q.dim(), b.dim());
    if k == 0 || d == 0 {
        return Ok(0.0);
    }
    if k + d > q.ambient_dim() {
        return Ok(f64::NEG_INFINITY);
    }
    let cross = b.matrix().tr_mul(q.matrix());
    let svd = cross.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let directions = q.matrix() * v_t.transpose();
    let sines: Vec<f64> = directions
        .column_iter()
        .map(|c| {
            let c = c.into_owned();
            let once = b.complement(&c);
            b.complement(&once).norm()
        })
        .collect();
    let largest = if k > sines.len() {
        1.0
    } else {
        sines.iter().copied().fold(0.0, f64::max)
    };
    if largest == 0.0 || sines.iter().any(|&s| s < SINGULAR_VALUE_FLOOR * largest) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(sines.iter().map(|s| s.ln()).sum())
}

/// Volume correlation `Vol([A, B]) / (Vol(A) Vol(B))`, which for orthonormal
/// bases is the stacked volume itself and equals the product of the sines of
/// the principal angles.
pub fn volume_correlation(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<f64> {
    check_same_ambient(a, b)?;
    // project the thinner block
    let (q, onto) = if a.dim() <= b.dim() { (a, b) } else { (b, a) };
    Ok(stacked_log_volume(q, onto)?.exp())
}

/// Incrementally maintained orthonormal basis with a running log-volume.
///
/// Pushing a vector multiplies the volume by the norm of its residual against
/// the current span, which is the Schur-complement recursion for Gram
/// determinants.
#[derive(Clone, Debug)]
pub struct VolumeChain {
    basis: DMatrix<f64>,
    rank: usize,
    log_volume: f64,
}

impl VolumeChain {
    pub fn new(ambient_dim: usize) -> Self {
        Self {
            basis: DMatrix::zeros(ambient_dim, 0),
            rank: 0,
            log_volume: 0.0,
        }
    }

    /// Starts from an orthonormal block whose volume is 1.
    pub fn from_basis(b: &SubspaceBasis) -> Self {
        Self {
            basis: b.matrix().clone(),
            rank: b.dim(),
            log_volume: 0.0,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn log_volume(&self) -> f64 {
        self.log_volume
    }

    /// `P^perp y` against the current span, two projection passes.
    pub fn residual(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.ambient_dim() {
            return Err(VcError::DimensionMismatch {
                what: "vector length",
                expected: self.ambient_dim(),
                got: y.len(),
            });
        }
        let mut v = y.clone();
        if self.rank > 0 {
            let q = self.basis.columns(0, self.rank);
            for _ in 0..2 {
                let h = q.tr_mul(&v);
                v -= q * h;
            }
        }
        Ok(v)
    }

    /// Appends `y` and returns the incremental volume factor `||P^perp y||`.
    ///
    /// A zero residual leaves the span unchanged and sends the log-volume to
    /// `-inf`.
    pub fn push(&mut self, y: &DVector<f64>) -> Result<f64> {
        let r = self.residual(y)?;
        let factor = r.norm();
        self.log_volume += factor.ln();
        if factor > 0.0 && self.rank < self.ambient_dim() {
            let n = self.ambient_dim();
            self.basis = self.basis.clone().insert_column(self.rank, 0.0);
            self.basis.set_column(self.rank, &(r / factor));
            debug_assert_eq!(self.basis.nrows(), n);
            self.rank += 1;
        }
        Ok(factor)
    }
}

/// `||P^perp_{[X, Yprev]} y||`, the factor by which appending `y` scales
/// `Vol([X, Yprev])`.
pub fn incremental_volume_factor(x: &DMatrix<f64>, yprev: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let n = x.nrows();
    if yprev.nrows() != n {
        return Err(VcError::DimensionMismatch {
            what: "row count of previous samples",
            expected: n,
            got: yprev.nrows(),
        });
    }
    if y.len() != n {
        return Err(VcError::DimensionMismatch {
            what: "vector length",
            expected: n,
            got: y.len(),
        });
    }
    let mut stacked = DMatrix::zeros(n, x.ncols() + yprev.ncols());
    stacked.columns_mut(0, x.ncols()).copy_from(x);
    stacked.columns_mut(x.ncols(), yprev.ncols()).copy_from(yprev);
    let span = if stacked.ncols() == 0 {
        SubspaceBasis::empty(n)
    } else {
        orthonormalize(&stacked, SINGULAR_VALUE_FLOOR)?
    };
    Ok(VolumeChain::from_basis(&span).residual(y)?.norm())
}

/// `v - B (B^T v)`.
pub fn projector_complement_apply(b: &SubspaceBasis, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != b.ambient_dim() {
        return Err(VcError::DimensionMismatch {
            what: "vector length",
            expected: b.ambient_dim(),
            got: v.len(),
        });
    }
    Ok(b.complement(v))
}

/// Full spectral decomposition of a symmetric matrix, eigenvalues descending.
pub fn symmetric_eig(s: &DMatrix<f64>) -> Result<EigenPairs> {
    if s.nrows() != s.ncols() {
        return Err(VcError::invalid(format!(
            "matrix is {}x{}, not square",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.nrows() == 0 {
        return Err(VcError::invalid("matrix is empty"));
    }
    check_finite(s)?;
    let scale = s.amax().max(f64::MIN_POSITIVE);
    let asym = (s - s.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(VcError::invalid(format!(
            "matrix is not symmetric (max |S - S^T| = {asym:.3e})"
        )));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenPairs { values, vectors })
}

/// All elementary symmetric functions `s_0..=s_len` of `values`.
pub fn elementary_symmetric_all(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (count, &v) in values.iter().enumerate() {
        for j in (1..=count + 1).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e
}

/// `s_k`: sum over all k-subsets of the product of their entries, `s_0 = 1`.
pub fn elementary_symmetric(values: &[f64], k: usize) -> Result<f64> {
    if k > values.len() {
        return Err(VcError::invalid(format!(
            "order {k} exceeds the {} supplied values",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(VcError::invalid(format!(
            "singular values must be finite and non-negative, got {v}"
        )));
    }
    Ok(elementary_symmetric_all(values)[k])
}
