//! Symmetric positive semi-definite matrices and the eigendecomposition-based
//! primitives the Wasserstein geometry is built on.
//!
//! Every covariance operator is represented by a dense `M x M` [`CovMatrix`].
//! Besides the dense storage a `CovMatrix` lazily caches a thin factor `F`
//! (`M x r`, `F Fᵀ = Σ`, `r` the numerical rank). Sample covariances built from
//! a handful of curves have tiny rank, and the factor turns the expensive
//! `M x M` square roots of the Bures cross term into `r x r` problems:
//!
//! ```text
//! tr √(A^{1/2} F Fᵀ A^{1/2}) = tr √(Fᵀ A F)
//! ```

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance (w.r.t. the trace) below which negative eigenvalues are
/// treated as roundoff and clipped to zero.
pub const PSD_TOL: f64 = 1e-10;

/// Default relative cut-off of the pseudo-inverse square root.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues below this fraction of the largest one are dropped from the
/// cached thin factor.
const FACTOR_REL_TOL: f64 = 1e-13;

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, &lambda) in self.values.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(k).scale_mut(s);
        }
        let mut out = scaled * self.vectors.transpose();
        symmetrize_in_place(&mut out);
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|l| l)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_square_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidMatrix(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    Ok(())
}

/// Sorted eigendecomposition of an already symmetric matrix; no validation.
pub(crate) fn eigh(mut a: DMatrix<f64>) -> SymEig {
    symmetrize_in_place(&mut a);
    let n = a.nrows();
    if n == 0 {
        return SymEig { values: Vec::new(), vectors: a };
    }
    let se = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| se.eigenvectors[(r, order[c])]);
    SymEig { values, vectors }
}

/// Eigenvalues of a symmetric matrix, descending; vectors are not formed.
pub(crate) fn eigvalsh(mut a: DMatrix<f64>) -> Vec<f64> {
    symmetrize_in_place(&mut a);
    if a.nrows() == 0 {
        return Vec::new();
    }
    let ev: DVector<f64> = a.symmetric_eigenvalues();
    let mut values: Vec<f64> = ev.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Eigendecomposition `A = V diag(λ) Vᵀ` of a symmetric matrix.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    check_square_finite(a)?;
    Ok(eigh(a.clone()))
}

/// A symmetric positive semi-definite matrix: the finite representation of a
/// covariance operator.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    data: DMatrix<f64>,
    factor: OnceLock<DMatrix<f64>>,
}

impl CovMatrix {
    /// Validates symmetry and positive semi-definiteness. Eigenvalues in
    /// `[-PSD_TOL * trace, 0)` are clipped to zero.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&data)?;
        let scale = 1.0 + data.amax();
        let n = data.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (data[(i, j)] - data[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidMatrix(format!(
                        "not symmetric at ({i}, {j}): {} vs {}",
                        data[(i, j)],
                        data[(j, i)]
                    )));
                }
            }
        }
        let trace = data.trace();
        let eig = eigh(data.clone());
        let min = eig.min_value();
        if trace < 0.0 || min < -PSD_TOL * trace.max(0.0) {
            return Err(Error::NotPsd { min_eigenvalue: min, trace });
        }
        let factor = factor_from_eig(&eig);
        let data = if min < 0.0 {
            eig.map(|l| l.max(0.0))
        } else {
            let mut d = data;
            symmetrize_in_place(&mut d);
            d
        };
        let cell = OnceLock::new();
        let _ = cell.set(factor);
        Ok(Self { data, factor: cell })
    }

    /// Wraps a matrix that is PSD by construction (a congruence or a Gram
    /// product). Only symmetrizes.
    pub(crate) fn from_trusted(mut data: DMatrix<f64>) -> Self {
        symmetrize_in_place(&mut data);
        Self { data, factor: OnceLock::new() }
    }

    /// `F Fᵀ` with the factor kept for later cross terms.
    pub(crate) fn from_factor(factor: DMatrix<f64>) -> Self {
        let mut data = &factor * factor.transpose();
        symmetrize_in_place(&mut data);
        let cell = OnceLock::new();
        let _ = cell.set(factor);
        Self { data, factor: cell }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_trusted(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_trusted(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if let Some(v) = diag.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NotPsd { min_eigenvalue: *v, trace: diag.iter().sum() });
        }
        Ok(Self::from_trusted(DMatrix::from_diagonal(&DVector::from_column_slice(diag))))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn eig(&self) -> SymEig {
        eigh(self.data.clone())
    }

    /// Thin factor `F` (`M x r`) with `F Fᵀ` equal to this matrix up to the
    /// dropped near-null eigenvalues. Computed once and cached.
    pub fn factor(&self) -> &DMatrix<f64> {
        self.factor.get_or_init(|| factor_from_eig(&self.eig()))
    }

    /// Numerical rank as seen by the cached factor.
    pub fn rank(&self) -> usize {
        self.factor().ncols()
    }
}

fn factor_from_eig(eig: &SymEig) -> DMatrix<f64> {
    let n = eig.vectors.nrows();
    let top = eig.max_value();
    let keep: Vec<usize> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.0 && l > FACTOR_REL_TOL * top)
        .map(|(k, _)| k)
        .collect();
    let mut f = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let s = eig.values[k].sqrt();
        f.column_mut(c).copy_from(&(eig.vectors.column(k) * s));
    }
    f
}

/// Principal square root of a PSD matrix. Eigenvalues below the rounding
/// floor `n ε λ_max` are taken as zero, as in the cross term.
pub fn sqrt_psd(a: &CovMatrix) -> Result<CovMatrix> {
    let eig = a.eig();
    let trace = a.trace();
    if eig.min_value() < -PSD_TOL * trace.max(0.0) {
        return Err(Error::NotPsd { min_eigenvalue: eig.min_value(), trace });
    }
    let floor = rounding_floor(&eig.values);
    Ok(CovMatrix::from_trusted(eig.map(|l| if l > floor { l.sqrt() } else { 0.0 })))
}

/// Moore-Penrose pseudo-inverse square root: eigenvalues `λ >= rel_tol * λ_max`
/// map to `λ^{-1/2}`, the rest to zero.
pub fn inv_sqrt_psd(a: &CovMatrix, rel_tol: f64) -> CovMatrix {
    let eig = a.eig();
    let cut = rel_tol * eig.max_value();
    CovMatrix::from_trusted(eig.map(|l| if l > 0.0 && l >= cut { l.powf(-0.5) } else { 0.0 }))
}

/// Nearest PSD matrix in Frobenius norm: symmetrize, then clip negative
/// eigenvalues.
pub fn project_psd(a: &DMatrix<f64>) -> Result<CovMatrix> {
    let eig = sym_eig(a)?;
    Ok(CovMatrix::from_trusted(eig.map(|l| l.max(0.0))))
}

/// `Σ √λ` over the eigenvalues of a PSD matrix. Eigenvalues below the
/// rounding floor `n ε λ_max` are treated as zero: their square roots would
/// otherwise add `O(√ε)` noise per null direction.
pub(crate) fn trace_sqrt_of_eigs(values: &[f64]) -> f64 {
    let floor = rounding_floor(values);
    values.iter().filter(|&&l| l > floor).map(|l| l.sqrt()).sum()
}

/// `n ε λ_max`: eigenvalues of a PSD matrix at or below this are rounding.
pub(crate) fn rounding_floor(values: &[f64]) -> f64 {
    let top = values.iter().fold(0.0f64, |m, &v| m.max(v));
    values.len() as f64 * f64::EPSILON * top
}

/// Squared Wasserstein-Procrustes distance between `F_a F_aᵀ` and
/// `F_b F_bᵀ` in Procrustes form `min_U ‖F_a - F_b U‖²_F`.
///
/// With `F_aᵀ F_b = V Σ Wᵀ` this is `‖F_a V - F_b W‖²` plus the parts of
/// either factor outside the matched directions. Every term is a sum of
/// squares, so nearly equal matrices get a distance at rounding level of
/// `‖F‖` rather than of `‖F‖²` as in the trace form.
pub fn factor_dist2(fa: &DMatrix<f64>, fb: &DMatrix<f64>) -> f64 {
    if fa.ncols() == 0 || fb.ncols() == 0 {
        return fa.norm_squared() + fb.norm_squared();
    }
    let svd = fa.tr_mul(fb).svd(true, true);
    let v = svd.u.expect("left singular vectors requested");
    let w = svd.v_t.expect("right singular vectors requested").transpose();
    let av = fa * &v;
    let bw = fb * &w;
    let rest_a = fa - &av * v.transpose();
    let rest_b = fb - &bw * w.transpose();
    (av - bw).norm_squared() + rest_a.norm_squared() + rest_b.norm_squared()
}

/// `tr √(A^{1/2} B A^{1/2})`, the cross term of the Bures-Wasserstein
/// distance, through the symmetric congruence form.
pub fn trace_sqrt_product(a: &CovMatrix, b: &CovMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    let root = sqrt_psd(a)?;
    let inner = root.matrix() * b.matrix() * root.matrix();
    Ok(trace_sqrt_of_eigs(&eigvalsh(inner)))
}

/// Same quantity as [`trace_sqrt_product`] with `B = F Fᵀ` given by its thin
/// factor: `tr √(Fᵀ A F)`, an `r x r` problem.
pub fn trace_sqrt_product_factored(a: &DMatrix<f64>, b_factor: &DMatrix<f64>) -> f64 {
    if b_factor.ncols() == 0 {
        return 0.0;
    }
    let inner = b_factor.tr_mul(&(a * b_factor));
    trace_sqrt_of_eigs(&eigvalsh(inner))
}
