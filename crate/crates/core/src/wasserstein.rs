//! Wasserstein-Procrustes distance between covariance matrices and the
//! weighted Fréchet mean (Wasserstein barycenter of centred Gaussians).
//!
//! The barycenter iteration is the transport-map fixed point
//! `Σ ← T̄ Σ T̄`, `T̄ = Σ_i w_i T_i / Σ_i w_i`, where `T_i` pushes the current
//! iterate onto member `i`. For a member with thin factor `F` the map reduces
//! to `T_i = F (Fᵀ Σ F)^{-1/2} Fᵀ`, which is what [`frechet_mean`] evaluates;
//! [`transport_map`] keeps the dense form for callers and for checks.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    eigh, eigvalsh, factor_dist2, inv_sqrt_psd, rounding_floor, sqrt_psd, trace_sqrt_of_eigs, trace_sqrt_product_factored,
    CovMatrix,
    DEFAULT_REL_TOL,
};

/// Ridge added to an ill-conditioned base, relative to `tr(Σ)/M`.
pub const RIDGE_EPS: f64 = 1e-10;
/// Condition number above which the ridge is applied.
pub const MAX_CONDITION: f64 = 1e12;

/// Squared Wasserstein-Procrustes distance
/// `tr A + tr B - 2 tr √(A^{1/2} B A^{1/2})`, evaluated in Procrustes form on
/// the cached factors (see [`factor_dist2`]).
pub fn wp_dist2(a: &CovMatrix, b: &CovMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    Ok(factor_dist2(a.factor(), b.factor()))
}

/// Squared distance in trace form with the cross term through the
/// lower-rank factor; cheaper than [`wp_dist2`] for one dense operand but
/// loses relative accuracy for nearly equal matrices.
pub fn wp_dist2_fast(a: &CovMatrix, b: &CovMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    // factor the lower-rank side
    let (dense, thin) = if a.rank() <= b.rank() { (b, a) } else { (a, b) };
    let cross = trace_sqrt_product_factored(dense.matrix(), thin.factor());
    Ok((a.trace() + b.trace() - 2.0 * cross).max(0.0))
}

fn regularized_base(base: &CovMatrix) -> CovMatrix {
    let values = eigvalsh(base.matrix().clone());
    let top = values.first().copied().unwrap_or(0.0);
    let bottom = values.last().copied().unwrap_or(0.0);
    let trace = base.trace();
    if trace > 0.0 && (bottom <= 0.0 || top / bottom > MAX_CONDITION) {
        let ridge = RIDGE_EPS * trace / base.dim() as f64;
        let mut m = base.matrix().clone();
        for k in 0..m.nrows() {
            m[(k, k)] += ridge;
        }
        CovMatrix::from_trusted(m)
    } else {
        base.clone()
    }
}

/// Symmetric map `T = B^{-1/2} (B^{1/2} S B^{1/2})^{1/2} B^{-1/2}` with
/// `T B T = S` for positive definite base `B` and target `S`.
///
/// A base with condition number above [`MAX_CONDITION`] gets a small ridge;
/// the inverse root is a pseudo-inverse with cut-off `rel_tol`.
pub fn transport_map(base: &CovMatrix, target: &CovMatrix, rel_tol: f64) -> Result<DMatrix<f64>> {
    if base.dim() != target.dim() {
        return Err(Error::DimMismatch(base.dim(), target.dim()));
    }
    let base = regularized_base(base);
    let root = sqrt_psd(&base)?;
    let inv_root = inv_sqrt_psd(&base, rel_tol);
    let inner = CovMatrix::from_trusted(root.matrix() * target.matrix() * root.matrix());
    let middle = sqrt_psd(&inner)?;
    let mut t = inv_root.matrix() * middle.matrix() * inv_root.matrix();
    crate::linalg::symmetrize_in_place(&mut t);
    Ok(t)
}

/// Covariance matrices with nonnegative weights, the input of the Fréchet
/// functional `F(Σ) = Σ_i w_i Π²(Σ_i, Σ)`.
#[derive(Debug, Clone)]
pub struct WeightedCovSet<'a> {
    items: Vec<(&'a CovMatrix, f64)>,
    dim: usize,
}

impl<'a> WeightedCovSet<'a> {
    pub fn new(items: Vec<(&'a CovMatrix, f64)>) -> Result<Self> {
        let dim = items.first().map(|(c, _)| c.dim()).ok_or(Error::EmptySet)?;
        for (c, w) in &items {
            if c.dim() != dim {
                return Err(Error::DimMismatch(dim, c.dim()));
            }
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidParam(format!("weight {w} must be finite and nonnegative")));
            }
        }
        if !items.iter().any(|(_, w)| *w > 0.0) {
            return Err(Error::EmptySet);
        }
        Ok(Self { items, dim })
    }

    /// Equal unit weights.
    pub fn uniform(items: &'a [CovMatrix]) -> Result<Self> {
        Self::new(items.iter().map(|c| (c, 1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[(&'a CovMatrix, f64)] {
        &self.items
    }

    pub fn total_weight(&self) -> f64 {
        self.items.iter().map(|(_, w)| w).sum()
    }

    /// Weight-normalized arithmetic mean.
    pub fn arithmetic_mean(&self) -> CovMatrix {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for (c, w) in &self.items {
            if *w > 0.0 {
                acc += c.matrix() * *w;
            }
        }
        CovMatrix::from_trusted(acc / self.total_weight())
    }

    fn active(&self) -> impl Iterator<Item = &(&'a CovMatrix, f64)> {
        self.items.iter().filter(|(_, w)| *w > 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BarycenterOptions {
    pub max_iter: usize,
    /// Stop when `|F_{j+1} - F_j| <= tol * (1 + F_j)`.
    pub tol: f64,
}

impl Default for BarycenterOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct BarycenterResult {
    pub mean: CovMatrix,
    pub iterations: usize,
    /// Fréchet functional at `mean`.
    pub frechet_value: f64,
    pub converged: bool,
    /// Functional value at every iterate, starting with the initial guess.
    pub trace: Vec<f64>,
}

/// Functional value and averaged transport map at one iterate.
struct Evaluation {
    base: CovMatrix,
    value: f64,
    mean_map: DMatrix<f64>,
}

fn evaluate(set: &WeightedCovSet<'_>, base: &CovMatrix) -> Evaluation {
    let base = regularized_base(base);
    let b = base.matrix();
    let base_trace = base.trace();
    let total = set.total_weight();
    let active: Vec<&(&CovMatrix, f64)> = set.active().collect();

    // per member: weighted squared distance and the scaled map factor L_i with
    // w_i T_i / W = L_i L_iᵀ
    let parts: Vec<(f64, DMatrix<f64>)> = active
        .par_iter()
        .map(|(c, w)| {
            let f = c.factor();
            if f.ncols() == 0 {
                return (w * base_trace, DMatrix::zeros(b.nrows(), 0));
            }
            let inner = f.tr_mul(&(b * f));
            let eig = eigh(inner);
            let cross = trace_sqrt_of_eigs(&eig.values);
            let dist2 = (c.trace() + base_trace - 2.0 * cross).max(0.0);
            // the map keeps exactly the directions the value counts, so each
            // step is a descent step for the functional being reported
            let floor = rounding_floor(&eig.values);
            let keep: Vec<usize> = (0..eig.values.len()).filter(|&k| eig.values[k] > floor).collect();
            let scale = (w / total).sqrt();
            let mut v = DMatrix::zeros(eig.vectors.nrows(), keep.len());
            for (col, &k) in keep.iter().enumerate() {
                v.column_mut(col).copy_from(&(eig.vectors.column(k) * (scale * eig.values[k].powf(-0.25))));
            }
            (w * dist2, f * v)
        })
        .collect();

    let value = parts.iter().map(|(d, _)| d).sum();
    let width: usize = parts.iter().map(|(_, l)| l.ncols()).sum();
    let mut stacked = DMatrix::zeros(b.nrows(), width);
    let mut col = 0;
    for (_, l) in &parts {
        stacked.columns_mut(col, l.ncols()).copy_from(l);
        col += l.ncols();
    }
    let mut mean_map = &stacked * stacked.transpose();
    crate::linalg::symmetrize_in_place(&mut mean_map);
    Evaluation { base, value, mean_map }
}

/// Fréchet functional `Σ_i w_i Π²(Σ_i, Σ)`.
pub fn frechet_value(set: &WeightedCovSet<'_>, sigma: &CovMatrix) -> Result<f64> {
    if sigma.dim() != set.dim() {
        return Err(Error::DimMismatch(set.dim(), sigma.dim()));
    }
    let mut value = 0.0;
    for (c, w) in set.active() {
        value += w * wp_dist2_fast(c, sigma)?;
    }
    Ok(value)
}

/// Weight-normalized average of the dense transport maps from `base` to
/// every member; the identity at the barycenter.
pub fn mean_transport_map(set: &WeightedCovSet<'_>, base: &CovMatrix) -> Result<DMatrix<f64>> {
    let total = set.total_weight();
    let mut acc = DMatrix::zeros(set.dim(), set.dim());
    for (c, w) in set.active() {
        acc += transport_map(base, c, DEFAULT_REL_TOL)? * (w / total);
    }
    Ok(acc)
}

/// Weighted Fréchet mean by the fixed-point iteration `Σ ← T̄ Σ T̄`.
///
/// Starts from `init` or, by default, the weight-normalized arithmetic mean,
/// and returns the iterate with the lowest functional value, so the result
/// is never worse than the start.
pub fn frechet_mean(
    set: &WeightedCovSet<'_>,
    init: Option<&CovMatrix>,
    options: BarycenterOptions,
) -> Result<BarycenterResult> {
    let start = match init {
        Some(c) if c.dim() != set.dim() => return Err(Error::DimMismatch(set.dim(), c.dim())),
        Some(c) => c.clone(),
        None => set.arithmetic_mean(),
    };
    let mut current = evaluate(set, &start);
    let mut trace = vec![current.value];
    let mut best = (current.value, current.base.clone());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        let t = &current.mean_map;
        let next = CovMatrix::from_trusted(t * current.base.matrix() * t);
        let next = evaluate(set, &next);
        iterations += 1;
        let change = (next.value - current.value).abs();
        let scale = 1.0 + current.value;
        trace.push(next.value);
        current = next;
        if current.value < best.0 {
            best = (current.value, current.base.clone());
        }
        if change <= options.tol * scale {
            converged = true;
            break;
        }
    }
    let (frechet_value, mean) = best;
    Ok(BarycenterResult { mean, iterations, frechet_value, converged, trace })
}
