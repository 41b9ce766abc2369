//! Grouped functional data: sample covariance estimation on a grid and the
//! four-cluster synthetic generator.
//!
//! Curves on an `M`-point grid are plain vectors; covariances are `M x M`
//! matrices without quadrature weights. On an evenly spaced grid the weights
//! would be one global scale, which cancels in every ratio and argmin used
//! downstream.

pub mod io;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigh, CovMatrix};
use crate::rng::seeded;
use crate::softclust::SampleCov;

/// Relative cut-off for the rank of a sample covariance.
const RANK_REL_TOL: f64 = 1e-13;

/// Curves of one group evaluated on a shared grid; one row per curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    pub group_id: String,
    pub curves: DMatrix<f64>,
    pub grid: Vec<f64>,
}

impl FunctionalSample {
    pub fn new(group_id: impl Into<String>, curves: DMatrix<f64>, grid: Vec<f64>) -> Result<Self> {
        let group_id = group_id.into();
        if curves.ncols() != grid.len() {
            return Err(Error::DimMismatch(grid.len(), curves.ncols()));
        }
        check_grid(&grid)?;
        if curves.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("group `{group_id}` has non-finite values")));
        }
        Ok(Self { group_id, curves, grid })
    }

    pub fn n_curves(&self) -> usize {
        self.curves.nrows()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Curves minus their pointwise mean.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut c = self.curves.clone();
        let n = c.nrows() as f64;
        for mut col in c.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
        }
        c
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("grid has non-finite points".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Format("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `true` when consecutive spacings agree to a relative `1e-6`.
pub fn is_evenly_spaced(grid: &[f64]) -> bool {
    if grid.len() < 3 {
        return true;
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    grid.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-6 * h.abs())
}

/// Trapezoid weights of a grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let m = grid.len();
    let mut w = vec![0.0; m];
    for k in 0..m.saturating_sub(1) {
        let h = grid[k + 1] - grid[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// Scales column `k` of every curve by `√w_k`, so that plain vector products
/// become quadrature inner products.
pub fn apply_quadrature(sample: &FunctionalSample, weights: &[f64]) -> Result<FunctionalSample> {
    if weights.len() != sample.grid_len() {
        return Err(Error::DimMismatch(sample.grid_len(), weights.len()));
    }
    let mut curves = sample.curves.clone();
    for (k, mut col) in curves.column_iter_mut().enumerate() {
        col.scale_mut(weights[k].sqrt());
    }
    Ok(FunctionalSample { group_id: sample.group_id.clone(), curves, grid: sample.grid.clone() })
}

/// `M` evenly spaced points on `[0, 1]`.
pub fn even_grid(m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..m).map(|k| k as f64 / (m - 1) as f64).collect(),
    }
}

/// Unbiased sample covariance `Σ (x - x̄)(x - x̄)ᵀ / (n - 1)`.
pub fn sample_cov(sample: &FunctionalSample) -> Result<SampleCov> {
    sample_cov_with(sample, true)
}

/// Sample covariance, optionally without subtracting the group mean (for
/// curves that were centred beforehand).
pub fn sample_cov_with(sample: &FunctionalSample, center: bool) -> Result<SampleCov> {
    let n = sample.n_curves();
    if n < 2 {
        return Err(Error::TooFewCurves { group: sample.group_id.clone(), got: n });
    }
    let x = if center { sample.centered() } else { sample.curves.clone() };
    let cov = cov_from_rows(&x, (n - 1) as f64);
    SampleCov::new(sample.group_id.clone(), cov, n)
}

/// `Xᵀ X / denom` built through the `n x n` Gram matrix, which also yields
/// the thin factor.
fn cov_from_rows(x: &DMatrix<f64>, denom: f64) -> CovMatrix {
    let gram = x * x.transpose();
    let eig = eigh(gram);
    let top = eig.max_value();
    let keep: Vec<usize> =
        (0..eig.values.len()).filter(|&k| eig.values[k] > 0.0 && eig.values[k] > RANK_REL_TOL * top).collect();
    let mut u = DMatrix::zeros(x.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        u.column_mut(c).copy_from(&eig.vectors.column(k));
    }
    // Xᵀ u_k = s_k v_k
    let factor = x.tr_mul(&u) / denom.sqrt();
    CovMatrix::from_factor(factor)
}

/// Orthonormal Fourier basis on `[0, 1]`: `1`, `√2 sin((r+1)πu)` for odd `r`,
/// `√2 cos(rπu)` for even `r ≥ 2`.
pub fn fourier_basis(r: usize, grid: &[f64]) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let s2 = std::f64::consts::SQRT_2;
    grid.iter()
        .map(|&u| match r {
            0 => 1.0,
            r if r % 2 == 1 => s2 * ((r + 1) as f64 * pi * u).sin(),
            r => s2 * (r as f64 * pi * u).cos(),
        })
        .collect()
}

/// Parameters of the synthetic model
/// `X = Σ_{r<n_basis} λ^r ξ_r f_r + √s ζ f_{p_c}` for cluster `c`.
#[derive(Debug, Clone, Serialize)]
pub struct SyntheticSpec {
    /// Basis index `p_c` of each cluster's extra component.
    pub perturbation_indices: Vec<usize>,
    pub lambda: f64,
    pub n_basis: usize,
    pub grid_size: usize,
    pub n_per_cluster: usize,
    /// Inclusive range of curves per group, drawn uniformly.
    pub n_min: usize,
    pub n_max: usize,
    /// Coefficient `s` of `Δ_c = s f_{p_c} ⊗ f_{p_c}`.
    pub perturbation_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            perturbation_indices: vec![1, 2, 3, 4],
            lambda: 2.0 / 5f64.sqrt(),
            n_basis: 33,
            grid_size: 101,
            n_per_cluster: 25,
            n_min: 5,
            n_max: 10,
            perturbation_scale: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidParam(format!("lambda = {} must lie in (0, 1)", self.lambda)));
        }
        if self.n_min < 2 || self.n_max < self.n_min {
            return Err(Error::InvalidParam(format!("curve range {}..={} invalid", self.n_min, self.n_max)));
        }
        if self.grid_size < 2 || self.perturbation_indices.is_empty() || self.n_per_cluster == 0 {
            return Err(Error::InvalidParam("grid, cluster list and cluster size must be nonempty".into()));
        }
        if !(self.perturbation_scale >= 0.0) || !self.perturbation_scale.is_finite() {
            return Err(Error::InvalidParam("perturbation scale must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Grid evaluation of the population covariance `Σ + Δ_c`.
    pub fn population_cov(&self, cluster: usize) -> DMatrix<f64> {
        let grid = even_grid(self.grid_size);
        let m = grid.len();
        let mut out = DMatrix::zeros(m, m);
        for r in 0..self.n_basis {
            let f = nalgebra::DVector::from_vec(fourier_basis(r, &grid));
            out.ger(self.lambda.powi(2 * r as i32), &f, &f, 1.0);
        }
        let f = nalgebra::DVector::from_vec(fourier_basis(self.perturbation_indices[cluster], &grid));
        out.ger(self.perturbation_scale, &f, &f, 1.0);
        out
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub samples: Vec<FunctionalSample>,
    /// Generating cluster of every sample.
    pub labels: Vec<usize>,
}

/// Draws `n_per_cluster` groups per cluster, clusters in order. For each
/// group the curve count is drawn first, then per curve the `n_basis` scores
/// followed by the perturbation score.
pub fn simulate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let grid = even_grid(spec.grid_size);
    let m = grid.len();
    let basis: Vec<Vec<f64>> = (0..spec.n_basis).map(|r| fourier_basis(r, &grid)).collect();
    let scales: Vec<f64> = (0..spec.n_basis).map(|r| spec.lambda.powi(r as i32)).collect();
    let bump = spec.perturbation_scale.sqrt();
    let mut rng = seeded(spec.seed);
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (c, &p) in spec.perturbation_indices.iter().enumerate() {
        let extra = fourier_basis(p, &grid);
        for _ in 0..spec.n_per_cluster {
            let n = rng.gen_range(spec.n_min..=spec.n_max);
            let mut curves = DMatrix::zeros(n, m);
            for row in 0..n {
                for r in 0..spec.n_basis {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    let a = scales[r] * xi;
                    for k in 0..m {
                        curves[(row, k)] += a * basis[r][k];
                    }
                }
                let zeta: f64 = StandardNormal.sample(&mut rng);
                for k in 0..m {
                    curves[(row, k)] += bump * zeta * extra[k];
                }
            }
            let id = format!("g{:05}", samples.len());
            samples.push(FunctionalSample { group_id: id, curves, grid: grid.clone() });
            labels.push(c);
        }
    }
    Ok(SyntheticData { samples, labels })
}

/// Sample covariances of every group.
pub fn sample_covs(samples: &[FunctionalSample]) -> Result<Vec<SampleCov>> {
    samples.iter().map(sample_cov).collect()
}
