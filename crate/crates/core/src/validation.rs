//! Cluster-quality diagnostics: fast silhouettes, credibility, the trimmed
//! average silhouette width (TASW), K selection, a permutation test for the
//! no-cluster null, and classical MDS coordinates.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{sample_cov_with, FunctionalSample};
use crate::error::{Error, Result};
use crate::linalg::{eigh, CovMatrix};
use crate::rng::{derive_seed, seeded};
use crate::softclust::{fit, pairwise_dist2_matrices, ClusterSolution, SampleCov, SoftClustConfig};

/// Default relative threshold of the K candidate set.
pub const DEFAULT_DELTA: f64 = 0.05;
/// Default number of permutations.
pub const DEFAULT_N_PERM: usize = 200;

/// Slack when comparing a credibility with the mean credibility, so that
/// equal credibilities are never split by rounding of the mean.
const GOOD_REL_SLACK: f64 = 1e-12;

const PERM_SHUFFLE_TAG: u64 = 0x7368_7566;
const PERM_FIT_TAG: u64 = 0x6669_74;

/// Fast silhouette `1 - Π(i, nearest) / Π(i, second nearest)` of every item,
/// with unsquared distances to the barycenters.
pub fn silhouette_widths(covs: &[SampleCov], solution: &ClusterSolution) -> Result<Vec<f64>> {
    let k = solution.k();
    if k < 2 {
        return Err(Error::NeedsTwoClusters);
    }
    if covs.len() != solution.dist2.nrows() {
        return Err(Error::DimMismatch(solution.dist2.nrows(), covs.len()));
    }
    Ok(covs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let d: Vec<f64> = (0..k).map(|j| (solution.dist2[(i, j)] / c.weight()).max(0.0).sqrt()).collect();
            silhouette_from_distances(&d)
        })
        .collect())
}

/// Silhouette of one item from its distances to `K ≥ 2` barycenters; ties go
/// to the lower index, and a zero second-nearest distance gives 0.
pub fn silhouette_from_distances(d: &[f64]) -> f64 {
    let mut first = 0;
    for j in 1..d.len() {
        if d[j] < d[first] {
            first = j;
        }
    }
    let second = (0..d.len()).filter(|&j| j != first).fold(None::<usize>, |acc, j| match acc {
        Some(s) if d[s] <= d[j] => Some(s),
        _ => Some(j),
    });
    let b = d[second.expect("at least two clusters")];
    if b == 0.0 {
        0.0
    } else {
        1.0 - d[first] / b
    }
}

/// Items whose credibility is at least the mean credibility.
pub fn good_mask(credibilities: &[f64]) -> Vec<bool> {
    let mean = credibilities.iter().sum::<f64>() / credibilities.len() as f64;
    let cut = mean - GOOD_REL_SLACK * mean.abs();
    credibilities.iter().map(|&c| c >= cut).collect()
}

/// Weighted mean of `silhouettes` over the GOOD items.
pub fn trimmed_silhouette(silhouettes: &[f64], credibilities: &[f64], weights: &[f64]) -> (f64, Vec<bool>) {
    let good = good_mask(credibilities);
    let (num, den) = good
        .iter()
        .zip(silhouettes.iter().zip(weights))
        .filter(|(g, _)| **g)
        .fold((0.0, 0.0), |(n, d), (_, (s, w))| (n + w * s, d + w));
    (num / den, good)
}

/// TASW with its silhouettes, credibilities and GOOD set.
#[derive(Debug, Clone, Serialize)]
pub struct TaswParts {
    pub tasw: f64,
    pub silhouettes: Vec<f64>,
    pub credibilities: Vec<f64>,
    pub good_mask: Vec<bool>,
}

pub fn tasw_parts(covs: &[SampleCov], solution: &ClusterSolution) -> Result<TaswParts> {
    let silhouettes = silhouette_widths(covs, solution)?;
    let credibilities = solution.credibilities();
    let weights: Vec<f64> = covs.iter().map(SampleCov::weight).collect();
    let (tasw, good_mask) = trimmed_silhouette(&silhouettes, &credibilities, &weights);
    Ok(TaswParts { tasw, silhouettes, credibilities, good_mask })
}

pub fn tasw(covs: &[SampleCov], solution: &ClusterSolution) -> Result<f64> {
    Ok(tasw_parts(covs, solution)?.tasw)
}

#[derive(Debug, Clone, Serialize)]
pub struct TaswEntry {
    pub k: usize,
    #[serde(flatten)]
    pub parts: TaswParts,
    #[serde(skip)]
    pub solution: ClusterSolution,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaswProfile {
    /// One entry per K, in increasing K.
    pub entries: Vec<TaswEntry>,
    pub k_hat: usize,
    pub tasw_max: f64,
    pub delta: f64,
    /// Every K with `TASW_max - TASW_K ≤ δ |TASW_max|`.
    pub candidate_set: Vec<usize>,
}

impl TaswProfile {
    pub fn entry(&self, k: usize) -> Option<&TaswEntry> {
        self.entries.iter().find(|e| e.k == k)
    }
}

/// Seed of the fit for `k` clusters within a scan.
pub fn scan_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, k as u64)
}

/// Fits every `K` in `k_range` independently with the same average entropy
/// and records the TASW profile. `K̂` is the first maximiser.
pub fn tasw_scan(
    covs: &[SampleCov],
    config: &SoftClustConfig,
    k_range: std::ops::RangeInclusive<usize>,
    delta: f64,
) -> Result<TaswProfile> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi < lo {
        return Err(Error::InvalidParam(format!("K range {lo}..={hi} must start at 2 or more and be nonempty")));
    }
    if hi > covs.len() {
        return Err(Error::TooFewItems { needed: hi, got: covs.len() });
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParam(format!("delta = {delta} must be finite and nonnegative")));
    }
    let mut entries = Vec::with_capacity(hi - lo + 1);
    for k in k_range {
        let mut c = config.clone();
        c.k = k;
        c.seed = scan_seed(config.seed, k);
        let solution = fit(covs, &c)?;
        let parts = tasw_parts(covs, &solution)?;
        entries.push(TaswEntry { k, parts, solution });
    }
    let best = entries.iter().fold(&entries[0], |b, e| if e.parts.tasw > b.parts.tasw { e } else { b });
    let (k_hat, tasw_max) = (best.k, best.parts.tasw);
    let candidate_set =
        entries.iter().filter(|e| tasw_max - e.parts.tasw <= delta * tasw_max.abs()).map(|e| e.k).collect();
    Ok(TaswProfile { entries, k_hat, tasw_max, delta, candidate_set })
}

#[derive(Debug, Clone, Serialize)]
pub struct PermTestOptions {
    pub n_perm: usize,
    pub delta: f64,
    pub seed: u64,
    /// Re-centre each permuted group by its own mean before estimating its
    /// covariance. Without it the permuted curves are used as pooled.
    pub recenter: bool,
}

impl Default for PermTestOptions {
    fn default() -> Self {
        Self { n_perm: DEFAULT_N_PERM, delta: DEFAULT_DELTA, seed: 0, recenter: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PermTestResult {
    pub observed_tasw_max: f64,
    pub observed_k_hat: usize,
    pub null_samples: Vec<f64>,
    pub p_value: f64,
}

/// Add-one p-value `(1 + #{null ≥ observed}) / (1 + #null)`.
pub fn permutation_p_value(observed: f64, null: &[f64]) -> f64 {
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    (1 + exceed) as f64 / (1 + null.len()) as f64
}

/// Permutation test of "no clusters": the within-group-centred curves are
/// pooled, shuffled and re-split into groups of the original sizes, and the
/// maximal TASW over `k_range` is recomputed on every replicate.
///
/// The observed statistic uses `config.seed`; replicate `p` shuffles with a
/// stream derived from `(options.seed, p)` and fits with a seed derived the
/// same way. Replicates run in parallel and are collected in index order.
pub fn permutation_test(
    samples: &[FunctionalSample],
    config: &SoftClustConfig,
    k_range: std::ops::RangeInclusive<usize>,
    options: &PermTestOptions,
) -> Result<PermTestResult> {
    if samples.is_empty() {
        return Err(Error::RequiresRawCurves);
    }
    if options.n_perm == 0 {
        return Err(Error::InvalidParam("n_perm must be at least 1".into()));
    }
    let m = samples[0].grid_len();
    if let Some(s) = samples.iter().find(|s| s.grid != samples[0].grid) {
        return Err(Error::Format(format!("group `{}` uses a different grid", s.group_id)));
    }
    let covs: Vec<SampleCov> = samples.iter().map(|s| sample_cov_with(s, true)).collect::<Result<_>>()?;
    let observed = tasw_scan(&covs, config, k_range.clone(), options.delta)?;

    let sizes: Vec<usize> = samples.iter().map(FunctionalSample::n_curves).collect();
    let total: usize = sizes.iter().sum();
    let mut pooled = DMatrix::zeros(total, m);
    let mut row = 0;
    for s in samples {
        let c = s.centered();
        pooled.rows_mut(row, c.nrows()).copy_from(&c);
        row += c.nrows();
    }

    let null_samples: Vec<f64> = (0..options.n_perm)
        .into_par_iter()
        .map(|p| {
            let mut order: Vec<usize> = (0..total).collect();
            order.shuffle(&mut seeded(derive_seed(options.seed, PERM_SHUFFLE_TAG ^ p as u64)));
            let mut start = 0;
            let mut perm_covs = Vec::with_capacity(samples.len());
            for (s, &n) in samples.iter().zip(&sizes) {
                let curves = DMatrix::from_fn(n, m, |i, k| pooled[(order[start + i], k)]);
                start += n;
                let group = FunctionalSample { group_id: s.group_id.clone(), curves, grid: s.grid.clone() };
                perm_covs.push(sample_cov_with(&group, options.recenter)?);
            }
            let mut c = config.clone();
            c.seed = derive_seed(options.seed, PERM_FIT_TAG ^ (p as u64).rotate_left(32));
            Ok(tasw_scan(&perm_covs, &c, k_range.clone(), options.delta)?.tasw_max)
        })
        .collect::<Result<_>>()?;

    Ok(PermTestResult {
        observed_tasw_max: observed.tasw_max,
        observed_k_hat: observed.k_hat,
        p_value: permutation_p_value(observed.tasw_max, &null_samples),
        null_samples,
    })
}

/// Classical MDS of a squared-distance matrix: top `dim_out` eigenvectors of
/// the double-centred matrix scaled by root eigenvalues. Dimensions without a
/// positive eigenvalue are zero. Each axis is oriented so that its entry of
/// largest magnitude (first one on ties) is positive.
pub fn mds_from_dist2(dist2: &DMatrix<f64>, dim_out: usize) -> Result<DMatrix<f64>> {
    let n = dist2.nrows();
    if dist2.ncols() != n {
        return Err(Error::InvalidMatrix("distance matrix must be square".into()));
    }
    if n < 2 {
        return Err(Error::TooFewItems { needed: 2, got: n });
    }
    if dim_out == 0 || dim_out > n - 1 {
        return Err(Error::InvalidParam(format!("output dimension {dim_out} must lie in 1..={}", n - 1)));
    }
    let row_means: Vec<f64> = (0..n).map(|i| dist2.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (dist2[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = eigh(b);
    let top = eig.max_value().max(0.0);
    let mut out = DMatrix::zeros(n, dim_out);
    for d in 0..dim_out {
        let lambda = eig.values[d];
        if !(lambda > 1e-12 * top) {
            continue;
        }
        let v = eig.vectors.column(d);
        let pivot = (0..n).fold(0, |p, i| if v[i].abs() > v[p].abs() { i } else { p });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * lambda.sqrt();
        for i in 0..n {
            out[(i, d)] = scale * v[i];
        }
    }
    Ok(out)
}

/// MDS coordinates of matrices under the Wasserstein-Procrustes distance.
pub fn mds_coords(matrices: &[CovMatrix], dim_out: usize) -> Result<DMatrix<f64>> {
    if let Some(m) = matrices.iter().find(|m| m.dim() != matrices[0].dim()) {
        return Err(Error::DimMismatch(matrices[0].dim(), m.dim()));
    }
    let refs: Vec<&CovMatrix> = matrices.iter().collect();
    mds_from_dist2(&pairwise_dist2_matrices(&refs), dim_out)
}
