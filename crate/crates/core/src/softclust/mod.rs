//! Entropy-constrained soft clustering of sample covariances.
//!
//! The objective is `Σ_i Σ_j π_ij (n_i - 1) Π²(Σ̂_i, Σ̄_j)` over barycenters
//! `Σ̄_j` and a row-stochastic partition with prescribed average entropy.
//! [`fit`] alternates the closed-form partition step
//! ([`partition::solve_partition`]) with weighted Fréchet means, starting from
//! medoids chosen by [`init::init_medoids`]. [`fit_reduced`] estimates the
//! barycenters on random subsets and assigns the full data afterwards.

pub mod init;
pub mod partition;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigh, factor_dist2, CovMatrix};
use crate::rng::{derive_seed, seeded, Rng};
use crate::wasserstein::{frechet_mean, BarycenterOptions, WeightedCovSet};

pub use init::{init_medoids, pairwise_dist2, pairwise_dist2_matrices};
pub use partition::{solve_partition, suggested_entropy, EntropyProfile, PartitionMatrix};

/// A cluster whose total weight `Σ_i π_ij (n_i - 1)` falls below this
/// fraction of `Σ_i (n_i - 1)` is reseeded.
const EMPTY_CLUSTER_FRACTION: f64 = 1e-12;
/// Relative eigenvalue cut-off of the joint range of the inputs.
const RANGE_REL_TOL: f64 = 1e-12;

/// A sample covariance with its sample size; the unit being clustered.
#[derive(Debug, Clone)]
pub struct SampleCov {
    pub id: String,
    pub cov: CovMatrix,
    /// Number of curves the covariance was estimated from.
    pub n: usize,
}

impl SampleCov {
    pub fn new(id: impl Into<String>, cov: CovMatrix, n: usize) -> Result<Self> {
        let id = id.into();
        if n < 2 {
            return Err(Error::TooFewCurves { group: id, got: n });
        }
        Ok(Self { id, cov, n })
    }

    /// `n - 1`, the weight of this item in every sum.
    pub fn weight(&self) -> f64 {
        (self.n - 1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SoftClustConfig {
    pub k: usize,
    /// Target average row entropy `E`, in `[0, log K]`.
    pub avg_entropy: f64,
    pub nstart: usize,
    pub nrefine: usize,
    /// Replacement candidates per medoid and sweep; `None` means `⌈N/K⌉`.
    pub ntry: Option<usize>,
    pub max_bcd_iter: usize,
    /// Relative change of the objective that ends the descent.
    pub bcd_tol: f64,
    pub barycenter_max_iter: usize,
    pub barycenter_tol: f64,
    pub seed: u64,
}

impl SoftClustConfig {
    pub fn new(k: usize, avg_entropy: f64) -> Self {
        let defaults = BarycenterOptions::default();
        Self {
            k,
            avg_entropy,
            nstart: 5,
            nrefine: 5,
            ntry: None,
            max_bcd_iter: 100,
            bcd_tol: 1e-6,
            barycenter_max_iter: defaults.max_iter,
            barycenter_tol: defaults.tol,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn ntry_for(&self, n: usize) -> usize {
        self.ntry.unwrap_or_else(|| n.div_ceil(self.k.max(1))).max(1)
    }

    pub fn barycenter_options(&self) -> BarycenterOptions {
        BarycenterOptions { max_iter: self.barycenter_max_iter, tol: self.barycenter_tol }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParam("K must be at least 1".into()));
        }
        let max = (self.k as f64).ln();
        if !self.avg_entropy.is_finite() || self.avg_entropy < 0.0 || self.avg_entropy > max + 1e-12 {
            return Err(Error::InvalidParam(format!(
                "average entropy {} outside [0, log {}] = [0, {max:.6}]",
                self.avg_entropy, self.k
            )));
        }
        if !(self.bcd_tol >= 0.0) || !(self.barycenter_tol >= 0.0) {
            return Err(Error::InvalidParam("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ClusterSolution {
    pub barycenters: Vec<CovMatrix>,
    pub partition: PartitionMatrix,
    /// Lagrange multiplier of the entropy constraint (`0` hard, `∞` uniform).
    pub eta: f64,
    pub objective: f64,
    /// Achieved average entropy of `partition`.
    pub entropy: f64,
    /// `N x K` matrix of `(n_i - 1) Π²(Σ̂_i, Σ̄_j)`.
    pub dist2: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every partition step.
    pub objective_trace: Vec<f64>,
    /// Items used as initial barycenters.
    pub medoids: Vec<usize>,
    /// Number of barycenters reseeded because their cluster emptied.
    pub reseeds: usize,
    /// Items the barycenters were estimated on, for the reduced mode.
    pub subset: Option<Vec<usize>>,
}

impl ClusterSolution {
    pub fn k(&self) -> usize {
        self.barycenters.len()
    }

    /// Nearest allocation: cluster with the largest grade.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.partition.n_items()).map(|i| self.partition.nearest(i)).collect()
    }

    pub fn credibilities(&self) -> Vec<f64> {
        (0..self.partition.n_items()).map(|i| self.partition.credibility(i)).collect()
    }
}

fn check_inputs(covs: &[SampleCov], config: &SoftClustConfig) -> Result<()> {
    config.validate()?;
    if covs.len() < config.k {
        return Err(Error::TooFewItems { needed: config.k, got: covs.len() });
    }
    let dim = covs[0].cov.dim();
    if let Some(c) = covs.iter().find(|c| c.cov.dim() != dim) {
        return Err(Error::DimMismatch(dim, c.cov.dim()));
    }
    Ok(())
}

/// `(n_i - 1) Π²(Σ̂_i, Σ̄_j)` for every item and barycenter.
pub fn weighted_dist2(covs: &[SampleCov], barycenters: &[CovMatrix]) -> DMatrix<f64> {
    let k = barycenters.len();
    let rows: Vec<Vec<f64>> = covs
        .par_iter()
        .map(|c| {
            let f = c.cov.factor();
            barycenters
                .iter()
                .map(|b| {
                    c.weight() * factor_dist2(f, b.factor())
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(covs.len(), k, |i, j| rows[i][j])
}

struct PartitionStep {
    dist2: DMatrix<f64>,
    partition: PartitionMatrix,
    eta: f64,
    objective: f64,
}

fn partition_step(covs: &[SampleCov], barycenters: &[CovMatrix], entropy: f64) -> Result<PartitionStep> {
    let dist2 = weighted_dist2(covs, barycenters);
    let (partition, eta) = solve_partition(&dist2, entropy)?;
    let objective = partition.weighted_sum(&dist2);
    Ok(PartitionStep { dist2, partition, eta, objective })
}

/// Fréchet mean per cluster with weights `(n_i - 1) π_ij`, warm-started from
/// the current barycenter. Vanishing clusters are moved to the item farthest
/// from every barycenter.
fn barycenter_step(
    covs: &[SampleCov],
    step: &PartitionStep,
    current: &[CovMatrix],
    options: BarycenterOptions,
) -> Result<(Vec<CovMatrix>, usize)> {
    let k = current.len();
    let total: f64 = covs.iter().map(SampleCov::weight).sum();
    let weights: Vec<Vec<f64>> =
        (0..k).map(|j| covs.iter().enumerate().map(|(i, c)| c.weight() * step.partition.get(i, j)).collect()).collect();
    let empty: Vec<bool> = weights.iter().map(|w| w.iter().sum::<f64>() < EMPTY_CLUSTER_FRACTION * total).collect();

    let updated: Vec<Option<CovMatrix>> = (0..k)
        .into_par_iter()
        .map(|j| {
            if empty[j] {
                return Ok(None);
            }
            let set = WeightedCovSet::new(covs.iter().zip(&weights[j]).map(|(c, &w)| (&c.cov, w)).collect())?;
            Ok(Some(frechet_mean(&set, Some(&current[j]), options)?.mean))
        })
        .collect::<Result<_>>()?;

    let mut reseeds = 0;
    let mut taken: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(k);
    for (j, m) in updated.into_iter().enumerate() {
        match m {
            Some(m) => out.push(m),
            None => {
                let far = (0..covs.len())
                    .filter(|i| !taken.contains(i))
                    .map(|i| {
                        let nearest = (0..k).map(|s| step.dist2[(i, s)]).fold(f64::INFINITY, f64::min);
                        (i, nearest / covs[i].weight())
                    })
                    .fold(None::<(usize, f64)>, |acc, x| match acc {
                        Some(a) if a.1 >= x.1 => Some(a),
                        _ => Some(x),
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(j % covs.len());
                taken.push(far);
                reseeds += 1;
                out.push(covs[far].cov.clone());
            }
        }
    }
    Ok((out, reseeds))
}

/// Orthonormal basis of the joint range of `mats`, or `None` when it is the
/// whole space.
fn joint_range<'a>(mats: impl Iterator<Item = &'a CovMatrix>, dim: usize) -> Option<DMatrix<f64>> {
    let mut sum = DMatrix::zeros(dim, dim);
    for m in mats {
        let t = m.trace();
        if t > 0.0 {
            sum += m.matrix() / t;
        }
    }
    let eig = eigh(sum);
    let cut = RANGE_REL_TOL * eig.max_value();
    let keep: Vec<usize> = (0..dim).filter(|&k| eig.values[k] > cut).collect();
    if keep.len() >= dim || keep.is_empty() {
        return None;
    }
    Some(eig.vectors.select_columns(&keep))
}

/// Block coordinate descent from the given starting barycenters.
///
/// When all inputs share a proper subspace (e.g. curves with fewer degrees
/// of freedom than grid points), the descent runs in coordinates of that
/// subspace. Distances and Fréchet means are invariant under the isometric
/// embedding, so this changes only the cost.
pub fn fit_from(
    covs: &[SampleCov],
    config: &SoftClustConfig,
    start: Vec<CovMatrix>,
    medoids: Vec<usize>,
) -> Result<ClusterSolution> {
    check_inputs(covs, config)?;
    if let Some(b) = start.iter().find(|b| b.dim() != covs[0].cov.dim()) {
        return Err(Error::DimMismatch(covs[0].cov.dim(), b.dim()));
    }
    let dim = covs[0].cov.dim();
    let Some(q) = joint_range(covs.iter().map(|c| &c.cov).chain(&start), dim) else {
        return descend(covs, config, start, medoids);
    };
    let project = |m: &CovMatrix| CovMatrix::from_factor(q.tr_mul(m.factor()));
    let reduced: Vec<SampleCov> =
        covs.iter().map(|c| SampleCov { id: c.id.clone(), cov: project(&c.cov), n: c.n }).collect();
    let mut sol = descend(&reduced, config, start.iter().map(project).collect(), medoids)?;
    sol.barycenters = sol.barycenters.iter().map(|b| CovMatrix::from_factor(&q * b.factor())).collect();
    Ok(sol)
}

fn descend(
    covs: &[SampleCov],
    config: &SoftClustConfig,
    start: Vec<CovMatrix>,
    medoids: Vec<usize>,
) -> Result<ClusterSolution> {
    let options = config.barycenter_options();
    let mut barycenters = start;
    let mut step = partition_step(covs, &barycenters, config.avg_entropy)?;
    let mut objective_trace = vec![step.objective];
    let mut iterations = 0;
    let mut converged = step.objective == 0.0;
    let mut reseeds = 0;

    while !converged && iterations < config.max_bcd_iter {
        let (next, r) = barycenter_step(covs, &step, &barycenters, options)?;
        reseeds += r;
        barycenters = next;
        let next_step = partition_step(covs, &barycenters, config.avg_entropy)?;
        iterations += 1;
        let change = (step.objective - next_step.objective).abs();
        converged = r == 0 && change <= config.bcd_tol * step.objective.max(f64::MIN_POSITIVE);
        objective_trace.push(next_step.objective);
        step = next_step;
    }

    let entropy = step.partition.average_entropy();
    Ok(ClusterSolution {
        barycenters,
        partition: step.partition,
        eta: step.eta,
        objective: step.objective,
        entropy,
        dist2: step.dist2,
        iterations,
        converged,
        objective_trace,
        medoids,
        reseeds,
        subset: None,
    })
}

fn fit_with_rng(covs: &[SampleCov], config: &SoftClustConfig, rng: &mut Rng) -> Result<ClusterSolution> {
    check_inputs(covs, config)?;
    let medoids = init_medoids(covs, config, rng)?;
    let start = medoids.iter().map(|&m| covs[m].cov.clone()).collect();
    fit_from(covs, config, start, medoids)
}

/// Soft clustering of all items: medoid initialisation, then block
/// coordinate descent until the relative objective change drops below
/// `bcd_tol`.
pub fn fit(covs: &[SampleCov], config: &SoftClustConfig) -> Result<ClusterSolution> {
    fit_with_rng(covs, config, &mut seeded(config.seed))
}

/// Large-N mode: for each repeat, fit on `n_reduced` items drawn without
/// replacement, then compute the full partition against those barycenters.
/// Keeps the repeat with the lowest full-data objective.
///
/// The first repeat uses the configured seed for its fit, so with
/// `n_reduced = N` and one repeat the result coincides with [`fit`].
pub fn fit_reduced(
    covs: &[SampleCov],
    config: &SoftClustConfig,
    n_reduced: usize,
    repeats: usize,
) -> Result<ClusterSolution> {
    check_inputs(covs, config)?;
    if n_reduced < config.k {
        return Err(Error::TooFewItems { needed: config.k, got: n_reduced });
    }
    if n_reduced > covs.len() {
        return Err(Error::InvalidParam(format!("n_reduced = {n_reduced} exceeds N = {}", covs.len())));
    }
    let mut subset_rng = seeded(derive_seed(config.seed, 0x7265_6475_6365));
    let mut best: Option<ClusterSolution> = None;
    for r in 0..repeats.max(1) {
        let mut subset = rand::seq::index::sample(&mut subset_rng, covs.len(), n_reduced).into_vec();
        subset.sort_unstable();
        let sub: Vec<SampleCov> = subset.iter().map(|&i| covs[i].clone()).collect();
        let mut sub_config = config.clone();
        if r > 0 {
            sub_config.seed = derive_seed(config.seed, r as u64);
        }
        let partial = fit(&sub, &sub_config)?;
        let step = partition_step(covs, &partial.barycenters, config.avg_entropy)?;
        if best.as_ref().map_or(true, |b| step.objective < b.objective) {
            let entropy = step.partition.average_entropy();
            best = Some(ClusterSolution {
                barycenters: partial.barycenters,
                partition: step.partition,
                eta: step.eta,
                objective: step.objective,
                entropy,
                dist2: step.dist2,
                iterations: partial.iterations,
                converged: partial.converged,
                objective_trace: partial.objective_trace,
                medoids: partial.medoids.iter().map(|&m| subset[m]).collect(),
                reseeds: partial.reseeds,
                subset: Some(subset),
            });
        }
    }
    Ok(best.expect("at least one repeat"))
}
