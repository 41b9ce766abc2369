//! Stochastic medoid search used to seed the block coordinate descent.
//!
//! Prototypes are restricted to observed sample covariances, so the
//! objective `G(i_1, …, i_K)` only needs the cached `N x N` matrix of squared
//! distances and a partition solve. Each start draws a k-means++ style
//! seeding, then runs refinement sweeps that try `ntry` replacements per
//! medoid, sampled with probability proportional to the distance to the
//! nearest other medoid.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;

use super::{partition::solve_partition, SampleCov, SoftClustConfig};
use crate::error::{Error, Result};
use crate::linalg::{factor_dist2, CovMatrix};
use crate::rng::Rng;

/// Squared Wasserstein-Procrustes distances between all pairs of sample
/// covariances, in Procrustes form on their thin factors.
pub fn pairwise_dist2(covs: &[SampleCov]) -> DMatrix<f64> {
    let mats: Vec<&CovMatrix> = covs.iter().map(|c| &c.cov).collect();
    pairwise_dist2_matrices(&mats)
}

/// Squared distances between all pairs of matrices.
pub fn pairwise_dist2_matrices(mats: &[&CovMatrix]) -> DMatrix<f64> {
    let n = mats.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let fa = mats[a].factor();
            (0..n).map(|b| if b <= a { 0.0 } else { factor_dist2(fa, mats[b].factor()) })
                .collect()
        })
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            out[(a, b)] = rows[a][b];
            out[(b, a)] = rows[a][b];
        }
    }
    out
}

/// Restricted objective `G` for prototypes `medoids`; `+∞` when the entropy
/// constraint cannot be met (e.g. duplicated prototypes).
pub fn medoid_objective(pair: &DMatrix<f64>, weights: &[f64], medoids: &[usize], entropy: f64) -> f64 {
    let n = pair.nrows();
    let d = DMatrix::from_fn(n, medoids.len(), |i, j| weights[i] * pair[(i, medoids[j])]);
    match solve_partition(&d, entropy) {
        Ok((p, _)) => p.weighted_sum(&d),
        Err(_) => f64::INFINITY,
    }
}

/// Draws one index with probability proportional to `weights`; uniform over
/// `fallback` when every weight is zero.
fn draw_weighted(rng: &mut Rng, weights: &[f64], fallback: &[usize]) -> usize {
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        let mut x = rng.gen::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                if x < w {
                    return i;
                }
                x -= w;
            }
        }
        // rounding: last positive weight
        return weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    }
    fallback[rng.gen_range(0..fallback.len())]
}

/// Weighted sampling without replacement (Efraimidis-Spirakis keys); items
/// with zero weight are never drawn.
fn sample_weighted(rng: &mut Rng, weights: &[f64], amount: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let u: f64 = rng.gen();
        if w > 0.0 {
            keyed.push((u.ln() / w, i));
        }
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(amount).map(|(_, i)| i).collect()
}

/// Medoid search on a precomputed distance matrix. `weights` are the `n_i - 1`.
pub fn init_medoids_from_distances(
    pair: &DMatrix<f64>,
    weights: &[f64],
    config: &SoftClustConfig,
    rng: &mut Rng,
) -> Result<(Vec<usize>, f64)> {
    let n = pair.nrows();
    let k = config.k;
    if n < k {
        return Err(Error::TooFewItems { needed: k, got: n });
    }
    let entropy = config.avg_entropy;
    let ntry = config.ntry_for(n);
    let mut best: Option<(Vec<usize>, f64)> = None;

    for _ in 0..config.nstart.max(1) {
        let mut medoids = vec![rng.gen_range(0..n)];
        while medoids.len() < k {
            let w: Vec<f64> = (0..n)
                .map(|i| medoids.iter().map(|&m| pair[(i, m)]).fold(f64::INFINITY, f64::min))
                .collect();
            let unused: Vec<usize> = (0..n).filter(|i| !medoids.contains(i)).collect();
            medoids.push(draw_weighted(rng, &w, &unused));
        }
        let mut g = medoid_objective(pair, weights, &medoids, entropy);

        for _ in 0..config.nrefine {
            for j in 0..k {
                let w: Vec<f64> = (0..n)
                    .map(|i| {
                        if k == 1 {
                            1.0
                        } else {
                            (0..k)
                                .filter(|&s| s != j)
                                .map(|s| pair[(i, medoids[s])])
                                .fold(f64::INFINITY, f64::min)
                        }
                    })
                    .collect();
                let candidates = sample_weighted(rng, &w, ntry);
                let incumbent = medoids[j];
                let mut best_j = (incumbent, g);
                for c in candidates {
                    if c == incumbent {
                        continue;
                    }
                    medoids[j] = c;
                    let gc = medoid_objective(pair, weights, &medoids, entropy);
                    if gc < best_j.1 {
                        best_j = (c, gc);
                    }
                }
                medoids[j] = best_j.0;
                g = best_j.1;
            }
        }
        if best.as_ref().map_or(true, |(_, bg)| g < *bg) {
            best = Some((medoids, g));
        }
    }
    Ok(best.expect("at least one start"))
}

/// Indices of `K` sample covariances used as initial barycenters.
pub fn init_medoids(covs: &[SampleCov], config: &SoftClustConfig, rng: &mut Rng) -> Result<Vec<usize>> {
    if covs.len() < config.k {
        return Err(Error::TooFewItems { needed: config.k, got: covs.len() });
    }
    let pair = pairwise_dist2(covs);
    let weights: Vec<f64> = covs.iter().map(SampleCov::weight).collect();
    Ok(init_medoids_from_distances(&pair, &weights, config, rng)?.0)
}
