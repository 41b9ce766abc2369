//! Partition matrix under the average-entropy constraint.
//!
//! Given weighted squared distances `d[i][j]`, the optimal grades are the row
//! softmax `π_ij(η) ∝ exp(-d_ij / η)` at the unique `η > 0` where the total
//! entropy `Ψ(η) = -Σ π log π` equals `N E`. `Ψ` increases monotonically from
//! `Ψ(0⁺)` to `N log K`, with `dΨ/dη = V²(η)/η³`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Stopping tolerance of the η root, relative to `N`.
const ROOT_TOL: f64 = 1e-12;
/// Acceptance tolerance of the entropy constraint, relative to `N`.
pub const ENTROPY_TOL: f64 = 1e-9;

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Average entropy for a prior guess of the confusion level: a fraction
/// `1 - alpha` of the items sit in one cluster with grade `1 - beta`, the rest
/// split evenly between two clusters.
///
/// `0 log 0` is taken as 0, so the closed unit interval is accepted.
pub fn suggested_entropy(alpha: f64, beta: f64) -> Result<f64> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParam(format!("{name} = {v} must lie in [0, 1]")));
        }
    }
    Ok(-(1.0 - alpha) * (xlogx(beta) + xlogx(1.0 - beta)) + alpha * std::f64::consts::LN_2)
}

/// `N x K` row-stochastic membership grades.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMatrix {
    grades: DMatrix<f64>,
}

/// Serialized as a list of rows.
impl Serialize for PartitionMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self.grades.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(serializer)
    }
}

impl PartitionMatrix {
    /// Checks nonnegativity and unit row sums (within `1e-10`).
    pub fn new(grades: DMatrix<f64>) -> Result<Self> {
        for i in 0..grades.nrows() {
            let row = grades.row(i);
            if row.iter().any(|g| !g.is_finite() || *g < 0.0) {
                return Err(Error::InvalidParam(format!("row {i} has a negative or non-finite grade")));
            }
            if (row.sum() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParam(format!("row {i} sums to {}", row.sum())));
            }
        }
        Ok(Self { grades })
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        Self { grades: DMatrix::from_element(n, k, 1.0 / k as f64) }
    }

    pub fn grades(&self) -> &DMatrix<f64> {
        &self.grades
    }

    pub fn n_items(&self) -> usize {
        self.grades.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.grades.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.grades[(i, j)]
    }

    /// Cluster with the largest grade, lowest index on ties.
    pub fn nearest(&self, i: usize) -> usize {
        let row = self.grades.row(i);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        best
    }

    /// `max_j π_ij`.
    pub fn credibility(&self, i: usize) -> f64 {
        self.grades.row(i).max()
    }

    /// `-(1/N) Σ π log π`.
    pub fn average_entropy(&self) -> f64 {
        -self.grades.iter().map(|&g| xlogx(g)).sum::<f64>() / self.n_items() as f64
    }

    /// `Pᵀ P`, the cluster overlap report.
    pub fn cross_product(&self) -> DMatrix<f64> {
        self.grades.tr_mul(&self.grades)
    }

    /// `Σ π_ij d_ij`.
    pub fn weighted_sum(&self, dist2: &DMatrix<f64>) -> f64 {
        self.grades.component_mul(dist2).sum()
    }
}

/// Distances viewed as a function of the multiplier η.
#[derive(Debug, Clone, Copy)]
pub struct EntropyProfile<'a> {
    dist2: &'a DMatrix<f64>,
}

/// Per-row quantities at one η.
struct RowStats {
    psi: f64,
    phi: f64,
    variance: f64,
}

impl<'a> EntropyProfile<'a> {
    pub fn new(dist2: &'a DMatrix<f64>) -> Result<Self> {
        for j in 0..dist2.ncols() {
            for i in 0..dist2.nrows() {
                let v = dist2[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidDistance { row: i, col: j, value: v });
                }
            }
        }
        Ok(Self { dist2 })
    }

    fn fill_row(&self, i: usize, eta: f64, out: &mut [f64]) -> f64 {
        let row = self.dist2.row(i);
        let min = row.min();
        let mut z = 0.0;
        for (o, &d) in out.iter_mut().zip(row.iter()) {
            *o = (-(d - min) / eta).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
        z
    }

    fn stats(&self, eta: f64) -> RowStats {
        let k = self.dist2.ncols();
        let mut buf = vec![0.0; k];
        let mut acc = RowStats { psi: 0.0, phi: 0.0, variance: 0.0 };
        for i in 0..self.dist2.nrows() {
            let z = self.fill_row(i, eta, &mut buf);
            let row = self.dist2.row(i);
            let min = row.min();
            let mean: f64 = buf.iter().zip(row.iter()).map(|(p, d)| p * d).sum();
            // -Σ π log π = Σ π (d - min)/η + log Z
            acc.psi += (mean - min) / eta + z.ln();
            acc.phi += mean;
            acc.variance += buf.iter().zip(row.iter()).map(|(p, d)| p * (d - mean).powi(2)).sum::<f64>();
        }
        acc
    }

    /// `π(η)`.
    pub fn grades(&self, eta: f64) -> DMatrix<f64> {
        let (n, k) = self.dist2.shape();
        let mut out = DMatrix::zeros(n, k);
        let mut buf = vec![0.0; k];
        for i in 0..n {
            self.fill_row(i, eta, &mut buf);
            for j in 0..k {
                out[(i, j)] = buf[j];
            }
        }
        out
    }

    /// Total entropy `Ψ(η)`.
    pub fn psi(&self, eta: f64) -> f64 {
        self.stats(eta).psi
    }

    /// Weighted cost `Φ(η) = Σ π_ij(η) d_ij`.
    pub fn phi(&self, eta: f64) -> f64 {
        self.stats(eta).phi
    }

    /// `V²(η) = Σ π_ij (d_ij - d̄_i)²`.
    pub fn variance(&self, eta: f64) -> f64 {
        self.stats(eta).variance
    }

    /// `Ψ(0⁺)`: rows whose minimum is attained `m` times keep entropy `log m`.
    pub fn entropy_floor(&self) -> f64 {
        (0..self.dist2.nrows())
            .map(|i| {
                let row = self.dist2.row(i);
                let min = row.min();
                (row.iter().filter(|&&d| d == min).count() as f64).ln()
            })
            .sum()
    }
}

fn hard_assignment(dist2: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = dist2.shape();
    let mut out = DMatrix::zeros(n, k);
    for i in 0..n {
        let row = dist2.row(i);
        let mut best = 0;
        for j in 1..k {
            if row[j] < row[best] {
                best = j;
            }
        }
        out[(i, best)] = 1.0;
    }
    out
}

/// Optimal grades for fixed distances under average entropy `entropy`.
///
/// Returns the partition and the multiplier η: `0` for the hard assignment at
/// `E = 0`, `+∞` for the uniform partition at `E = log K`.
pub fn solve_partition(dist2: &DMatrix<f64>, entropy: f64) -> Result<(PartitionMatrix, f64)> {
    let profile = EntropyProfile::new(dist2)?;
    let (n, k) = dist2.shape();
    if n == 0 || k == 0 {
        return Err(Error::TooFewItems { needed: 1, got: 0 });
    }
    let max_entropy = (k as f64).ln();
    if !entropy.is_finite() || entropy < 0.0 || entropy > max_entropy + 1e-12 {
        return Err(Error::InvalidParam(format!("average entropy {entropy} outside [0, log {k}]")));
    }
    if entropy == 0.0 {
        return Ok((PartitionMatrix { grades: hard_assignment(dist2) }, 0.0));
    }
    if entropy >= max_entropy {
        return Ok((PartitionMatrix::uniform(n, k), f64::INFINITY));
    }

    let target = n as f64 * entropy;
    let floor = profile.entropy_floor();
    if target <= floor {
        return Err(Error::DegenerateDistances(format!(
            "tied row minima give entropy {:.6} per item, above the requested {entropy}",
            floor / n as f64
        )));
    }

    let eta = find_eta(&profile, target, n as f64)?;
    Ok((PartitionMatrix { grades: profile.grades(eta) }, eta))
}

/// Root of `Ψ(η) = target` in `u = log η`, starting from the mean distance.
///
/// Newton steps use `dΨ/du = V²/η²`. Every evaluation tightens a sign
/// bracket; steps that leave it, or any step before both ends are known and
/// Newton is unusable, fall back to bisection or to doubling/halving η.
fn find_eta(profile: &EntropyProfile<'_>, target: f64, n: f64) -> Result<f64> {
    let eval = |u: f64| {
        let eta = u.exp();
        let st = profile.stats(eta);
        (st.psi - target, st.variance / (eta * eta))
    };
    let accept = ENTROPY_TOL * n;
    let stop = ROOT_TOL * n;
    const STEP: f64 = std::f64::consts::LN_2;
    const MAX_NEWTON_STEP: f64 = 8.0;
    const SPAN: f64 = 1400.0;

    let u0 = profile.dist2.mean().ln();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best = (u0, f64::INFINITY);
    let mut u = u0;
    let mut bracket_step = STEP;
    for _ in 0..400 {
        let (g, dg) = eval(u);
        if g.abs() < best.1.abs() {
            best = (u, g);
        }
        if g.abs() <= stop {
            return Ok(u.exp());
        }
        if g < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let newton = u - g / dg;
        let next = if dg > 0.0 && newton.is_finite() && newton > lo && newton < hi && (newton - u).abs() <= MAX_NEWTON_STEP
        {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            // expand geometrically towards the missing end of the bracket
            bracket_step *= 2.0;
            if g < 0.0 {
                u + bracket_step
            } else {
                u - bracket_step
            }
        };
        let saturated = (next - u0).abs() > SPAN || !next.exp().is_finite() || next.exp() == 0.0;
        let collapsed = (hi - lo) <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
        if saturated || (lo.is_finite() && hi.is_finite() && collapsed) || next == u {
            break;
        }
        u = next;
    }
    if best.1.abs() <= accept {
        Ok(best.0.exp())
    } else {
        Err(Error::DegenerateDistances(format!(
            "entropy root not resolved: residual {:e} at η = {:e}",
            best.1,
            best.0.exp()
        )))
    }
}
