//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all criteria with `cargo test -p covclust-tests --test acceptance`, or
//! a subset by passing criterion numbers after `--`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use covclust::dataio::{sample_covs, simulate, FunctionalSample, SyntheticSpec};
use covclust::rng::{derive_seed, seeded, Rng};
use covclust::softclust::{
    fit, fit_reduced, solve_partition, suggested_entropy, EntropyProfile, SoftClustConfig,
};
use covclust::validation::{permutation_test, tasw_scan, PermTestOptions, DEFAULT_DELTA};
use covclust::wasserstein::{frechet_mean, mean_transport_map, wp_dist2, BarycenterOptions, WeightedCovSet};
use covclust::CovMatrix;
use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

const SIM_SEED: u64 = 0x5EED_0001;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn progress(msg: impl AsRef<str>) {
    eprintln!("  .. {}", msg.as_ref());
    let _ = std::io::stderr().flush();
}

fn entropy() -> f64 {
    suggested_entropy(0.25, 0.05).unwrap()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Misclassification under the best relabelling of the predicted clusters,
/// with the per-item mistake flags.
fn best_match_errors(truth: &[usize], predicted: &[usize], k: usize) -> (f64, Vec<bool>) {
    let mut best: Option<Vec<bool>> = None;
    for perm in permutations(k) {
        let wrong: Vec<bool> = truth.iter().zip(predicted).map(|(&t, &p)| perm[p] != t).collect();
        if best.as_ref().map_or(true, |b| wrong.iter().filter(|&&w| w).count() < b.iter().filter(|&&w| w).count()) {
            best = Some(wrong);
        }
    }
    let wrong = best.unwrap();
    (wrong.iter().filter(|&&w| w).count() as f64 / truth.len() as f64, wrong)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------- 1, 2, 3

const REPLICATES: u64 = 20;

struct Replicate {
    k_hat: usize,
    error_k4: f64,
    credibility: Vec<f64>,
    wrong: Vec<bool>,
}

fn synthetic_replicate(r: u64) -> Replicate {
    let spec = SyntheticSpec { seed: derive_seed(SIM_SEED, r), ..Default::default() };
    let data = simulate(&spec).unwrap();
    let covs = sample_covs(&data.samples).unwrap();
    let config = SoftClustConfig::new(2, entropy()).with_seed(r);
    let profile = tasw_scan(&covs, &config, 2..=10, DEFAULT_DELTA).unwrap();
    let sol = &profile.entry(4).unwrap().solution;
    let (error_k4, wrong) = best_match_errors(&data.labels, &sol.labels(), 4);
    let tasw: Vec<String> = profile.entries.iter().map(|e| format!("{}:{:.3}", e.k, e.parts.tasw)).collect();
    progress(format!("replicate {r}: K̂ = {}, error(K=4) = {:.3}, TASW {}", profile.k_hat, error_k4, tasw.join(" ")));
    Replicate { k_hat: profile.k_hat, error_k4, credibility: sol.credibilities(), wrong }
}

fn criterion_1(reps: &[Replicate]) -> Outcome {
    let hits = reps.iter().filter(|r| r.k_hat == 4).count();
    let k_hats: Vec<usize> = reps.iter().map(|r| r.k_hat).collect();
    Outcome::new(hits >= 18, format!("K̂ = 4 in {hits}/{} replicates (need ≥ 18); K̂ = {k_hats:?}", reps.len()))
}

fn criterion_2(reps: &[Replicate]) -> Outcome {
    let errors: Vec<f64> = reps.iter().map(|r| r.error_k4).collect();
    let med = median(&errors);
    let (lo, hi) = errors.iter().fold((1.0f64, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    Outcome::new(
        (0.03..=0.12).contains(&med),
        format!("median K=4 error {:.1}% (need 3–12%); range {:.1}–{:.1}%", 100.0 * med, 100.0 * lo, 100.0 * hi),
    )
}

fn criterion_3(reps: &[Replicate]) -> Outcome {
    let items: Vec<(f64, bool)> =
        reps.iter().flat_map(|r| r.credibility.iter().copied().zip(r.wrong.iter().copied())).collect();
    let rate = |pred: &dyn Fn(f64) -> bool| {
        let bin: Vec<bool> = items.iter().filter(|(c, _)| pred(*c)).map(|&(_, w)| w).collect();
        let err = if bin.is_empty() { f64::NAN } else { bin.iter().filter(|&&w| w).count() as f64 / bin.len() as f64 };
        (err, bin.len())
    };
    let (err_hi, n_hi) = rate(&|c| c > 0.9);
    let (err_lo, n_lo) = rate(&|c| c <= 0.5);
    let frac_hi = n_hi as f64 / items.len() as f64;
    let pass = err_hi <= 0.02 && err_lo >= 0.40 && (0.55..=0.85).contains(&frac_hi);
    Outcome::new(
        pass,
        format!(
            "error in (0.9, 1] {:.1}% (need ≤ 2%), in [0, 0.5] {:.1}% over {n_lo} items (need ≥ 40%), \
             share in (0.9, 1] {:.1}% (need 55–85%)",
            100.0 * err_hi,
            100.0 * err_lo,
            100.0 * frac_hi
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let spec = SyntheticSpec { n_per_cluster: 500, seed: derive_seed(SIM_SEED, 4000), ..Default::default() };
    let data = simulate(&spec).unwrap();
    let covs = sample_covs(&data.samples).unwrap();
    let config = SoftClustConfig::new(4, entropy()).with_seed(4);
    let t = Instant::now();
    let full = fit(&covs, &config).unwrap();
    progress(format!("N = 2000 full fit in {:.1}s", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let reduced = fit_reduced(&covs, &config, 200, 1).unwrap();
    progress(format!("N = 2000 reduced fit in {:.1}s", t.elapsed().as_secs_f64()));
    let (e_full, _) = best_match_errors(&data.labels, &full.labels(), 4);
    let (e_red, _) = best_match_errors(&data.labels, &reduced.labels(), 4);
    let gap = (e_full - e_red).abs();
    Outcome::new(
        gap <= 0.03,
        format!(
            "full error {:.2}%, reduced (200 of 2000) {:.2}%, gap {:.2} pp (need ≤ 3)",
            100.0 * e_full,
            100.0 * e_red,
            100.0 * gap
        ),
    )
}

// ---------------------------------------------------------------- 5

fn random_distances(rng: &mut Rng) -> DMatrix<f64> {
    let n = rng.gen_range(1..=50);
    let k = rng.gen_range(2..=6);
    let scale = 10f64.powf(rng.gen_range(-2.0..3.0));
    DMatrix::from_fn(n, k, |_, _| scale * rng.gen::<f64>())
}

fn entropy_of(grades: &DMatrix<f64>) -> f64 {
    -grades.iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>()
}

fn hard(d: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d.nrows(), d.ncols());
    for i in 0..d.nrows() {
        let j = (0..d.ncols()).fold(0, |b, j| if d[(i, j)] < d[(i, b)] { j } else { b });
        out[(i, j)] = 1.0;
    }
    out
}

/// Returns the first violated property, if any.
fn partition_properties(d: &DMatrix<f64>, rng: &mut Rng) -> Result<(), String> {
    let (n, k) = d.shape();
    let nf = n as f64;
    let p = EntropyProfile::new(d).unwrap();
    let mean = d.mean();

    let mut prev = f64::NEG_INFINITY;
    for s in 0..=80 {
        let eta = mean * 10f64.powf(-4.0 + s as f64 * 0.1);
        let psi = p.psi(eta);
        if psi < prev - 1e-12 * nf {
            return Err(format!("Ψ decreases at η = {eta:e}: {prev} -> {psi}"));
        }
        prev = psi;
    }

    for f in [0.3, 1.0, 3.0] {
        let eta = f * mean;
        let h = 1e-4 * eta;
        let v2 = p.variance(eta);
        let dphi = (p.phi(eta + h) - p.phi(eta - h)) / (2.0 * h);
        let dpsi = (p.psi(eta + h) - p.psi(eta - h)) / (2.0 * h);
        let (a_phi, a_psi) = (v2 / (eta * eta), v2 / eta.powi(3));
        if (dphi - a_phi).abs() > 1e-4 * a_phi.abs() {
            return Err(format!("dΦ/dη = {dphi:e} vs V²/η² = {a_phi:e} at η = {eta:e}"));
        }
        if (dpsi - a_psi).abs() > 1e-4 * a_psi.abs() {
            return Err(format!("dΨ/dη = {dpsi:e} vs V²/η³ = {a_psi:e} at η = {eta:e}"));
        }
    }

    let max = (k as f64).ln();
    for _ in 0..3 {
        let e = max * rng.gen_range(0.02..0.98);
        let (part, _) = solve_partition(d, e).map_err(|err| format!("solve at E = {e}: {err}"))?;
        let got = entropy_of(part.grades());
        if (got - nf * e).abs() > 1e-9 * nf {
            return Err(format!("entropy {got} vs target {} (E = {e})", nf * e));
        }
    }

    // η → 0⁺: hard nearest assignment with zero entropy
    let gap = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = d.row(i).iter().copied().collect();
            row.sort_by(f64::total_cmp);
            row[1] - row[0]
        })
        .fold(f64::INFINITY, f64::min);
    let eta0 = gap / 1e3;
    let limit = hard(d);
    if (p.grades(eta0) - &limit).amax() > 1e-12 || p.psi(eta0) > 1e-9 * nf {
        return Err(format!("η → 0⁺ limit not reached at η = {eta0:e}"));
    }
    let (part, eta) = solve_partition(d, 0.0).unwrap();
    if eta != 0.0 || part.grades() != &limit {
        return Err("E = 0 is not the hard assignment".into());
    }

    // η → ∞: uniform grades, entropy N log K, cost the mean distance
    let eta_inf = 1e10 * d.max().max(1e-300);
    let uniform = DMatrix::from_element(n, k, 1.0 / k as f64);
    if (p.grades(eta_inf) - &uniform).amax() > 1e-8 || (p.psi(eta_inf) - nf * max).abs() > 1e-8 * nf {
        return Err(format!("η → ∞ limit not reached at η = {eta_inf:e}"));
    }
    if (p.phi(eta_inf) - d.sum() / k as f64).abs() > 1e-8 * d.sum() {
        return Err("Φ(∞) differs from the average row cost".into());
    }
    let (part, eta) = solve_partition(d, max).unwrap();
    if eta != f64::INFINITY || (part.grades() - &uniform).amax() > 1e-15 {
        return Err("E = log K is not the uniform partition".into());
    }
    Ok(())
}

fn criterion_5() -> Outcome {
    let mut rng = seeded(derive_seed(SIM_SEED, 5));
    let mut failures = Vec::new();
    for t in 0..200 {
        let d = random_distances(&mut rng);
        if let Err(e) = partition_properties(&d, &mut rng) {
            failures.push(format!("case {t} ({}x{}): {e}", d.nrows(), d.ncols()));
        }
    }
    let pass = failures.is_empty();
    let detail = if pass {
        "200 random distance matrices: Ψ monotone, derivative identities, entropy constraint and both limits hold".into()
    } else {
        format!("{} of 200 cases fail; first: {}", failures.len(), failures[0])
    };
    Outcome::new(pass, detail)
}

// ---------------------------------------------------------------- 6

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_psd(rng: &mut Rng, dim: usize, rank: usize) -> CovMatrix {
    let g = gaussian(rng, dim, rank);
    let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
    CovMatrix::new(&g * g.transpose() * scale).unwrap()
}

fn dist(a: &CovMatrix, b: &CovMatrix) -> f64 {
    wp_dist2(a, b).unwrap().max(0.0).sqrt()
}

fn metric_axioms(rng: &mut Rng) -> Result<(), String> {
    for t in 0..500 {
        let dim = rng.gen_range(1..=6);
        let m: Vec<CovMatrix> = (0..3)
            .map(|_| {
                let rank = rng.gen_range(0..=dim);
                random_psd(rng, dim, rank)
            })
            .collect();
        let (a, b, c) = (&m[0], &m[1], &m[2]);
        let slack = 1e-8 * (1.0 + (a.trace() + b.trace() + c.trace()).sqrt());
        let (ab, ba, bc, ac) = (dist(a, b), dist(b, a), dist(b, c), dist(a, c));
        if dist(a, a) > slack {
            return Err(format!("triple {t}: d(a, a) = {:e}", dist(a, a)));
        }
        if (ab - ba).abs() > slack {
            return Err(format!("triple {t}: asymmetric {ab} vs {ba}"));
        }
        if ac > ab + bc + slack {
            return Err(format!("triple {t}: triangle {ac} > {ab} + {bc}"));
        }
        if ab < 0.0 || (ab <= slack && (a.matrix() - b.matrix()).norm() > 1e-6 * (1.0 + a.matrix().norm())) {
            return Err(format!("triple {t}: distinct matrices at distance {ab}"));
        }
    }
    Ok(())
}

/// Objective after each partition step never rises by more than the inexact
/// barycenter solve allows.
fn bcd_monotone(rng: &mut Rng) -> Result<(), String> {
    for t in 0..50 {
        let spec = SyntheticSpec {
            n_per_cluster: rng.gen_range(2..=4),
            grid_size: rng.gen_range(5..=15),
            seed: rng.gen(),
            ..Default::default()
        };
        let covs = sample_covs(&simulate(&spec).unwrap().samples).unwrap();
        let k = rng.gen_range(2..=4);
        let e = (k as f64).ln() * rng.gen_range(0.0..0.8);
        let sol = fit(&covs, &SoftClustConfig::new(k, e).with_seed(t)).map_err(|err| format!("problem {t}: {err}"))?;
        for w in sol.objective_trace.windows(2) {
            if w[1] > w[0] + 1e-7 * (1.0 + w[0]) {
                return Err(format!(
                    "problem {t}: objective rose {} -> {} (K = {k}, E = {e:.4}, N = {}, grid {}, sim seed {}, reseeds {}, trace {:?})",
                    w[0], w[1], covs.len(), spec.grid_size, spec.seed, sol.reseeds, sol.objective_trace
                ));
            }
        }
    }
    Ok(())
}

fn scalar_oracle(rng: &mut Rng) -> Result<(), String> {
    for t in 0..50 {
        let n = rng.gen_range(1..=8);
        let values: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let mats: Vec<CovMatrix> = values.iter().map(|&v| CovMatrix::from_diagonal(&[v]).unwrap()).collect();
        let set = WeightedCovSet::new(mats.iter().zip(&weights).map(|(m, &w)| (m, w)).collect()).unwrap();
        let got = frechet_mean(&set, None, BarycenterOptions::default()).unwrap().mean.matrix()[(0, 0)];
        let root = values.iter().zip(&weights).map(|(v, w)| w * v.sqrt()).sum::<f64>() / weights.iter().sum::<f64>();
        let want = root * root;
        if (got - want).abs() > 1e-10 * want {
            return Err(format!("set {t}: {got} vs {want}"));
        }
    }
    Ok(())
}

fn commuting_oracle(rng: &mut Rng) -> Result<(), String> {
    for t in 0..50 {
        let dim = rng.gen_range(2..=8);
        let q = gaussian(rng, dim, dim).qr().q();
        let n = rng.gen_range(2..=6);
        let diags: Vec<Vec<f64>> =
            (0..n).map(|_| (0..dim).map(|_| 10f64.powf(rng.gen_range(-2.0..1.0))).collect()).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let rotate = |d: &[f64]| &q * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)) * q.transpose();
        let mats: Vec<CovMatrix> = diags.iter().map(|d| CovMatrix::new(rotate(d)).unwrap()).collect();
        let set = WeightedCovSet::new(mats.iter().zip(&weights).map(|(m, &w)| (m, w)).collect()).unwrap();
        let got = frechet_mean(&set, None, BarycenterOptions::default()).unwrap().mean;
        let total: f64 = weights.iter().sum();
        let want: Vec<f64> = (0..dim)
            .map(|r| diags.iter().zip(&weights).map(|(d, w)| w * d[r].sqrt()).sum::<f64>() / total)
            .map(|s| s * s)
            .collect();
        let want = rotate(&want);
        let err = (got.matrix() - &want).norm() / want.norm();
        if err > 1e-8 {
            return Err(format!("set {t}: relative error {err:e}"));
        }
    }
    Ok(())
}

fn fixed_point_identity(rng: &mut Rng) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for t in 0..30 {
        let dim = rng.gen_range(2..=10);
        let n = rng.gen_range(2..=10);
        let mats: Vec<CovMatrix> = (0..n).map(|_| random_psd(rng, dim, dim + 2)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let set = WeightedCovSet::new(mats.iter().zip(&weights).map(|(m, &w)| (m, w)).collect()).unwrap();
        let r = frechet_mean(&set, None, BarycenterOptions::default()).unwrap();
        if !r.converged {
            return Err(format!("set {t}: barycenter iteration did not converge"));
        }
        let t_bar = mean_transport_map(&set, &r.mean).unwrap();
        let dev = (t_bar - DMatrix::identity(dim, dim)).norm();
        worst = worst.max(dev);
        if dev > 1e-4 {
            return Err(format!("set {t}: ‖T̄ - I‖_F = {dev:e}"));
        }
    }
    Ok(worst)
}

fn criterion_6() -> Outcome {
    let mut rng = seeded(derive_seed(SIM_SEED, 6));
    let mut problems = Vec::new();
    let mut worst = f64::NAN;
    let checks: [(&str, Result<(), String>); 4] = [
        ("metric axioms", metric_axioms(&mut rng)),
        ("BCD monotone", bcd_monotone(&mut rng)),
        ("scalar oracle", scalar_oracle(&mut rng)),
        ("commuting oracle", commuting_oracle(&mut rng)),
    ];
    for (name, r) in checks {
        if let Err(e) = r {
            problems.push(format!("{name}: {e}"));
        }
    }
    match fixed_point_identity(&mut rng) {
        Ok(w) => worst = w,
        Err(e) => problems.push(format!("T̄ = I: {e}")),
    }
    let pass = problems.is_empty();
    let detail = if pass {
        format!(
            "500 metric triples, 50 BCD runs, 50 scalar and 50 commuting oracles, 30 fixed points (max ‖T̄ - I‖_F = {worst:.1e})"
        )
    } else {
        problems.join("; ")
    };
    Outcome::new(pass, detail)
}

// ---------------------------------------------------------------- 7

const NULL_DATASETS: u64 = 100;
const NULL_N: usize = 30;
const NULL_PERM: usize = 19;
const ALT_RUNS: u64 = 5;
const ALT_PER_CLUSTER: usize = 12;
const ALT_PERM: usize = 99;
const CALIBRATION_GRID: usize = 21;

fn p_value(samples: &[FunctionalSample], k_max: usize, n_perm: usize, seed: u64) -> f64 {
    let config = SoftClustConfig::new(2, entropy()).with_seed(seed);
    let options = PermTestOptions { n_perm, seed, ..Default::default() };
    permutation_test(samples, &config, 2..=k_max, &options).unwrap().p_value
}

fn criterion_7() -> Outcome {
    let level = 1.0 / (NULL_PERM as f64 + 1.0);
    let mut rejections = 0;
    let t = Instant::now();
    for r in 0..NULL_DATASETS {
        let spec = SyntheticSpec {
            perturbation_indices: vec![1],
            n_per_cluster: NULL_N,
            perturbation_scale: 0.0,
            grid_size: CALIBRATION_GRID,
            seed: derive_seed(SIM_SEED, 7000 + r),
            ..Default::default()
        };
        let p = p_value(&simulate(&spec).unwrap().samples, 3, NULL_PERM, r);
        if p <= level {
            rejections += 1;
        }
        if r % 10 == 9 {
            progress(format!("null {}: {rejections} rejections, {:.0}s", r + 1, t.elapsed().as_secs_f64()));
        }
    }
    let null_ok = (1..=11).contains(&rejections);

    let mut strong = 0;
    let mut ps = Vec::new();
    for r in 0..ALT_RUNS {
        let spec = SyntheticSpec {
            n_per_cluster: ALT_PER_CLUSTER,
            grid_size: CALIBRATION_GRID,
            seed: derive_seed(SIM_SEED, 7500 + r),
            ..Default::default()
        };
        let p = p_value(&simulate(&spec).unwrap().samples, 4, ALT_PERM, r);
        progress(format!("alternative {r}: p = {p:.3}"));
        ps.push(p);
        if p <= 0.01 {
            strong += 1;
        }
    }
    let alt_ok = strong as f64 >= 0.95 * ALT_RUNS as f64;
    Outcome::new(
        null_ok && alt_ok,
        format!(
            "null: {rejections}/{NULL_DATASETS} rejections at level {level} (need 1–11; N = {NULL_N}, {NULL_PERM} permutations, K = 2..3); \
             alternative: p ≤ 0.01 in {strong}/{ALT_RUNS} runs (need ≥ 95%; N = {}, {ALT_PERM} permutations, K = 2..4), p = {ps:?}",
            4 * ALT_PER_CLUSTER
        ),
    )
}

// ---------------------------------------------------------------- 8

/// The `covclust` binary next to this test's build directory.
fn covclust_binary() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let bin = dir.join(format!("covclust{}", std::env::consts::EXE_SUFFIX));
    if bin.exists() {
        return Some(bin);
    }
    let cargo = std::env::var_os("CARGO")?;
    let target = dir.join("acceptance-bin");
    let status = Command::new(cargo)
        .args(["build", "-q", "-p", "covclust-cli", "--bin", "covclust", "--target-dir"])
        .arg(&target)
        .status()
        .ok()?;
    let bin = target.join("debug").join(format!("covclust{}", std::env::consts::EXE_SUFFIX));
    (status.success() && bin.exists()).then_some(bin)
}

const CLI_RUNS: &[&[&str]] = &[
    &["simulate", "--n-per-cluster", "4", "--grid-size", "21", "--seed", "9", "-o", "curves.csv"],
    &["cov", "curves.csv", "-o", "covs_csv"],
    &["cov", "curves.csv", "-o", "covs_bin", "--format", "wpcv"],
    &["cluster", "curves.csv", "-k", "4", "--seed", "3", "-o", "cluster.json", "--barycenters", "bary"],
    &["cluster", "curves.csv", "-k", "3", "--reduced", "10", "--repeats", "2", "--seed", "3"],
    &["tasw", "curves.csv", "--k-max", "5", "--seed", "3", "-o", "tasw.csv", "--json", "tasw.json"],
    &["permtest", "curves.csv", "--k-max", "3", "--n-perm", "4", "--seed", "3", "-o", "perm.json"],
    &["mds", "--curves", "curves.csv", "--dim", "3", "-o", "mds.csv"],
    &["dist", "--curves", "curves.csv"],
    &["dist", "--squared", "--curves", "curves.csv", "-o", "dist2.csv"],
];

/// Every file under `dir` with its bytes, by relative path.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli_session(bin: &Path) -> Result<(Vec<Vec<u8>>, Vec<(PathBuf, Vec<u8>)>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut stdouts = Vec::new();
    for args in CLI_RUNS {
        let out = Command::new(bin).args(*args).current_dir(dir.path()).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        stdouts.push(out.stdout);
    }
    Ok((stdouts, snapshot(dir.path())))
}

fn criterion_8() -> Outcome {
    let Some(bin) = covclust_binary() else {
        return Outcome::new(false, "covclust binary not found and could not be built");
    };
    let (a, b) = match (cli_session(&bin), cli_session(&bin)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, e),
    };
    let mut diffs = Vec::new();
    for (i, (x, y)) in a.0.iter().zip(&b.0).enumerate() {
        if x != y {
            diffs.push(format!("stdout of {:?}", CLI_RUNS[i]));
        }
    }
    if a.1.len() != b.1.len() {
        diffs.push(format!("{} vs {} output files", a.1.len(), b.1.len()));
    }
    for ((p, x), (q, y)) in a.1.iter().zip(&b.1) {
        if p != q || x != y {
            diffs.push(p.display().to_string());
        }
    }
    let pass = diffs.is_empty();
    let detail = if pass {
        format!("{} commands run twice: {} files and all standard outputs byte-identical", CLI_RUNS.len(), a.1.len())
    } else {
        format!("differences: {}", diffs.join(", "))
    };
    Outcome::new(pass, detail)
}

// ----------------------------------------------------------------

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |c: usize| selected.is_empty() || selected.contains(&c);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let timed = |c: usize, f: &mut dyn FnMut() -> Outcome, results: &mut Vec<(usize, Outcome)>| {
        if want(c) {
            eprintln!("criterion {c}: running");
            let t = Instant::now();
            let o = f();
            eprintln!("criterion {c}: {} ({:.0}s)", if o.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
            results.push((c, o));
        }
    };

    if want(1) || want(2) || want(3) {
        let t = Instant::now();
        let reps: Vec<Replicate> = (0..REPLICATES).map(synthetic_replicate).collect();
        eprintln!("synthetic replicates: {:.0}s", t.elapsed().as_secs_f64());
        timed(1, &mut || criterion_1(&reps), &mut results);
        timed(2, &mut || criterion_2(&reps), &mut results);
        timed(3, &mut || criterion_3(&reps), &mut results);
    }
    timed(4, &mut criterion_4, &mut results);
    timed(5, &mut criterion_5, &mut results);
    timed(6, &mut criterion_6, &mut results);
    timed(7, &mut criterion_7, &mut results);
    timed(8, &mut criterion_8, &mut results);

    println!();
    for (c, o) in &results {
        println!("criterion {c}: {} — {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("\nacceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
