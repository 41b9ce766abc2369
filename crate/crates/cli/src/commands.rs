use std::fs;
use std::path::Path;

use anyhow::anyhow;
use covclust::dataio::io::{
    read_cov_binary, read_cov_csv, read_curves_csv, write_cov_binary, write_cov_csv, write_curves_csv, write_labels_csv,
};
use covclust::dataio::{apply_quadrature, is_evenly_spaced, sample_covs, trapezoid_weights, FunctionalSample, SyntheticSpec};
use covclust::softclust::{fit, fit_reduced, pairwise_dist2_matrices, suggested_entropy, PartitionMatrix};
use covclust::validation::{mds_from_dist2, permutation_test, tasw_scan, PermTestOptions, TaswProfile};
use covclust::{CovMatrix, SampleCov, SoftClustConfig};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::args::{
    ClusterArgs, CovArgs, CurveInput, DistArgs, EntropyArgs, MatrixFormat, MatrixInput, MdsArgs, PermtestArgs, Quadrature,
    SimulateArgs, SolverArgs, TaswArgs,
};
use crate::output::{check_distinct, emit, json_bytes, write_all_atomic, write_atomic};
use crate::{input_err, CmdResult, Failure};

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| input_err(anyhow!("reading `{}`: {e}", path.display())))
}

fn load_curves(input: &CurveInput) -> Result<Vec<FunctionalSample>, Failure> {
    load_curves_from(&input.input, input.quadrature)
}

fn load_curves_from(path: &Path, quadrature: Option<Quadrature>) -> Result<Vec<FunctionalSample>, Failure> {
    let bytes = read_file(path)?;
    let samples = read_curves_csv(bytes.as_slice())
        .map_err(|e| input_err(anyhow!("`{}`: {e}", path.display())))?;
    let grid = &samples[0].grid;
    match quadrature {
        Some(Quadrature::Trapezoid) => {
            let w = trapezoid_weights(grid);
            Ok(samples.iter().map(|s| apply_quadrature(s, &w)).collect::<Result<_, _>>()?)
        }
        None if !is_evenly_spaced(grid) => Err(input_err(anyhow!(
            "`{}` has an unevenly spaced grid; pass `--quadrature trapezoid`",
            path.display()
        ))),
        None => Ok(samples),
    }
}

fn covariances(samples: &[FunctionalSample]) -> Result<Vec<SampleCov>, Failure> {
    Ok(sample_covs(samples)?)
}

fn target_entropy(args: &EntropyArgs) -> Result<f64, Failure> {
    match args.entropy {
        Some(e) => Ok(e),
        None => Ok(suggested_entropy(args.entropy_alpha, args.entropy_beta)?),
    }
}

fn solver_config(k: usize, entropy: f64, s: &SolverArgs) -> SoftClustConfig {
    let mut c = SoftClustConfig::new(k, entropy).with_seed(s.seed);
    c.nstart = s.nstart;
    c.nrefine = s.nrefine;
    c.ntry = s.ntry;
    c.max_bcd_iter = s.max_iter;
    c.bcd_tol = s.tol;
    c
}

fn fmt_row(values: impl IntoIterator<Item = String>) -> String {
    let mut line = values.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn matrix_bytes(m: &DMatrix<f64>, format: MatrixFormat) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    match format {
        MatrixFormat::Csv => write_cov_csv(&mut buf, m)?,
        MatrixFormat::Wpcv => write_cov_binary(&mut buf, m)?,
    }
    Ok(buf)
}

/// File name derived from a group id; ids that are not plain names are refused.
fn safe_name(id: &str) -> Result<&str, Failure> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\', '\0']) {
        return Err(input_err(anyhow!("group id `{id}` cannot be used as a file name")));
    }
    Ok(id)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| input_err(anyhow!("creating `{}`: {e}", dir.display())))
}

pub fn simulate(a: SimulateArgs) -> CmdResult {
    let spec = SyntheticSpec {
        n_per_cluster: a.n_per_cluster,
        perturbation_scale: a.perturbation_scale,
        grid_size: a.grid_size,
        n_min: a.n_min,
        n_max: a.n_max,
        seed: a.seed,
        ..Default::default()
    };
    let labels_path = a.labels.clone().unwrap_or_else(|| {
        let stem = a.output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        a.output.with_file_name(format!("{stem}_labels.csv"))
    });
    check_distinct(&[&a.output, &labels_path]).map_err(input_err)?;
    let data = covclust::dataio::simulate(&spec)?;
    let mut curves = Vec::new();
    write_curves_csv(&mut curves, &data.samples)?;
    let ids: Vec<String> = data.samples.iter().map(|s| s.group_id.clone()).collect();
    let mut labels = Vec::new();
    write_labels_csv(&mut labels, &ids, &data.labels)?;
    write_all_atomic(&[(a.output.clone(), curves), (labels_path.clone(), labels)]).map_err(input_err)?;
    eprintln!(
        "simulate: {} groups (seed {}) -> {}, labels -> {}",
        ids.len(),
        a.seed,
        a.output.display(),
        labels_path.display()
    );
    Ok(())
}

pub fn cov(a: CovArgs) -> CmdResult {
    let samples = load_curves(&a.curves)?;
    let covs = covariances(&samples)?;
    let mut files = Vec::with_capacity(covs.len());
    for c in &covs {
        let name = format!("{}.{}", safe_name(&c.id)?, a.format.extension());
        files.push((a.output.join(name), matrix_bytes(c.cov.matrix(), a.format)?));
    }
    let paths: Vec<&Path> = files.iter().map(|(p, _)| p.as_path()).collect();
    check_distinct(&paths).map_err(input_err)?;
    ensure_dir(&a.output)?;
    write_all_atomic(&files).map_err(input_err)?;
    eprintln!("cov: {} covariances -> {}", covs.len(), a.output.display());
    Ok(())
}

#[derive(Serialize)]
struct ReducedReport<'a> {
    n_reduced: usize,
    repeats: usize,
    subset: &'a [usize],
}

#[derive(Serialize)]
struct ClusterReport<'a> {
    seed: u64,
    k: usize,
    target_entropy: f64,
    entropy: f64,
    /// `null` for the uniform partition (η = ∞).
    eta: Option<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    reseeds: usize,
    reduced: Option<ReducedReport<'a>>,
    ids: Vec<&'a str>,
    n_curves: Vec<usize>,
    partition: &'a PartitionMatrix,
    nearest: Vec<usize>,
    credibility: Vec<f64>,
    cross_product: Vec<Vec<f64>>,
    medoids: &'a [usize],
    objective_trace: &'a [f64],
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn cluster(a: ClusterArgs) -> CmdResult {
    let samples = load_curves(&a.curves)?;
    let covs = covariances(&samples)?;
    let entropy = target_entropy(&a.entropy)?;
    let config = solver_config(a.k, entropy, &a.solver);
    config.validate()?;
    let sol = match a.reduced {
        Some(n) => fit_reduced(&covs, &config, n, a.repeats)?,
        None => fit(&covs, &config)?,
    };
    let report = ClusterReport {
        seed: config.seed,
        k: config.k,
        target_entropy: entropy,
        entropy: sol.entropy,
        eta: sol.eta.is_finite().then_some(sol.eta),
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
        reseeds: sol.reseeds,
        reduced: a.reduced.zip(sol.subset.as_deref()).map(|(n, subset)| ReducedReport {
            n_reduced: n,
            repeats: a.repeats,
            subset,
        }),
        ids: covs.iter().map(|c| c.id.as_str()).collect(),
        n_curves: covs.iter().map(|c| c.n).collect(),
        partition: &sol.partition,
        nearest: sol.labels(),
        credibility: sol.credibilities(),
        cross_product: rows(&sol.partition.cross_product()),
        medoids: &sol.medoids,
        objective_trace: &sol.objective_trace,
    };
    let json = json_bytes(&report).map_err(input_err)?;
    let mut files = Vec::new();
    if let Some(dir) = &a.barycenters {
        for (j, b) in sol.barycenters.iter().enumerate() {
            files.push((dir.join(format!("barycenter_{j}.{}", a.format.extension())), matrix_bytes(b.matrix(), a.format)?));
        }
        if let Some(out) = &a.output {
            let mut all: Vec<&Path> = files.iter().map(|(p, _)| p.as_path()).collect();
            all.push(out);
            check_distinct(&all).map_err(input_err)?;
        }
        ensure_dir(dir)?;
    }
    write_all_atomic(&files).map_err(input_err)?;
    emit(a.output.as_deref(), &json).map_err(input_err)?;
    eprintln!(
        "cluster: N = {}, K = {}, E = {:.6}, objective = {:.6e}, {} iterations{}",
        covs.len(),
        config.k,
        sol.entropy,
        sol.objective,
        sol.iterations,
        if sol.converged { "" } else { " (not converged)" }
    );
    Ok(())
}

fn check_k_range(k_min: usize, k_max: usize) -> Result<std::ops::RangeInclusive<usize>, Failure> {
    if k_min < 2 || k_max < k_min {
        return Err(input_err(anyhow!("K range {k_min}..={k_max} must start at 2 or more and be nonempty")));
    }
    Ok(k_min..=k_max)
}

#[derive(Serialize)]
struct TaswReport<'a> {
    seed: u64,
    target_entropy: f64,
    ids: Vec<&'a str>,
    #[serde(flatten)]
    profile: &'a TaswProfile,
}

pub fn tasw(a: TaswArgs) -> CmdResult {
    if let (Some(o), Some(j)) = (&a.output, &a.json) {
        check_distinct(&[o, j]).map_err(input_err)?;
    }
    let samples = load_curves(&a.curves)?;
    let covs = covariances(&samples)?;
    let entropy = target_entropy(&a.entropy)?;
    let range = check_k_range(a.k_range.k_min, a.k_range.k_max)?;
    let config = solver_config(a.k_range.k_min, entropy, &a.solver);
    let profile = tasw_scan(&covs, &config, range, a.delta)?;

    let mut csv = String::from("k,tasw,k_hat,candidate\n");
    for e in &profile.entries {
        csv.push_str(&fmt_row([
            e.k.to_string(),
            e.parts.tasw.to_string(),
            (e.k == profile.k_hat).to_string(),
            profile.candidate_set.contains(&e.k).to_string(),
        ]));
    }
    if let Some(path) = &a.json {
        let report =
            TaswReport { seed: config.seed, target_entropy: entropy, ids: covs.iter().map(|c| c.id.as_str()).collect(), profile: &profile };
        write_atomic(path, &json_bytes(&report).map_err(input_err)?).map_err(input_err)?;
    }
    emit(a.output.as_deref(), csv.as_bytes()).map_err(input_err)?;
    eprintln!("tasw: K̂ = {}, TASW_max = {:.6}, candidates {:?}", profile.k_hat, profile.tasw_max, profile.candidate_set);
    Ok(())
}

#[derive(Serialize)]
struct PermReport {
    seed: u64,
    n_perm: usize,
    k_min: usize,
    k_max: usize,
    delta: f64,
    recenter: bool,
    target_entropy: f64,
    observed_tasw_max: f64,
    observed_k_hat: usize,
    null_samples: Vec<f64>,
    p_value: f64,
}

pub fn permtest(a: PermtestArgs) -> CmdResult {
    let samples = load_curves(&a.curves)?;
    let entropy = target_entropy(&a.entropy)?;
    let range = check_k_range(a.k_range.k_min, a.k_range.k_max)?;
    let config = solver_config(a.k_range.k_min, entropy, &a.solver);
    let options = PermTestOptions { n_perm: a.n_perm, delta: a.delta, seed: a.solver.seed, recenter: !a.no_recenter };
    let r = permutation_test(&samples, &config, range, &options)?;
    let report = PermReport {
        seed: options.seed,
        n_perm: options.n_perm,
        k_min: a.k_range.k_min,
        k_max: a.k_range.k_max,
        delta: options.delta,
        recenter: options.recenter,
        target_entropy: entropy,
        observed_tasw_max: r.observed_tasw_max,
        observed_k_hat: r.observed_k_hat,
        null_samples: r.null_samples,
        p_value: r.p_value,
    };
    emit(a.output.as_deref(), &json_bytes(&report).map_err(input_err)?).map_err(input_err)?;
    eprintln!("permtest: TASW_max = {:.6}, p = {:.6}", report.observed_tasw_max, report.p_value);
    Ok(())
}

/// Named covariance matrices from files or from a curve CSV.
fn load_matrices(input: &MatrixInput) -> Result<(Vec<String>, Vec<CovMatrix>), Failure> {
    if let Some(path) = &input.curves {
        let covs = covariances(&load_curves_from(path, input.quadrature)?)?;
        return Ok(covs.into_iter().map(|c| (c.id, c.cov)).unzip());
    }
    if input.matrices.is_empty() {
        return Err(input_err(anyhow!("give covariance files or `--curves`")));
    }
    let mut ids = Vec::new();
    let mut mats = Vec::new();
    for path in &input.matrices {
        let bytes = read_file(path)?;
        let m = if path.extension().is_some_and(|e| e == "wpcv") {
            read_cov_binary(bytes.as_slice())
        } else {
            read_cov_csv(bytes.as_slice())
        }
        .and_then(CovMatrix::new)
        .map_err(|e| input_err(anyhow!("`{}`: {e}", path.display())))?;
        ids.push(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        mats.push(m);
    }
    if let Some(m) = mats.iter().find(|m| m.dim() != mats[0].dim()) {
        return Err(input_err(anyhow!("matrices of dimensions {} and {} cannot be compared", mats[0].dim(), m.dim())));
    }
    Ok((ids, mats))
}

pub fn mds(a: MdsArgs) -> CmdResult {
    let (ids, mats) = load_matrices(&a.input)?;
    let refs: Vec<&CovMatrix> = mats.iter().collect();
    let coords = mds_from_dist2(&pairwise_dist2_matrices(&refs), a.dim)?;
    let mut csv = fmt_row(std::iter::once("id".to_string()).chain((1..=a.dim).map(|d| format!("x{d}"))));
    for (i, id) in ids.iter().enumerate() {
        csv.push_str(&fmt_row(std::iter::once(id.clone()).chain(coords.row(i).iter().map(|v| v.to_string()))));
    }
    emit(a.output.as_deref(), csv.as_bytes()).map_err(input_err)?;
    Ok(())
}

pub fn dist(a: DistArgs) -> CmdResult {
    let (ids, mats) = load_matrices(&a.input)?;
    let refs: Vec<&CovMatrix> = mats.iter().collect();
    let d2 = pairwise_dist2_matrices(&refs);
    let mut csv = fmt_row(std::iter::once("id".to_string()).chain(ids.iter().cloned()));
    for (i, id) in ids.iter().enumerate() {
        let values = d2.row(i).iter().map(|&v| if a.squared { v } else { v.sqrt() }.to_string()).collect::<Vec<_>>();
        csv.push_str(&fmt_row(std::iter::once(id.clone()).chain(values)));
    }
    emit(a.output.as_deref(), csv.as_bytes()).map_err(input_err)?;
    Ok(())
}
