use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "covclust", version, about = "Soft clustering of covariance operators under the Wasserstein-Procrustes metric")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "COVCLUST_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw grouped curves from the four-cluster synthetic model.
    Simulate(SimulateArgs),
    /// Estimate the sample covariance of every group.
    Cov(CovArgs),
    /// Soft-cluster the group covariances.
    Cluster(ClusterArgs),
    /// Trimmed average silhouette width profile over a range of K.
    Tasw(TaswArgs),
    /// Permutation test of the no-cluster hypothesis.
    Permtest(PermtestArgs),
    /// Classical multidimensional scaling of covariances.
    Mds(MdsArgs),
    /// Pairwise Wasserstein-Procrustes distances.
    Dist(DistArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quadrature {
    /// Scale curve values by square roots of trapezoid weights.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Csv,
    Wpcv,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Wpcv => "wpcv",
        }
    }
}

#[derive(Debug, Args)]
pub struct CurveInput {
    /// Curve CSV: header `group_id,<grid>`, one row per curve.
    pub input: PathBuf,

    /// Quadrature for unevenly spaced grids (required for them).
    #[arg(long, value_enum)]
    pub quadrature: Option<Quadrature>,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    /// Target average entropy E; overrides the alpha/beta heuristic.
    #[arg(short = 'E', long = "entropy")]
    pub entropy: Option<f64>,

    /// Share of items confused between two clusters.
    #[arg(long, default_value_t = 0.25)]
    pub entropy_alpha: f64,

    /// Residual grade of the well-classified items.
    #[arg(long, default_value_t = 0.05)]
    pub entropy_beta: f64,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Random starts of the medoid search.
    #[arg(long, default_value_t = 5)]
    pub nstart: usize,

    /// Refinement sweeps per start.
    #[arg(long, default_value_t = 5)]
    pub nrefine: usize,

    /// Candidates per medoid and sweep [default: ceil(N/K)].
    #[arg(long)]
    pub ntry: Option<usize>,

    /// Maximum block coordinate descent iterations.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,

    /// Relative objective change that ends the descent.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 25)]
    pub n_per_cluster: usize,

    /// Coefficient of the cluster-specific component; 0 gives the null model.
    #[arg(long, default_value_t = 1.0)]
    pub perturbation_scale: f64,

    #[arg(long, default_value_t = 101)]
    pub grid_size: usize,

    #[arg(long, default_value_t = 5)]
    pub n_min: usize,

    #[arg(long, default_value_t = 10)]
    pub n_max: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Curve CSV output.
    #[arg(short, long)]
    pub output: PathBuf,

    /// Label CSV output [default: <output stem>_labels.csv].
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CovArgs {
    #[command(flatten)]
    pub curves: CurveInput,

    /// Output directory; one file per group.
    #[arg(short, long)]
    pub output: PathBuf,

    #[arg(long, value_enum, default_value_t = MatrixFormat::Csv)]
    pub format: MatrixFormat,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub curves: CurveInput,

    #[arg(short = 'k', long = "clusters")]
    pub k: usize,

    #[command(flatten)]
    pub entropy: EntropyArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Fit on this many randomly chosen covariances, then assign all.
    #[arg(long)]
    pub reduced: Option<usize>,

    /// Random subsets tried in reduced mode.
    #[arg(long, default_value_t = 1, requires = "reduced")]
    pub repeats: usize,

    /// Solution JSON [default: standard output].
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// Directory for the barycenter matrices.
    #[arg(long)]
    pub barycenters: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = MatrixFormat::Csv)]
    pub format: MatrixFormat,
}

#[derive(Debug, Args)]
pub struct KRange {
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,

    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
}

#[derive(Debug, Args)]
pub struct TaswArgs {
    #[command(flatten)]
    pub curves: CurveInput,

    #[command(flatten)]
    pub k_range: KRange,

    /// Relative threshold of the candidate set.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,

    #[command(flatten)]
    pub entropy: EntropyArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Profile CSV [default: standard output].
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// Full profile JSON with silhouettes and credibilities.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PermtestArgs {
    #[command(flatten)]
    pub curves: CurveInput,

    #[command(flatten)]
    pub k_range: KRange,

    #[arg(long, default_value_t = 200)]
    pub n_perm: usize,

    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,

    /// Use permuted curves as pooled instead of re-centring each group.
    #[arg(long)]
    pub no_recenter: bool,

    #[command(flatten)]
    pub entropy: EntropyArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Result JSON [default: standard output].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatrixInput {
    /// Covariance files (`.csv` or `.wpcv`).
    pub matrices: Vec<PathBuf>,

    /// Use the sample covariances of a curve CSV instead.
    #[arg(long, conflicts_with = "matrices")]
    pub curves: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub quadrature: Option<Quadrature>,
}

#[derive(Debug, Args)]
pub struct MdsArgs {
    #[command(flatten)]
    pub input: MatrixInput,

    /// Output dimension.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,

    /// Coordinate CSV [default: standard output].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[command(flatten)]
    pub input: MatrixInput,

    /// Write squared distances.
    #[arg(long)]
    pub squared: bool,

    /// Distance CSV [default: standard output].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}
