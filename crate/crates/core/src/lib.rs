//! Entropy-constrained soft clustering of covariance operators under the
//! Wasserstein-Procrustes (Bures-Wasserstein) metric.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: PSD matrices, square roots, the Bures cross term.
//! - [`wasserstein`]: the distance, transport maps and weighted Fréchet means.
//! - [`softclust`]: the partition solve, medoid initialisation, block
//!   coordinate descent and the reduced large-N mode.
//! - [`validation`]: silhouettes, TASW, K selection, permutation test, MDS.
//! - [`dataio`]: curve samples, sample covariances, the synthetic generator
//!   and file formats.

pub mod dataio;
pub mod error;
pub mod linalg;
pub mod rng;
pub mod softclust;
pub mod validation;
pub mod wasserstein;

pub use error::{Error, Result};
pub use linalg::CovMatrix;
pub use softclust::{ClusterSolution, PartitionMatrix, SampleCov, SoftClustConfig};
