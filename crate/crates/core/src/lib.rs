//! Covariate-assisted spectral clustering.
//!
//! Graph nodes are clustered from the leading eigenvectors of a similarity
//! operator that mixes a regularized graph Laplacian `L` with node covariates
//! `X`:
//!
//! | kind    | operator                |
//! |---------|-------------------------|
//! | `Rsc`   | `L`                     |
//! | `Acasc` | `L + alpha X X^T`       |
//! | `Casc`  | `L L + alpha X X^T`     |
//! | `Cca`   | `L X` (left singular)   |
//! | `Cov`   | `X X^T` (left sing. X)  |
//!
//! Besides the clustering pipeline ([`cluster`]) the crate provides the
//! tuning procedure for `alpha` ([`tune`]), a node-contextualized stochastic
//! blockmodel simulator ([`sbm`]), closed-form evaluators of the associated
//! theoretical bounds ([`theory`]), partition metrics ([`metrics`]) and a
//! simulation harness ([`experiment`]).

pub mod cluster;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod sbm;
pub mod theory;
pub mod tune;

pub use cluster::{spectral_cluster, ClusteringResult, KmeansConfig, SpectralOptions};
pub use eigen::{top_k_left_singular, top_k_symmetric, EigenResult, SolverConfig};
pub use error::{CascError, Result};
pub use graph::{CovariateMatrix, OperatorKind, OperatorSpec, SparseGraph};
pub use metrics::{adjusted_rand_index, misclustering_rate};
pub use sbm::{NcsbmParams, NcsbmSample};
pub use tune::{tune_alpha, TuningResult};
