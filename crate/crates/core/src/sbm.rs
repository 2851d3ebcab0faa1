//! Node-contextualized stochastic blockmodel: sampling, population matrices
//! and the block designs used in the simulations.
//!
//! Nodes are split into contiguous blocks. Edges between nodes `i < j` are
//! independent Bernoulli draws with probability `B[z_i, z_j]`; covariates are
//! independent Bernoulli draws with mean `M[z_i, r]`.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CascError, Result};
use crate::graph::{CovariateMatrix, SparseGraph};

/// Largest `N` for which population matrices are materialized.
pub const POPULATION_MAX_NODES: usize = 2000;

const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    #[default]
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcsbmParams {
    block_sizes: Vec<usize>,
    b: DMatrix<f64>,
    m: DMatrix<f64>,
    covariate_kind: CovariateKind,
    warnings: Vec<String>,
}

impl NcsbmParams {
    pub fn new(block_sizes: Vec<usize>, b: DMatrix<f64>, m: DMatrix<f64>) -> Result<Self> {
        let k = block_sizes.len();
        if k == 0 || block_sizes.contains(&0) {
            return Err(CascError::InvalidParameter(
                "every block needs at least one node".into(),
            ));
        }
        if b.shape() != (k, k) {
            return Err(CascError::InvalidParameter(format!(
                "B is {:?}, expected {k} x {k}",
                b.shape()
            )));
        }
        if m.nrows() != k || m.ncols() == 0 {
            return Err(CascError::InvalidParameter(format!(
                "M is {:?}, expected {k} rows and at least one column",
                m.shape()
            )));
        }
        for i in 0..k {
            for j in 0..k {
                if !(0.0..=1.0).contains(&b[(i, j)]) {
                    return Err(CascError::InvalidParameter(format!(
                        "edge probability B[{i},{j}] = {} outside [0, 1]",
                        b[(i, j)]
                    )));
                }
                if b[(i, j)] != b[(j, i)] {
                    return Err(CascError::InvalidParameter("B must be symmetric".into()));
                }
            }
        }
        if let Some(v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CascError::InvalidParameter(format!(
                "Bernoulli covariate mean {v} outside [0, 1]"
            )));
        }
        let mut warnings = Vec::new();
        let det = b.determinant();
        if det.abs() <= RANK_TOLERANCE {
            let msg = format!("B is not full rank (|det| = {:.3e})", det.abs());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(Self {
            block_sizes,
            b,
            m,
            covariate_kind: CovariateKind::Bernoulli,
            warnings,
        })
    }

    /// Equal blocks: `n / k` nodes each, the remainder spread over the first blocks.
    pub fn equal_blocks(n: usize, k: usize) -> Vec<usize> {
        (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
    }

    pub fn with_equal_blocks(n: usize, b: DMatrix<f64>, m: DMatrix<f64>) -> Result<Self> {
        let k = b.nrows();
        if k == 0 || n < k {
            return Err(CascError::InvalidParameter(format!(
                "{n} nodes cannot fill {k} blocks"
            )));
        }
        Self::new(Self::equal_blocks(n, k), b, m)
    }

    pub fn n_nodes(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn k_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.m.ncols()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn covariate_kind(&self) -> CovariateKind {
        self.covariate_kind
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Block label of every node (contiguous ranges).
    pub fn labels(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect()
    }

    /// Expected degree of a node in each block, `(B n)_k`, self-pair included.
    pub fn block_degrees(&self) -> Vec<f64> {
        let k = self.k_blocks();
        (0..k)
            .map(|a| (0..k).map(|c| self.b[(a, c)] * self.block_sizes[c] as f64).sum())
            .collect()
    }

    /// Average expected degree over all nodes.
    pub fn expected_mean_degree(&self) -> f64 {
        let deg = self.block_degrees();
        let total: f64 = deg
            .iter()
            .zip(&self.block_sizes)
            .map(|(d, &s)| d * s as f64)
            .sum();
        total / self.n_nodes() as f64
    }

    /// Per-block sum of covariate variances, `sum_r M(1 - M)`.
    pub fn block_variance_sums(&self) -> Vec<f64> {
        self.m
            .row_iter()
            .map(|row| row.iter().map(|p| p * (1.0 - p)).sum())
            .collect()
    }

    fn guard(&self) -> Result<()> {
        let n = self.n_nodes();
        if n > POPULATION_MAX_NODES {
            Err(CascError::TooLarge {
                n,
                limit: POPULATION_MAX_NODES,
            })
        } else {
            Ok(())
        }
    }
}

/// `B` (or the non-assortative `B'`) and `M` for the two-level block design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub b: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub warnings: Vec<String>,
}

/// Assortative: `p` on the diagonal of `B`, `q` elsewhere. Non-assortative:
/// `q` on the diagonal, `p` elsewhere. `M[k, r] = m1` when `r mod K = k`,
/// `m2` otherwise, so a multiple-of-`K` covariate count repeats the pattern.
pub fn make_design_matrices(
    p: f64,
    q: f64,
    m1: f64,
    m2: f64,
    k: usize,
    r: usize,
    assortative: bool,
) -> Result<DesignMatrices> {
    for (name, v) in [("p", p), ("q", q), ("m1", m1), ("m2", m2)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CascError::InvalidParameter(format!(
                "{name} = {v} outside [0, 1]"
            )));
        }
    }
    if k == 0 || r == 0 {
        return Err(CascError::InvalidParameter("K and R must be positive".into()));
    }
    let (diag, off) = if assortative { (p, q) } else { (q, p) };
    let b = DMatrix::from_fn(k, k, |i, j| if i == j { diag } else { off });
    let m = DMatrix::from_fn(k, r, |i, j| if j % k == i { m1 } else { m2 });
    let mut warnings = Vec::new();
    if r % k != 0 {
        warnings.push(format!("R = {r} is not a multiple of K = {k}"));
    }
    if b.determinant().abs() <= RANK_TOLERANCE {
        let msg = "B is not full rank".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(DesignMatrices { b, m, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcsbmSample {
    pub graph: SparseGraph,
    pub covariates: CovariateMatrix,
    /// Graph block labels `Z`.
    pub labels: Vec<usize>,
    /// Labels the covariates were drawn from (differs from `labels` under misspecification).
    pub covariate_labels: Vec<usize>,
}

/// Draws a graph and covariates; deterministic in `seed`.
pub fn sample_ncsbm(params: &NcsbmParams, seed: u64) -> NcsbmSample {
    let labels = params.labels();
    sample_with_covariate_labels(params, &labels, seed)
        .expect("block labels are valid covariate labels")
}

/// Same as [`sample_ncsbm`], but covariate means follow `covariate_labels`.
pub fn sample_with_covariate_labels(
    params: &NcsbmParams,
    covariate_labels: &[usize],
    seed: u64,
) -> Result<NcsbmSample> {
    let n = params.n_nodes();
    let k = params.k_blocks();
    if covariate_labels.len() != n {
        return Err(CascError::DimensionMismatch {
            expected: n,
            got: covariate_labels.len(),
        });
    }
    if let Some(&bad) = covariate_labels.iter().find(|&&l| l >= k) {
        return Err(CascError::InvalidParameter(format!(
            "covariate label {bad} outside [0, {k})"
        )));
    }
    let labels = params.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut edges = Vec::new();
    for i in 0..n {
        let bi = labels[i];
        for j in i + 1..n {
            let prob = params.b[(bi, labels[j])];
            if prob > 0.0 && rng.random::<f64>() < prob {
                edges.push((i, j, 1.0));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, &edges).expect("indices in range");

    let r = params.n_covariates();
    let mut values = DMatrix::zeros(n, r);
    for i in 0..n {
        for c in 0..r {
            if rng.random::<f64>() < params.m[(covariate_labels[i], c)] {
                values[(i, c)] = 1.0;
            }
        }
    }
    let covariates = CovariateMatrix::new(values).expect("finite covariates");

    Ok(NcsbmSample {
        graph,
        covariates,
        labels,
        covariate_labels: covariate_labels.to_vec(),
    })
}

/// Flips `ceil((1 - agreement) N)` uniformly chosen labels to a different
/// label chosen uniformly among the other `K - 1`.
pub fn misspecify_membership(
    labels: &[usize],
    k: usize,
    agreement: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if k == 0 || !(agreement <= 1.0 && agreement >= 1.0 / k as f64 - 1e-12) {
        return Err(CascError::InvalidParameter(format!(
            "agreement {agreement} outside [1/K, 1] for K = {k}"
        )));
    }
    let n = labels.len();
    let flips = flip_count(n, agreement);
    if flips > 0 && k < 2 {
        return Err(CascError::InvalidParameter(
            "cannot relabel nodes with a single block".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = labels.to_vec();
    for i in sample(&mut rng, n, flips) {
        let shift = rng.random_range(1..k);
        out[i] = (labels[i] + shift) % k;
    }
    Ok(out)
}

/// `ceil((1 - agreement) N)`, ignoring floating-point noise just above an integer.
pub fn flip_count(n: usize, agreement: f64) -> usize {
    let exact = (1.0 - agreement) * n as f64;
    ((exact - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Degree-normalized squared population adjacency
/// `(D + tau)^{-1/2} A (D + tau)^{-1} A (D + tau)^{-1/2}` with `A = Z B Z^T`.
pub fn population_squared_laplacian(params: &NcsbmParams, tau: f64) -> Result<DMatrix<f64>> {
    params.guard()?;
    let k = params.k_blocks();
    let deg = params.block_degrees();
    let inv_reg: Vec<f64> = deg.iter().map(|d| 1.0 / (d + tau)).collect();
    if deg.iter().any(|d| d + tau <= 0.0) {
        return Err(CascError::ZeroRegularizedDegree { node: 0 });
    }
    // block form: G = B diag(n_c / (d_c + tau)) B
    let sizes = params.block_sizes();
    let g = DMatrix::from_fn(k, k, |a, b| {
        (0..k)
            .map(|c| params.b[(a, c)] * params.b[(c, b)] * sizes[c] as f64 * inv_reg[c])
            .sum::<f64>()
    });
    let labels = params.labels();
    let n = labels.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (labels[i], labels[j]);
        g[(a, b)] * (inv_reg[a] * inv_reg[b]).sqrt()
    }))
}

/// `E(X X^T) = Z M M^T Z^T + diag(sum_r Var(X_ir))` for Bernoulli covariates.
pub fn population_covariate_gram(params: &NcsbmParams) -> Result<DMatrix<f64>> {
    params.guard()?;
    let mmt = &params.m * params.m.transpose();
    let var = params.block_variance_sums();
    let labels = params.labels();
    let n = labels.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let base = mmt[(labels[i], labels[j])];
        if i == j {
            base + var[labels[i]]
        } else {
            base
        }
    }))
}

/// Population covariate-assisted Laplacian `squared + alpha E(X X^T)`.
pub fn population_laplacian(params: &NcsbmParams, alpha: f64, tau: f64) -> Result<DMatrix<f64>> {
    if !(alpha >= 0.0) || !(tau >= 0.0) {
        return Err(CascError::InvalidParameter(
            "alpha and tau must be nonnegative".into(),
        ));
    }
    let mut l = population_squared_laplacian(params, tau)?;
    if alpha > 0.0 {
        l += population_covariate_gram(params)? * alpha;
    }
    Ok(l)
}

/// `lambda_1(squared population Laplacian) / lambda_1(E(X X^T))`.
pub fn population_alpha_init(params: &NcsbmParams, tau: f64) -> Result<f64> {
    let top = |m: DMatrix<f64>| -> Result<f64> {
        Ok(crate::eigen::dense_top_k(&m, 1)?.eigenvalues[0])
    };
    let graph_top = top(population_squared_laplacian(params, tau)?)?;
    let cov_top = top(population_covariate_gram(params)?)?;
    if cov_top <= 0.0 {
        return Err(CascError::ZeroCovariates);
    }
    Ok(graph_top / cov_top)
}
