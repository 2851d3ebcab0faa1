//! Spectral clustering: leading eigenvectors of a similarity operator,
//! optional row normalization, then k-means on the rows.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{
    self, top_k_left_singular, top_k_symmetric, EigenDiagnostics, EigenResult, SolverConfig,
};
use crate::error::{CascError, Result};
use crate::graph::{CcaOperator, CovariateMatrix, OperatorKind, OperatorSpec, SimilarityOperator, SparseGraph};

/// Rows with a smaller norm are left at zero by [`row_normalize`].
pub const ZERO_ROW_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// Largest squared centroid shift treated as converged.
    pub tol: f64,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            n_init: 20,
            max_iter: 300,
            tol: 1e-12,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    /// `k x d`, one centroid per row.
    pub centroids: DMatrix<f64>,
    pub wcss: f64,
    pub iterations: usize,
    pub best_restart: usize,
}

/// Scales every row to unit length. Returns the normalized matrix and the
/// number of rows that were (numerically) zero and left as zero.
pub fn row_normalize(u: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let mut out = u.clone();
    let mut zero_rows = 0;
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm < ZERO_ROW_NORM {
            row.fill(0.0);
            zero_rows += 1;
        } else {
            row /= norm;
        }
    }
    (out, zero_rows)
}

/// Row-major view of the points, cheaper to scan than nalgebra's column-major layout.
struct Points {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Points {
    fn new(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(m[(i, j)]);
            }
        }
        Self { data, n, d }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from `n_init` k-means++ starts; the run with the lowest
/// within-cluster sum of squares wins. Restart `r` is seeded with `seed + r`,
/// so the result does not depend on how restarts are scheduled.
pub fn kmeans(points: &DMatrix<f64>, config: &KmeansConfig) -> Result<KmeansResult> {
    let n = points.nrows();
    if config.k == 0 || config.n_init == 0 {
        return Err(CascError::InvalidParameter(
            "k-means needs k >= 1 and n_init >= 1".into(),
        ));
    }
    if n < config.k {
        return Err(CascError::InvalidParameter(format!(
            "k-means with {} clusters on {n} points",
            config.k
        )));
    }
    let pts = Points::new(points);
    let runs: Vec<KmeansResult> = (0..config.n_init)
        .into_par_iter()
        .map(|r| {
            let mut res = lloyd(&pts, config, config.seed.wrapping_add(r as u64));
            res.best_restart = r;
            res
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.wcss < a.wcss { b } else { a })
        .expect("n_init >= 1");
    Ok(best)
}

fn kmeans_pp(pts: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(pts.row(rng.random_range(0..pts.n)).to_vec());
    let mut best: Vec<f64> = (0..pts.n).map(|i| sq_dist(pts.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = pts.n - 1;
            for (i, &w) in best.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..pts.n)
        };
        let c = pts.row(pick).to_vec();
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(pts.row(i), &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(pts: &Points, centers: &[Vec<f64>], labels: &mut [usize]) {
    for (i, label) in labels.iter_mut().enumerate() {
        let p = pts.row(i);
        let mut best = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best {
                best = d;
                *label = c;
            }
        }
    }
}

/// Cluster means; an empty cluster takes over the point farthest from its
/// current centroid.
fn update(pts: &Points, k: usize, labels: &mut [usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    loop {
        let mut sums = vec![vec![0.0; pts.d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..pts.n {
            counts[labels[i]] += 1;
            sums[labels[i]]
                .iter_mut()
                .zip(pts.row(i))
                .for_each(|(s, x)| *s += x);
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            for (s, &c) in sums.iter_mut().zip(&counts) {
                s.iter_mut().for_each(|v| *v /= c as f64);
            }
            return sums;
        };
        let mut farthest = None;
        let mut far_d = -1.0;
        for i in 0..pts.n {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(pts.row(i), &previous[labels[i]]);
            if d > far_d {
                far_d = d;
                farthest = Some(i);
            }
        }
        let i = farthest.expect("n >= k guarantees a cluster with two points");
        labels[i] = empty;
    }
}

fn cost(pts: &Points, labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    (0..pts.n).map(|i| sq_dist(pts.row(i), &centers[labels[i]])).sum()
}

fn lloyd(pts: &Points, config: &KmeansConfig, seed: u64) -> KmeansResult {
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(pts, k, &mut rng);
    let mut labels = vec![0usize; pts.n];
    assign(pts, &centers, &mut labels);

    let mut previous_cost = f64::INFINITY;
    let mut wcss;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let new_centers = update(pts, k, &mut labels, &centers);
        let shift = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max);
        centers = new_centers;
        wcss = cost(pts, &labels, &centers);
        debug_assert!(
            wcss <= previous_cost + 1e-9 * (1.0 + previous_cost.abs()),
            "k-means objective increased: {previous_cost} -> {wcss}"
        );
        previous_cost = wcss;
        if iterations >= config.max_iter || shift <= config.tol {
            break;
        }
        let mut next = labels.clone();
        assign(pts, &centers, &mut next);
        if next == labels {
            break;
        }
        labels = next;
    }

    let centroids = DMatrix::from_fn(k, pts.d, |i, j| centers[i][j]);
    KmeansResult {
        labels,
        centroids,
        wcss,
        iterations,
        best_restart: 0,
    }
}

/// Within-cluster sum of squares of `points` under `labels`, using cluster means.
pub fn within_cluster_ss(points: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let d = points.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..d {
            sums[l][j] += points[(i, j)];
        }
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        for j in 0..d {
            let c = sums[l][j] / counts[l] as f64;
            total += (points[(i, j)] - c).powi(2);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    pub normalize_rows: bool,
    /// `k` is overwritten with the number of clusters.
    pub solver: SolverConfig,
}

impl SpectralOptions {
    pub fn new(normalize_rows: bool, seed: u64) -> Self {
        Self {
            normalize_rows,
            solver: SolverConfig::default().with_seed(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    /// `K x K`, row `i` is the centroid of cluster `i`.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares of the clustered embedding rows.
    pub wcss: f64,
    pub eigen: EigenResult,
    pub spec: OperatorSpec,
    pub row_normalized: bool,
    pub zero_rows: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSummary {
    pub spec: OperatorSpec,
    pub wcss: f64,
    pub cluster_sizes: Vec<usize>,
    pub row_normalized: bool,
    pub zero_rows: usize,
    pub eigen: EigenDiagnostics,
    pub warnings: Vec<String>,
}

impl ClusteringResult {
    pub fn converged(&self) -> bool {
        self.eigen.converged
    }

    /// The rows k-means clustered.
    pub fn embedding(&self) -> DMatrix<f64> {
        if self.row_normalized {
            row_normalize(&self.eigen.eigenvectors).0
        } else {
            self.eigen.eigenvectors.clone()
        }
    }

    pub fn summary(&self) -> ClusteringSummary {
        let mut cluster_sizes = vec![0; self.centroids.nrows()];
        for &l in &self.labels {
            cluster_sizes[l] += 1;
        }
        ClusteringSummary {
            spec: self.spec,
            wcss: self.wcss,
            cluster_sizes,
            row_normalized: self.row_normalized,
            zero_rows: self.zero_rows,
            eigen: self.eigen.diagnostics(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Leading `k`-dimensional embedding for `spec`.
///
/// * `Rsc`: eigenvectors of `L` with the largest |eigenvalue| (solved on `L L`;
///   reported eigenvalues are the Rayleigh quotients in `L`).
/// * `Acasc`, `Casc`: algebraically largest eigenpairs.
/// * `Cca`: left singular vectors of `L X`, requires `R >= k`.
/// * `Cov`: left singular vectors of `X`.
pub fn embed(
    graph: &SparseGraph,
    covariates: Option<&CovariateMatrix>,
    spec: &OperatorSpec,
    k: usize,
    solver: &SolverConfig,
) -> Result<EigenResult> {
    spec.validate()?;
    let n = graph.n_nodes();
    let cfg = SolverConfig { k, ..*solver };
    match spec.kind {
        OperatorKind::Rsc => {
            let lap = graph.laplacian(spec.tau)?;
            let squared = |v: &[f64], out: &mut [f64]| {
                let mut tmp = vec![0.0; n];
                lap.apply_into(v, &mut tmp);
                lap.apply_into(&tmp, out);
            };
            let mut res = top_k_symmetric(squared, n, &cfg)?;
            let mut lu = vec![0.0; n];
            for c in 0..k {
                let u: Vec<f64> = res.eigenvectors.column(c).iter().copied().collect();
                lap.apply_into(&u, &mut lu);
                res.eigenvalues[c] = u.iter().zip(&lu).map(|(a, b)| a * b).sum();
            }
            Ok(res)
        }
        OperatorKind::Acasc | OperatorKind::Casc => {
            let op = SimilarityOperator::new(spec, graph, covariates)?;
            top_k_symmetric(|v, out| op.apply_into(v, out), n, &cfg)
        }
        OperatorKind::Cca => {
            let x = covariates.ok_or(CascError::MissingCovariates("cca"))?;
            if x.n_covariates() < k {
                return Err(CascError::InvalidSpec(format!(
                    "cca needs at least as many covariates as clusters ({} < {k})",
                    x.n_covariates()
                )));
            }
            let op = CcaOperator::new(graph, spec.tau, x)?;
            top_k_left_singular(
                |w, out| op.forward_into(w, out),
                |v, out| op.transpose_into(v, out),
                n,
                x.n_covariates(),
                &cfg,
            )
        }
        OperatorKind::Cov => {
            let x = covariates.ok_or(CascError::MissingCovariates("cov"))?;
            if x.n_nodes() != n {
                return Err(CascError::DimensionMismatch {
                    expected: n,
                    got: x.n_nodes(),
                });
            }
            if x.n_covariates() >= k {
                top_k_left_singular(
                    |w, out| x.apply_into(w, out),
                    |v, out| x.transpose_apply_into(v, out),
                    n,
                    x.n_covariates(),
                    &cfg,
                )
            } else {
                let op = SimilarityOperator::new(spec, graph, Some(x))?;
                top_k_symmetric(|v, out| op.apply_into(v, out), n, &cfg)
            }
        }
    }
}

/// Runs the full pipeline with the solver seeded from `kcfg.seed`.
pub fn spectral_cluster(
    graph: &SparseGraph,
    covariates: Option<&CovariateMatrix>,
    spec: &OperatorSpec,
    kcfg: &KmeansConfig,
    normalize_rows: bool,
) -> Result<ClusteringResult> {
    spectral_cluster_with(
        graph,
        covariates,
        spec,
        kcfg,
        &SpectralOptions::new(normalize_rows, kcfg.seed),
    )
}

pub fn spectral_cluster_with(
    graph: &SparseGraph,
    covariates: Option<&CovariateMatrix>,
    spec: &OperatorSpec,
    kcfg: &KmeansConfig,
    options: &SpectralOptions,
) -> Result<ClusteringResult> {
    let eigen = embed(graph, covariates, spec, kcfg.k, &options.solver)?;
    let mut result = cluster_eigenvectors(eigen, *spec, kcfg, options.normalize_rows)?;
    if spec.kind == OperatorKind::Casc {
        if let Some(x) = covariates {
            // lambda_1 <= ||L||^2 + alpha lambda_1(X X^T) <= 1 + alpha ||X||_F^2
            let frob = x.values().norm_squared();
            let cap = 1.0 + spec.alpha * frob;
            if result.eigen.eigenvalues[0] > cap * (1.0 + 1e-9) {
                result.warnings.push(format!(
                    "leading eigenvalue {} exceeds its bound {cap}",
                    result.eigen.eigenvalues[0]
                ));
            }
        }
    }
    Ok(result)
}

/// Clusters the top-`kcfg.k` eigenvectors of an explicit symmetric matrix.
pub fn cluster_symmetric_matrix(
    matrix: &DMatrix<f64>,
    spec: OperatorSpec,
    kcfg: &KmeansConfig,
    normalize_rows: bool,
) -> Result<ClusteringResult> {
    let eigen = eigen::dense_top_k(matrix, kcfg.k)?;
    cluster_eigenvectors(eigen, spec, kcfg, normalize_rows)
}

/// Steps after the eigensolve: optional row normalization, k-means, labels.
pub fn cluster_eigenvectors(
    eigen: EigenResult,
    spec: OperatorSpec,
    kcfg: &KmeansConfig,
    normalize_rows: bool,
) -> Result<ClusteringResult> {
    let mut warnings = Vec::new();
    let (points, zero_rows) = if normalize_rows {
        row_normalize(&eigen.eigenvectors)
    } else {
        (eigen.eigenvectors.clone(), 0)
    };
    if zero_rows > 0 {
        warnings.push(format!("{zero_rows} zero rows left unnormalized"));
    }
    if eigen.tie_at_k {
        warnings.push("eigenvalue tie at position k; first k pairs kept".into());
    }
    if !eigen.converged {
        warnings.push("eigensolver did not converge".into());
    }
    let km = kmeans(&points, kcfg)?;
    Ok(ClusteringResult {
        labels: km.labels,
        centroids: km.centroids,
        wcss: km.wcss,
        eigen,
        spec,
        row_normalized: normalize_rows,
        zero_rows,
        warnings,
    })
}
