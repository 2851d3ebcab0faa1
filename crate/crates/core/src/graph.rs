//! Sparse undirected graphs, node covariates and the matrix-free similarity
//! operators built from them.
//!
//! The regularized Laplacian is `L = D_tau^{-1/2} A D_tau^{-1/2}` with
//! `D_tau = D + tau I`. None of the operators here materialize an `N x N`
//! matrix: the covariate terms are applied as `X (X^T v)` and the Laplacian
//! through the compressed adjacency rows.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CascError, Result};

/// Symmetric sparse adjacency in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
}

impl SparseGraph {
    /// Builds a graph from `(i, j, weight)` triples.
    ///
    /// Every entry is stored at both `(i, j)` and `(j, i)`. Repeated entries for
    /// the same unordered pair are summed. Self-loops are kept as a single
    /// diagonal entry and counted once in the degree.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut canonical = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            for index in [i, j] {
                if index >= n_nodes {
                    return Err(CascError::IndexOutOfRange { index, n_nodes });
                }
            }
            if !w.is_finite() {
                return Err(CascError::NonFinite { row: i, col: j });
            }
            if w < 0.0 {
                return Err(CascError::NegativeWeight { i, j, weight: w });
            }
            canonical.push((i.min(j), i.max(j), w));
        }
        canonical.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(canonical.len());
        for (i, j, w) in canonical {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += w,
                _ => merged.push((i, j, w)),
            }
        }

        let mut directed = Vec::with_capacity(2 * merged.len());
        for &(i, j, w) in &merged {
            directed.push((i, j, w));
            if i != j {
                directed.push((j, i, w));
            }
        }
        directed.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n_nodes + 1];
        for &(i, _, _) in &directed {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<usize> = directed.iter().map(|e| e.1).collect();
        let weights: Vec<f64> = directed.iter().map(|e| e.2).collect();

        let degrees = (0..n_nodes)
            .map(|i| weights[row_ptr[i]..row_ptr[i + 1]].iter().sum())
            .collect();

        Ok(Self {
            n_nodes,
            row_ptr,
            col_idx,
            weights,
            degrees,
        })
    }

    /// Graph with `n_nodes` nodes and no edges.
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            row_ptr: vec![0; n_nodes + 1],
            col_idx: Vec::new(),
            weights: Vec::new(),
            degrees: vec![0.0; n_nodes],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of stored unordered pairs, self-loops included.
    pub fn n_edges(&self) -> usize {
        let loops = (0..self.n_nodes)
            .filter(|&i| self.neighbors(i).any(|(j, _)| j == i))
            .count();
        (self.col_idx.len() - loops) / 2 + loops
    }

    /// Neighbors of `node` with the corresponding edge weights.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[node]..self.row_ptr[node + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// Stored weight of `(i, j)`, zero when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.weights[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Weighted degrees `D_ii = sum_j A_ij`.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn total_weight(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_nodes {
            for (j, w) in self.neighbors(i) {
                if j >= i {
                    total += w;
                }
            }
        }
        total
    }

    /// Average node degree, the default regularization constant.
    pub fn default_tau(&self) -> f64 {
        if self.n_nodes == 0 {
            return 0.0;
        }
        self.degrees.iter().sum::<f64>() / self.n_nodes as f64
    }

    /// All stored entries with `i <= j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n_nodes {
            for (j, w) in self.neighbors(i) {
                if j >= i {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Dense copy of the adjacency matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for i in 0..self.n_nodes {
            for (j, w) in self.neighbors(i) {
                a[(i, j)] = w;
            }
        }
        a
    }

    /// Regularized Laplacian bound to this graph.
    pub fn laplacian(&self, tau: f64) -> Result<RegularizedLaplacian<'_>> {
        RegularizedLaplacian::new(self, tau)
    }
}

/// `D_tau^{-1/2} A D_tau^{-1/2}` as a matrix-free operator.
#[derive(Debug, Clone)]
pub struct RegularizedLaplacian<'a> {
    graph: &'a SparseGraph,
    tau: f64,
    inv_sqrt_degree: Vec<f64>,
}

impl<'a> RegularizedLaplacian<'a> {
    pub fn new(graph: &'a SparseGraph, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(CascError::InvalidParameter(format!(
                "tau must be finite and nonnegative, got {tau}"
            )));
        }
        let mut inv_sqrt_degree = Vec::with_capacity(graph.n_nodes);
        for (node, &d) in graph.degrees.iter().enumerate() {
            let reg = d + tau;
            if reg <= 0.0 {
                return Err(CascError::ZeroRegularizedDegree { node });
            }
            inv_sqrt_degree.push(reg.sqrt().recip());
        }
        Ok(Self {
            graph,
            tau,
            inv_sqrt_degree,
        })
    }

    pub fn dim(&self) -> usize {
        self.graph.n_nodes
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `out = L v`.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let g = self.graph;
        for i in 0..g.n_nodes {
            let mut acc = 0.0;
            for k in g.row_ptr[i]..g.row_ptr[i + 1] {
                let j = g.col_idx[k];
                acc += g.weights[k] * self.inv_sqrt_degree[j] * v[j];
            }
            out[i] = self.inv_sqrt_degree[i] * acc;
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut l = self.graph.to_dense();
        for i in 0..n {
            for j in 0..n {
                l[(i, j)] *= self.inv_sqrt_degree[i] * self.inv_sqrt_degree[j];
            }
        }
        l
    }
}

/// Applies the regularized Laplacian of `graph` to `v`.
pub fn laplacian_apply(graph: &SparseGraph, tau: f64, v: &[f64]) -> Result<Vec<f64>> {
    graph.laplacian(tau)?.apply(v)
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CascError::DimensionMismatch { expected, got })
    }
}

/// Preprocessing applied to a [`CovariateMatrix`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessingFlags {
    pub centered: bool,
    pub scaled: bool,
    /// Columns with zero sample variance, left as all-zero when scaling.
    pub zero_variance_columns: Vec<usize>,
}

/// Dense `N x R` matrix of bounded node covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    values: DMatrix<f64>,
    bound: f64,
    flags: PreprocessingFlags,
}

impl CovariateMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        // column-major storage
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(CascError::NonFinite {
                row: idx % values.nrows(),
                col: idx / values.nrows(),
            });
        }
        if values.ncols() == 0 {
            return Err(CascError::InvalidParameter(
                "covariate matrix needs at least one column".into(),
            ));
        }
        let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            values,
            bound,
            flags: PreprocessingFlags::default(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != r) {
            return Err(CascError::DimensionMismatch {
                expected: r,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, r, |i, j| rows[i][j]))
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Largest absolute entry `J`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn flags(&self) -> &PreprocessingFlags {
        &self.flags
    }

    /// `X w` for `w` of length `R`.
    pub fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        let (n, r) = self.values.shape();
        out[..n].fill(0.0);
        for c in 0..r {
            let wc = w[c];
            if wc == 0.0 {
                continue;
            }
            let col = self.values.column(c);
            for i in 0..n {
                out[i] += col[i] * wc;
            }
        }
    }

    /// `X^T v` for `v` of length `N`.
    pub fn transpose_apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (c, col) in self.values.column_iter().enumerate() {
            out[c] = col.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `X (X^T v)`.
    pub fn gram_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut tmp = vec![0.0; self.n_covariates()];
        self.transpose_apply_into(v, &mut tmp);
        let mut out = vec![0.0; self.n_nodes()];
        self.apply_into(&tmp, &mut out);
        out
    }

    /// Eigenvalues of `X X^T` in descending order, padded with zeros to length `N`
    /// only as far as `min(N, R)` (the remaining ones are exactly zero).
    pub fn gram_eigenvalues(&self) -> Vec<f64> {
        let xtx = self.values.transpose() * &self.values;
        let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(xtx)
            .eigenvalues
            .iter()
            .map(|&l| l.max(0.0))
            .collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        eig.truncate(self.n_nodes().min(self.n_covariates()));
        eig
    }
}

/// One raw covariate column before preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl RawColumn {
    fn len(&self) -> usize {
        match self {
            RawColumn::Numeric(v) => v.len(),
            RawColumn::Categorical(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub center: bool,
    pub scale: bool,
}

/// Dummy-codes categorical columns (one indicator per level, levels in sorted
/// order) and optionally centers and scales the numeric columns.
///
/// Scaling uses the sample standard deviation with denominator `N - 1`. A
/// numeric column with zero variance is left as all-zero and reported in
/// [`PreprocessingFlags::zero_variance_columns`].
pub fn preprocess_covariates(
    columns: &[RawColumn],
    options: PreprocessOptions,
) -> Result<CovariateMatrix> {
    let n = columns.first().map_or(0, RawColumn::len);
    if let Some(bad) = columns.iter().find(|c| c.len() != n) {
        return Err(CascError::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }

    let mut out_cols: Vec<Vec<f64>> = Vec::new();
    let mut zero_variance = Vec::new();
    for (src, column) in columns.iter().enumerate() {
        match column {
            RawColumn::Numeric(values) => {
                if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                    return Err(CascError::NonFinite { row, col: src });
                }
                let mut col = values.clone();
                let mean = col.iter().sum::<f64>() / n.max(1) as f64;
                if options.center {
                    col.iter_mut().for_each(|v| *v -= mean);
                }
                if options.scale {
                    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
                    let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
                    if sd > 0.0 {
                        col.iter_mut().for_each(|v| *v /= sd);
                    } else {
                        log::warn!("covariate column {src} has zero variance; left as zeros");
                        zero_variance.push(out_cols.len());
                        col.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                out_cols.push(col);
            }
            RawColumn::Categorical(values) => {
                let levels: BTreeSet<&str> = values.iter().map(String::as_str).collect();
                for level in levels {
                    out_cols.push(
                        values
                            .iter()
                            .map(|v| if v == level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
            }
        }
    }

    let r = out_cols.len();
    let mut x = CovariateMatrix::new(DMatrix::from_fn(n, r, |i, j| out_cols[j][i]))?;
    x.flags = PreprocessingFlags {
        centered: options.center,
        scaled: options.scale,
        zero_variance_columns: zero_variance,
    };
    Ok(x)
}

/// Which similarity matrix Algorithm-style spectral clustering diagonalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// Regularized spectral clustering on `L`.
    Rsc,
    /// Assortative covariate-assisted: `L + alpha X X^T`.
    Acasc,
    /// Covariate-assisted: `L L + alpha X X^T`.
    Casc,
    /// Canonical-correlation variant: `L X` (rectangular).
    Cca,
    /// Covariates only: `X X^T`.
    Cov,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 5] = [
        OperatorKind::Rsc,
        OperatorKind::Acasc,
        OperatorKind::Casc,
        OperatorKind::Cca,
        OperatorKind::Cov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Rsc => "rsc",
            OperatorKind::Acasc => "acasc",
            OperatorKind::Casc => "casc",
            OperatorKind::Cca => "cca",
            OperatorKind::Cov => "cov",
        }
    }

    pub fn needs_covariates(self) -> bool {
        !matches!(self, OperatorKind::Rsc)
    }

    pub fn uses_alpha(self) -> bool {
        matches!(self, OperatorKind::Acasc | OperatorKind::Casc)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = CascError;

    fn from_str(s: &str) -> Result<Self> {
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CascError::InvalidSpec(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub alpha: f64,
    pub tau: f64,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, alpha: f64, tau: f64) -> Result<Self> {
        let spec = Self { kind, alpha, tau };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(CascError::InvalidSpec(format!(
                "alpha must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(CascError::InvalidSpec(format!(
                "tau must be finite and nonnegative, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// A square similarity operator (every kind except CCA) ready to apply.
#[derive(Debug, Clone)]
pub struct SimilarityOperator<'a> {
    kind: OperatorKind,
    alpha: f64,
    laplacian: Option<RegularizedLaplacian<'a>>,
    covariates: Option<&'a CovariateMatrix>,
    n: usize,
}

impl<'a> SimilarityOperator<'a> {
    pub fn new(
        spec: &OperatorSpec,
        graph: &'a SparseGraph,
        covariates: Option<&'a CovariateMatrix>,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.kind == OperatorKind::Cca {
            return Err(CascError::InvalidSpec(
                "the CCA operator is rectangular; use CcaOperator".into(),
            ));
        }
        let n = graph.n_nodes();
        if spec.kind.needs_covariates() {
            let x = covariates.ok_or(CascError::MissingCovariates(spec.kind.name()))?;
            check_len(n, x.n_nodes())?;
        }
        let laplacian = match spec.kind {
            OperatorKind::Cov => None,
            _ => Some(graph.laplacian(spec.tau)?),
        };
        Ok(Self {
            kind: spec.kind,
            alpha: spec.alpha,
            laplacian,
            covariates: if spec.kind.needs_covariates() {
                covariates
            } else {
                None
            },
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// `out = W v`. Scratch buffers are allocated per call.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self.kind {
            OperatorKind::Rsc => self.lap().apply_into(v, out),
            OperatorKind::Acasc => {
                self.lap().apply_into(v, out);
                self.add_covariate_term(v, out, self.alpha);
            }
            OperatorKind::Casc => {
                let mut tmp = vec![0.0; self.n];
                self.lap().apply_into(v, &mut tmp);
                self.lap().apply_into(&tmp, out);
                self.add_covariate_term(v, out, self.alpha);
            }
            OperatorKind::Cov => {
                out.fill(0.0);
                self.add_covariate_term(v, out, 1.0);
            }
            OperatorKind::Cca => unreachable!("rejected at construction"),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, v.len())?;
        let mut out = vec![0.0; self.n];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    fn lap(&self) -> &RegularizedLaplacian<'a> {
        self.laplacian.as_ref().expect("graph operator")
    }

    fn add_covariate_term(&self, v: &[f64], out: &mut [f64], scale: f64) {
        if scale == 0.0 {
            return;
        }
        let x = self.covariates.expect("covariate operator");
        let mut proj = vec![0.0; x.n_covariates()];
        x.transpose_apply_into(v, &mut proj);
        proj.iter_mut().for_each(|p| *p *= scale);
        let mut tmp = vec![0.0; self.n];
        x.apply_into(&proj, &mut tmp);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
    }
}

/// Applies a square similarity operator to `v`.
pub fn operator_apply(
    spec: &OperatorSpec,
    graph: &SparseGraph,
    covariates: Option<&CovariateMatrix>,
    v: &[f64],
) -> Result<Vec<f64>> {
    SimilarityOperator::new(spec, graph, covariates)?.apply(v)
}

/// The rectangular operator `L X` and its transpose `X^T L`.
#[derive(Debug, Clone)]
pub struct CcaOperator<'a> {
    laplacian: RegularizedLaplacian<'a>,
    covariates: &'a CovariateMatrix,
}

impl<'a> CcaOperator<'a> {
    pub fn new(graph: &'a SparseGraph, tau: f64, covariates: &'a CovariateMatrix) -> Result<Self> {
        check_len(graph.n_nodes(), covariates.n_nodes())?;
        Ok(Self {
            laplacian: graph.laplacian(tau)?,
            covariates,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.covariates.n_nodes()
    }

    pub fn n_cols(&self) -> usize {
        self.covariates.n_covariates()
    }

    /// `out = L (X w)`, `w` of length `R`.
    pub fn forward_into(&self, w: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; self.n_rows()];
        self.covariates.apply_into(w, &mut tmp);
        self.laplacian.apply_into(&tmp, out);
    }

    /// `out = X^T (L v)`, `v` of length `N`.
    pub fn transpose_into(&self, v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; self.n_rows()];
        self.laplacian.apply_into(v, &mut tmp);
        self.covariates.transpose_apply_into(&tmp, out);
    }
}

/// `L (X v)` when `transpose` is false, `X^T (L v)` otherwise.
pub fn cca_apply(
    graph: &SparseGraph,
    tau: f64,
    covariates: &CovariateMatrix,
    v: &[f64],
    transpose: bool,
) -> Result<Vec<f64>> {
    let op = CcaOperator::new(graph, tau, covariates)?;
    if transpose {
        check_len(op.n_rows(), v.len())?;
        let mut out = vec![0.0; op.n_cols()];
        op.transpose_into(v, &mut out);
        Ok(out)
    } else {
        check_len(op.n_cols(), v.len())?;
        let mut out = vec![0.0; op.n_rows()];
        op.forward_into(v, &mut out);
        Ok(out)
    }
}
