//! Choice of the covariate weight `alpha`: the initial balance `alpha_0`, the
//! interval where the leading eigenspace can change, and a grid search
//! minimizing the k-means objective.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{spectral_cluster_with, ClusteringSummary, KmeansConfig, SpectralOptions};
use crate::eigen::{top_k_symmetric, SolverConfig};
use crate::error::{CascError, Result};
use crate::graph::{CovariateMatrix, OperatorKind, OperatorSpec, SparseGraph};

/// Lower grid endpoint relative to `alpha_0` when `alpha_min` is tiny or zero.
pub const LOWER_FLOOR: f64 = 1e-4;
/// Upper endpoint relative to `alpha_0` when the range is unbounded above.
pub const UNBOUNDED_UPPER: f64 = 10.0;
pub const DEFAULT_GRID_SIZE: usize = 20;

/// Leading eigenvalues used by the tuning formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectra {
    /// Top `K + 1` eigenvalues of the graph part (`L L` for CASC, `L` for ACASC).
    pub graph: Vec<f64>,
    /// Top `max(R, K + 1)` eigenvalues of `X X^T`, zero-padded.
    pub covariates: Vec<f64>,
}

impl Spectra {
    pub fn compute(
        graph: &SparseGraph,
        x: &CovariateMatrix,
        tau: f64,
        k: usize,
        variant: OperatorKind,
        solver: &SolverConfig,
    ) -> Result<Self> {
        if k == 0 {
            return Err(CascError::InvalidParameter("K must be at least 1".into()));
        }
        let n = graph.n_nodes();
        if x.n_nodes() != n {
            return Err(CascError::DimensionMismatch {
                expected: n,
                got: x.n_nodes(),
            });
        }
        let lap = graph.laplacian(tau)?;
        let want = (k + 1).min(n);
        let cfg = SolverConfig { k: want, ..*solver };
        let eig = match variant {
            OperatorKind::Casc => top_k_symmetric(
                |v, out| {
                    let mut tmp = vec![0.0; n];
                    lap.apply_into(v, &mut tmp);
                    lap.apply_into(&tmp, out);
                },
                n,
                &cfg,
            )?,
            OperatorKind::Acasc => top_k_symmetric(|v, out| lap.apply_into(v, out), n, &cfg)?,
            other => {
                return Err(CascError::InvalidSpec(format!(
                    "alpha tuning applies to casc and acasc, not {other}"
                )))
            }
        };
        let mut graph_eigs = eig.eigenvalues;
        graph_eigs.resize(k + 1, 0.0);
        let mut cov = x.gram_eigenvalues();
        cov.resize(x.n_covariates().max(k + 1), 0.0);
        Ok(Self {
            graph: graph_eigs,
            covariates: cov,
        })
    }

    fn leading_covariate(&self) -> Result<f64> {
        let l1 = self.covariates[0];
        if l1 > 0.0 {
            Ok(l1)
        } else {
            Err(CascError::ZeroCovariates)
        }
    }

    /// `lambda_1(graph) / lambda_1(X X^T)`.
    pub fn alpha_init(&self) -> Result<f64> {
        Ok(self.graph[0] / self.leading_covariate()?)
    }

    pub fn alpha_range(&self, k: usize, r: usize) -> Result<AlphaRange> {
        let l1x = self.leading_covariate()?;
        let g = &self.graph;
        let c = &self.covariates;
        let min = ((g[k - 1] - g[k]) / l1x).max(0.0);
        let denom = if r <= k { c[r - 1] } else { c[k - 1] - c[k] };
        let (max, unbounded) = if denom > 0.0 {
            (g[0] / denom, false)
        } else {
            (f64::INFINITY, true)
        };
        debug_assert!(unbounded || min <= max * (1.0 + 1e-12));
        Ok(AlphaRange { min, max, unbounded })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRange {
    pub min: f64,
    /// `f64::INFINITY` when `unbounded`.
    pub max: f64,
    /// The denominator of the upper endpoint vanished.
    pub unbounded: bool,
}

/// `lambda_1(L L) / lambda_1(X X^T)`.
pub fn alpha_init(graph: &SparseGraph, x: &CovariateMatrix, tau: f64) -> Result<f64> {
    Spectra::compute(graph, x, tau, 1, OperatorKind::Casc, &SolverConfig::default())?.alpha_init()
}

/// Interval of `alpha` over which the leading eigenspace of `L L + alpha X X^T` can change.
pub fn alpha_range(graph: &SparseGraph, x: &CovariateMatrix, tau: f64, k: usize) -> Result<AlphaRange> {
    Spectra::compute(graph, x, tau, k, OperatorKind::Casc, &SolverConfig::default())?
        .alpha_range(k, x.n_covariates())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub grid_size: usize,
    /// `Casc` or `Acasc`.
    pub variant: OperatorKind,
    pub normalize_rows: bool,
    pub solver: SolverConfig,
}

impl TuneOptions {
    pub fn new(grid_size: usize, seed: u64) -> Self {
        Self {
            grid_size,
            variant: OperatorKind::Casc,
            normalize_rows: false,
            solver: SolverConfig::default().with_seed(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    /// `None` when the clustering failed.
    pub wcss: Option<f64>,
    pub summary: Option<ClusteringSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub alpha_star: f64,
    pub alpha_min: f64,
    /// Upper end of the searched grid; the substituted endpoint when `unbounded`.
    pub alpha_max: f64,
    pub alpha_init: f64,
    pub unbounded: bool,
    pub grid: Vec<GridPoint>,
    pub spectra: Spectra,
    pub warnings: Vec<String>,
}

impl TuningResult {
    pub fn best(&self) -> Option<&GridPoint> {
        self.grid.iter().find(|g| g.alpha == self.alpha_star)
    }
}

/// Sorted, deduplicated grid: geometric over `[max(lo, floor * alpha_0), hi]`
/// plus `alpha_0`, and zero when `lo` is zero.
pub fn alpha_grid(lo: f64, hi: f64, alpha_0: f64, size: usize) -> Vec<f64> {
    let start = lo.max(LOWER_FLOOR * alpha_0).min(hi);
    let mut grid = Vec::with_capacity(size + 2);
    if lo == 0.0 {
        grid.push(0.0);
    }
    if start > 0.0 && hi > start && size >= 2 {
        let ratio = (hi / start).ln() / (size - 1) as f64;
        grid.extend((0..size).map(|i| start * (ratio * i as f64).exp()));
        *grid.last_mut().unwrap() = hi;
    } else {
        grid.push(start);
        grid.push(hi);
    }
    if alpha_0 >= lo && alpha_0 <= hi {
        grid.push(alpha_0);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(f64::MIN_POSITIVE));
    grid
}

/// Grid search with default options (CASC, no row normalization).
pub fn tune_alpha(
    graph: &SparseGraph,
    x: &CovariateMatrix,
    tau: f64,
    k: usize,
    kcfg: &KmeansConfig,
    grid_size: usize,
) -> Result<TuningResult> {
    tune_alpha_with(graph, x, tau, k, kcfg, &TuneOptions::new(grid_size, kcfg.seed))
}

pub fn tune_alpha_with(
    graph: &SparseGraph,
    x: &CovariateMatrix,
    tau: f64,
    k: usize,
    kcfg: &KmeansConfig,
    options: &TuneOptions,
) -> Result<TuningResult> {
    if options.grid_size < 2 {
        return Err(CascError::InvalidParameter(format!(
            "grid size must be at least 2, got {}",
            options.grid_size
        )));
    }
    if kcfg.k != k {
        return Err(CascError::InvalidParameter(format!(
            "k-means configured for {} clusters, tuning for {k}",
            kcfg.k
        )));
    }
    let spectra = Spectra::compute(graph, x, tau, k, options.variant, &options.solver)?;
    let alpha_0 = spectra.alpha_init()?;
    let range = spectra.alpha_range(k, x.n_covariates())?;
    let mut warnings = Vec::new();
    let hi = if range.unbounded {
        let hi = (UNBOUNDED_UPPER * alpha_0).max(range.min);
        warnings.push(format!(
            "upper end of the alpha range is unbounded; searching up to {hi}"
        ));
        hi
    } else {
        range.max
    };
    let grid = alpha_grid(range.min, hi, alpha_0, options.grid_size);
    let spectral = SpectralOptions {
        normalize_rows: options.normalize_rows,
        solver: options.solver,
    };

    let points: Vec<GridPoint> = grid
        .par_iter()
        .map(|&alpha| {
            let outcome = OperatorSpec::new(options.variant, alpha, tau)
                .and_then(|spec| spectral_cluster_with(graph, Some(x), &spec, kcfg, &spectral));
            match outcome {
                Ok(res) => GridPoint {
                    alpha,
                    wcss: Some(res.wcss),
                    summary: Some(res.summary()),
                    error: None,
                },
                Err(e) => GridPoint {
                    alpha,
                    wcss: None,
                    summary: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for p in &points {
        match p.wcss {
            Some(w) if best.is_none_or(|(_, b)| w < b) => best = Some((p.alpha, w)),
            Some(_) => {}
            None => {
                let msg = format!(
                    "alpha = {} excluded: {}",
                    p.alpha,
                    p.error.as_deref().unwrap_or("unknown error")
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let (alpha_star, _) = best.ok_or_else(|| {
        CascError::Degenerate("clustering failed at every grid point".into())
    })?;
    Ok(TuningResult {
        alpha_star,
        alpha_min: range.min,
        alpha_max: hi,
        alpha_init: alpha_0,
        unbounded: range.unbounded,
        grid: points,
        spectra,
        warnings,
    })
}
