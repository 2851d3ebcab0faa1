//! Simulation sweeps over the two-level blockmodel design: sample an instance
//! per cell, cluster it with each method, score against the graph blocks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{spectral_cluster_with, KmeansConfig, SpectralOptions};
use crate::eigen::SolverConfig;
use crate::error::{CascError, Result};
use crate::graph::{OperatorKind, OperatorSpec};
use crate::metrics::{ari, misclustering_rate};
use crate::sbm::{
    make_design_matrices, misspecify_membership, sample_with_covariate_labels, NcsbmParams,
    NcsbmSample,
};
use crate::tune::{tune_alpha_with, Spectra, TuneOptions, DEFAULT_GRID_SIZE};

/// Fixed parameters of the two-level design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseDesign {
    pub n_nodes: usize,
    pub k: usize,
    pub r: usize,
    pub p: f64,
    pub q: f64,
    pub m1: f64,
    pub m2: f64,
    pub assortative: bool,
}

impl BaseDesign {
    /// `N = 1500, K = R = 3, p = 0.03, q = 0.015, m1 = 0.8, m2 = 0.2`.
    pub fn reference(assortative: bool) -> Self {
        Self {
            n_nodes: 1500,
            k: 3,
            r: 3,
            p: 0.03,
            q: 0.015,
            m1: 0.8,
            m2: 0.2,
            assortative,
        }
    }

    pub fn params(&self) -> Result<NcsbmParams> {
        let d = make_design_matrices(self.p, self.q, self.m1, self.m2, self.k, self.r, self.assortative)?;
        NcsbmParams::with_equal_blocks(self.n_nodes, d.b, d.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    P,
    Q,
    /// Sets `p = q + value`.
    PMinusQ,
    M1,
    M2,
    /// Sets `m1 = m2 + value`.
    M1MinusM2,
    Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// How CASC and ACASC pick `alpha` in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaChoice {
    /// Grid search minimizing the k-means objective.
    Tuned { grid_size: usize },
    /// The balancing value `lambda_1(graph) / lambda_1(X X^T)`.
    Init,
    Fixed(f64),
}

impl Default for AlphaChoice {
    fn default() -> Self {
        AlphaChoice::Tuned {
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

fn default_agreement() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub base: BaseDesign,
    pub sweep: Sweep,
    pub replicates: usize,
    /// Fraction of covariate labels matching the graph blocks.
    #[serde(default = "default_agreement")]
    pub agreement: f64,
    pub seed: u64,
    #[serde(default)]
    pub alpha: AlphaChoice,
    #[serde(default)]
    pub normalize_rows: bool,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(CascError::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(CascError::InvalidParameter("sweep has no values".into()));
        }
        for &v in &self.sweep.values {
            self.cell(v)?.0.params()?;
        }
        Ok(())
    }

    /// Base design and agreement with the sweep parameter set to `value`.
    pub fn cell(&self, value: f64) -> Result<(BaseDesign, f64)> {
        let mut base = self.base;
        let mut agreement = self.agreement;
        match self.sweep.parameter {
            SweepParameter::P => base.p = value,
            SweepParameter::Q => base.q = value,
            SweepParameter::PMinusQ => base.p = base.q + value,
            SweepParameter::M1 => base.m1 = value,
            SweepParameter::M2 => base.m2 = value,
            SweepParameter::M1MinusM2 => base.m1 = base.m2 + value,
            SweepParameter::Agreement => agreement = value,
        }
        let k = base.k as f64;
        if !(agreement <= 1.0 && agreement >= 1.0 / k - 1e-12) {
            return Err(CascError::InvalidParameter(format!(
                "agreement {agreement} outside [1/K, 1]"
            )));
        }
        Ok((base, agreement))
    }
}

/// splitmix64 finalizer; decorrelates seeds derived from consecutive indices.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_SAMPLE: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_CLUSTER: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub method: OperatorKind,
    pub replicate: usize,
    pub misclustering: Option<f64>,
    pub ari: Option<f64>,
    pub alpha_used: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sweep_value: f64,
    pub method: OperatorKind,
    /// Replicates that produced a score.
    pub n: usize,
    pub failures: usize,
    pub mean_misclustering: f64,
    pub se_misclustering: f64,
    pub mean_ari: f64,
    pub se_ari: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<CellSummary>,
}

impl SweepTable {
    pub fn cell(&self, sweep_value: f64, method: OperatorKind) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|c| c.sweep_value == sweep_value && c.method == method)
    }
}

/// Samples the instance for one (sweep value, replicate) cell.
pub fn sample_cell(design: &SimDesign, sweep_index: usize, replicate: usize) -> Result<NcsbmSample> {
    let (base, agreement) = design.cell(design.sweep.values[sweep_index])?;
    let params = base.params()?;
    let cell = (sweep_index * design.replicates + replicate) as u64;
    let mut y = params.labels();
    if agreement < 1.0 {
        y = misspecify_membership(&y, base.k, agreement, derive_seed(design.seed, STREAM_LABELS, cell))?;
    }
    sample_with_covariate_labels(&params, &y, derive_seed(design.seed, STREAM_SAMPLE, cell))
}

struct Score {
    misclustering: f64,
    ari: f64,
    alpha: Option<f64>,
}

fn run_method(
    sample: &NcsbmSample,
    method: OperatorKind,
    k: usize,
    design: &SimDesign,
    seed: u64,
) -> Result<Score> {
    let graph = &sample.graph;
    let x = &sample.covariates;
    let tau = graph.default_tau();
    let kcfg = KmeansConfig::new(k, seed);
    let solver = SolverConfig::default().with_seed(seed);
    let alpha = if method.uses_alpha() {
        Some(match design.alpha {
            AlphaChoice::Fixed(a) => a,
            AlphaChoice::Init => Spectra::compute(graph, x, tau, k, method, &solver)?.alpha_init()?,
            AlphaChoice::Tuned { grid_size } => {
                let opts = TuneOptions {
                    grid_size,
                    variant: method,
                    normalize_rows: design.normalize_rows,
                    solver,
                };
                tune_alpha_with(graph, x, tau, k, &kcfg, &opts)?.alpha_star
            }
        })
    } else {
        None
    };
    let spec = OperatorSpec::new(method, alpha.unwrap_or(0.0), tau)?;
    let options = SpectralOptions {
        normalize_rows: design.normalize_rows,
        solver,
    };
    let res = spectral_cluster_with(graph, Some(x), &spec, &kcfg, &options)?;
    Ok(Score {
        misclustering: misclustering_rate(&res.labels, &sample.labels, k)?,
        ari: ari(&res.labels, &sample.labels)?,
        alpha,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Every sweep value x replicate x method. All methods in a cell share one
/// sampled instance. Rows come back ordered by (sweep value, method, replicate).
pub fn run_design(design: &SimDesign, methods: &[OperatorKind]) -> Result<SweepTable> {
    design.validate()?;
    if methods.is_empty() {
        return Err(CascError::InvalidParameter("no methods selected".into()));
    }
    let k = design.base.k;
    let cells: Vec<(usize, usize)> = (0..design.sweep.values.len())
        .flat_map(|s| (0..design.replicates).map(move |r| (s, r)))
        .collect();

    let per_cell: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(s, rep)| {
            let value = design.sweep.values[s];
            let cell = (s * design.replicates + rep) as u64;
            let cluster_seed = derive_seed(design.seed, STREAM_CLUSTER, cell);
            let sample = sample_cell(design, s, rep);
            methods
                .iter()
                .map(|&method| {
                    let outcome = sample
                        .as_ref()
                        .map_err(Clone::clone)
                        .and_then(|smp| run_method(smp, method, k, design, cluster_seed));
                    match outcome {
                        Ok(score) => SweepRow {
                            sweep_value: value,
                            method,
                            replicate: rep,
                            misclustering: Some(score.misclustering),
                            ari: Some(score.ari),
                            alpha_used: score.alpha,
                            error: None,
                        },
                        Err(e) => SweepRow {
                            sweep_value: value,
                            method,
                            replicate: rep,
                            misclustering: None,
                            ari: None,
                            alpha_used: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len() * methods.len());
    let mut summary = Vec::new();
    for s in 0..design.sweep.values.len() {
        for (mi, &method) in methods.iter().enumerate() {
            let block: Vec<&SweepRow> = (0..design.replicates)
                .map(|rep| &per_cell[s * design.replicates + rep][mi])
                .collect();
            let mis: Vec<f64> = block.iter().filter_map(|r| r.misclustering).collect();
            let aris: Vec<f64> = block.iter().filter_map(|r| r.ari).collect();
            let (mean_m, se_m) = mean_se(&mis);
            let (mean_a, se_a) = mean_se(&aris);
            summary.push(CellSummary {
                sweep_value: design.sweep.values[s],
                method,
                n: mis.len(),
                failures: block.len() - mis.len(),
                mean_misclustering: mean_m,
                se_misclustering: se_m,
                mean_ari: mean_a,
                se_ari: se_a,
            });
            rows.extend(block.into_iter().cloned());
        }
    }
    Ok(SweepTable { rows, summary })
}
