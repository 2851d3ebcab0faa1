//! Closed-form theoretical quantities for the node-contextualized blockmodel:
//! the eigenvector/block-membership condition, the concentration constants,
//! the mis-clustering upper bound, the equal-block population eigengap and
//! the two-block lower bound.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CascError, Result};
use crate::sbm::NcsbmParams;

/// Constant of the mis-clustering bound, `3 * 2^6`.
pub const MISCLUSTERING_CONSTANT: f64 = 192.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConditionReport {
    /// Per-block sums of covariate variances.
    pub variance_sums: Vec<f64>,
    /// Largest deviation of a block's variance sum from their mean.
    pub kappa: f64,
    /// K-th eigenvalue of `B~ P~`.
    pub lambda_k_bp: f64,
    /// `lambda_k_bp > 2 alpha kappa`.
    pub block_conditions_ok: bool,
}

/// Symmetric `P~^{1/2} B~ P~^{1/2}`, which shares its spectrum with `B~ P~`.
fn reduced_block_matrix(params: &NcsbmParams, alpha: f64, tau: f64) -> Result<DMatrix<f64>> {
    let k = params.k_blocks();
    let b = params.b();
    let sizes = params.block_sizes();
    let deg = params.block_degrees();
    if deg.iter().any(|d| d + tau <= 0.0) {
        return Err(CascError::Degenerate(
            "zero regularized population degree".into(),
        ));
    }
    // D_B = diag(B Z^T 1 + tau) coincides with the node degrees plus tau per block,
    // and Z^T (D + tau)^{-1} Z = diag(n_c / (d_c + tau)).
    let graph_part = DMatrix::from_fn(k, k, |a, c| {
        let inner: f64 = (0..k)
            .map(|l| b[(a, l)] * b[(l, c)] * sizes[l] as f64 / (deg[l] + tau))
            .sum();
        inner / ((deg[a] + tau) * (deg[c] + tau)).sqrt()
    });
    let m = params.m();
    let b_tilde = graph_part + (m * m.transpose()) * alpha;
    let sqrt_p = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        k,
        sizes.iter().map(|&s| (s as f64).sqrt()),
    ));
    Ok(&sqrt_p * b_tilde * &sqrt_p)
}

fn kth_largest(matrix: DMatrix<f64>, k: usize) -> f64 {
    let mut eig: Vec<f64> = SymmetricEigen::new(matrix).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[k - 1]
}

/// `lambda_K(B~ P~)`, the population eigengap in block form.
pub fn population_lambda_k(params: &NcsbmParams, alpha: f64, tau: f64) -> Result<f64> {
    Ok(kth_largest(
        reduced_block_matrix(params, alpha, tau)?,
        params.k_blocks(),
    ))
}

/// Checks whether the top-K population eigenvectors identify the blocks.
pub fn check_block_conditions(params: &NcsbmParams, alpha: f64, tau: f64) -> Result<BlockConditionReport> {
    let variance_sums = params.block_variance_sums();
    let mean = variance_sums.iter().sum::<f64>() / variance_sums.len() as f64;
    let kappa = variance_sums
        .iter()
        .map(|c| (c - mean).abs())
        .fold(0.0, f64::max);
    let lambda_k_bp = population_lambda_k(params, alpha, tau)?;
    Ok(BlockConditionReport {
        variance_sums,
        kappa,
        lambda_k_bp,
        block_conditions_ok: lambda_k_bp > 2.0 * alpha * kappa,
    })
}

/// Raw moments `E(X_ik^p)` of a covariate, one row per block.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMoments {
    pub first: DMatrix<f64>,
    pub second: DMatrix<f64>,
    pub fourth: DMatrix<f64>,
}

impl CovariateMoments {
    /// A Bernoulli variable has every raw moment equal to its mean.
    pub fn bernoulli(m: &DMatrix<f64>) -> Self {
        Self {
            first: m.clone(),
            second: m.clone(),
            fourth: m.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// Smallest expected degree.
    pub d_min: f64,
    pub varpi: f64,
    /// `3 alpha N J^2`.
    pub s_bound: f64,
    /// `12 (d + tau)^{-1/2} + varpi^{1/2}`.
    pub delta: f64,
    /// `3 log(8N / epsilon)`.
    pub log_term: f64,
    /// `d + tau > 3 log(8N/epsilon)`.
    pub condition_ii: bool,
    /// `varpi / S^2 > 3 log(8N/epsilon)`; false when `S = 0`.
    pub condition_iii: bool,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(CascError::InvalidParameter(format!(
            "failure probability {epsilon} outside (0, 1]"
        )))
    }
}

/// Concentration constants for Bernoulli covariates with bound `J = 1`.
pub fn concentration_quantities(
    params: &NcsbmParams,
    alpha: f64,
    tau: f64,
    epsilon: f64,
) -> Result<ConcentrationReport> {
    concentration_with_moments(
        params,
        &CovariateMoments::bernoulli(params.m()),
        1.0,
        alpha,
        tau,
        epsilon,
    )
}

/// Concentration constants for explicit per-block covariate moments.
///
/// `varpi = 8 alpha^2 sum_k sum_i { E(X_ik^2) sum_l Var(X_lk) + E(X_ik^4) }`.
pub fn concentration_with_moments(
    params: &NcsbmParams,
    moments: &CovariateMoments,
    bound_j: f64,
    alpha: f64,
    tau: f64,
    epsilon: f64,
) -> Result<ConcentrationReport> {
    check_epsilon(epsilon)?;
    let k = params.k_blocks();
    let r = params.n_covariates();
    if moments.first.shape() != (k, r)
        || moments.second.shape() != (k, r)
        || moments.fourth.shape() != (k, r)
    {
        return Err(CascError::InvalidParameter(
            "moment matrices must be K x R".into(),
        ));
    }
    let n = params.n_nodes() as f64;
    let sizes: Vec<f64> = params.block_sizes().iter().map(|&s| s as f64).collect();

    let mut sum = 0.0;
    for c in 0..r {
        let second_total: f64 = (0..k).map(|b| sizes[b] * moments.second[(b, c)]).sum();
        let var_total: f64 = (0..k)
            .map(|b| sizes[b] * (moments.second[(b, c)] - moments.first[(b, c)].powi(2)))
            .sum();
        let fourth_total: f64 = (0..k).map(|b| sizes[b] * moments.fourth[(b, c)]).sum();
        sum += second_total * var_total + fourth_total;
    }
    let varpi = 8.0 * alpha * alpha * sum;

    let d_min = params.block_degrees().into_iter().fold(f64::INFINITY, f64::min);
    let s_bound = 3.0 * alpha * n * bound_j * bound_j;
    let delta = 12.0 / (d_min + tau).sqrt() + varpi.sqrt();
    let log_term = 3.0 * (8.0 * n / epsilon).ln();
    Ok(ConcentrationReport {
        d_min,
        varpi,
        s_bound,
        delta,
        log_term,
        condition_ii: d_min + tau > log_term,
        condition_iii: s_bound > 0.0 && varpi / (s_bound * s_bound) > log_term,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisclusteringBound {
    pub bound: f64,
    /// `delta (3 log(8N/epsilon))^{1/2} <= lambda_K / 2`.
    pub condition_iv: bool,
}

/// `c0 K P delta^2 log(8N/epsilon) / (N lambda_K^2)` with `c0 = 192`.
pub fn misclustering_bound(
    delta: f64,
    k: usize,
    p_max: usize,
    n: usize,
    lambda_k: f64,
    epsilon: f64,
) -> Result<MisclusteringBound> {
    check_epsilon(epsilon)?;
    if !(lambda_k > 0.0) {
        return Err(CascError::InvalidParameter(format!(
            "lambda_K must be positive, got {lambda_k}"
        )));
    }
    if n == 0 || !(delta >= 0.0) {
        return Err(CascError::InvalidParameter(
            "N must be positive and delta nonnegative".into(),
        ));
    }
    let log = (8.0 * n as f64 / epsilon).ln();
    let bound =
        MISCLUSTERING_CONSTANT * k as f64 * p_max as f64 * delta * delta * log / (n as f64 * lambda_k * lambda_k);
    Ok(MisclusteringBound {
        bound,
        condition_iv: delta * (3.0 * log).sqrt() <= lambda_k / 2.0,
    })
}

/// Population eigengap for equal blocks, two-level `B` and `M`, `R` a multiple of `K`.
/// `p` and `m1` are the within-block values, `q` and `m2` the between-block ones:
/// `{(p - q) / (p + (K - 1) q + K tau / N)}^2 + alpha N R (m1 - m2)^2 / K^2`.
#[allow(clippy::too_many_arguments)]
pub fn population_eigengap_closedform(
    p: f64,
    q: f64,
    m1: f64,
    m2: f64,
    k: usize,
    n: usize,
    r: usize,
    alpha: f64,
    tau: f64,
) -> Result<f64> {
    if k == 0 || n == 0 {
        return Err(CascError::InvalidParameter("K and N must be positive".into()));
    }
    let (kf, nf) = (k as f64, n as f64);
    let denom = p + (kf - 1.0) * q + kf * tau / nf;
    if denom == 0.0 {
        return Err(CascError::Degenerate("zero denominator in eigengap".into()));
    }
    Ok(((p - q) / denom).powi(2) + alpha * nf * r as f64 * (m1 - m2).powi(2) / (kf * kf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    /// Summed covariate KL divergence.
    pub gamma: f64,
    /// Smallest `B11 - B12` compatible with recovery; zero when vacuous.
    pub delta_threshold: f64,
    /// The bracketed term was nonpositive, so no requirement on the gap remains.
    pub vacuous: bool,
    /// Gap below which the graph alone is insufficient.
    pub graph_threshold: f64,
    pub graph_insufficient: Option<bool>,
    /// `(1/2 - epsilon/2 - 1/N) log 2`.
    pub gamma_threshold: f64,
    pub covariates_insufficient: bool,
}

/// Two-block lower bound on the edge-probability gap needed for recovery.
///
/// `gap` is `B11 - B12` when known; it only feeds the graph-insufficiency flag.
pub fn two_block_lower_bound(
    b11: f64,
    n: usize,
    gamma: f64,
    epsilon: f64,
    gap: Option<f64>,
) -> Result<LowerBoundReport> {
    if !(b11 > 0.0 && b11 < 1.0) {
        return Err(CascError::InvalidParameter(format!(
            "B11 = {b11} outside (0, 1)"
        )));
    }
    if n < 8 {
        return Err(CascError::InvalidParameter(format!(
            "the lower bound needs N >= 8, got {n}"
        )));
    }
    check_epsilon(epsilon)?;
    if !(gamma >= 0.0) {
        return Err(CascError::InvalidParameter(format!(
            "KL divergence must be nonnegative, got {gamma}"
        )));
    }
    let nf = n as f64;
    let inner = 0.5 * LN_2 * (1.0 - epsilon) - gamma - LN_2 / nf;
    let (delta_threshold, vacuous) = if inner > 0.0 {
        let denom = (2.0 / nf * inner).powf(-0.5) + (1.0 - b11);
        (b11 * (1.0 - b11) / denom, false)
    } else {
        (0.0, true)
    };
    let graph_core = (1.0 - epsilon - 2.0 / nf) * LN_2;
    let graph_threshold = if graph_core > 0.0 {
        b11 * (1.0 - b11) / nf.sqrt() / (graph_core.powf(-0.5) + (1.0 - b11))
    } else {
        0.0
    };
    let gamma_threshold = (0.5 - 0.5 * epsilon - 1.0 / nf) * LN_2;
    Ok(LowerBoundReport {
        gamma,
        delta_threshold,
        vacuous,
        graph_threshold,
        graph_insufficient: gap.map(|g| g < graph_threshold),
        gamma_threshold,
        covariates_insufficient: gamma < gamma_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub gamma: f64,
    /// Some term was infinite (a mean of exactly 0 or 1 against a different mean).
    pub infinite: bool,
}

fn bernoulli_kl(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| {
        if x == 0.0 {
            0.0
        } else if y == 0.0 {
            f64::INFINITY
        } else {
            x * (x / y).ln()
        }
    };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

/// `sum_j KL(Bern(M[0, j]) || Bern(M[1, j]))` for a two-block mean matrix.
pub fn bernoulli_gamma(m: &DMatrix<f64>) -> Result<GammaReport> {
    if m.nrows() != 2 {
        return Err(CascError::InvalidParameter(format!(
            "the covariate divergence is defined for two blocks, got {}",
            m.nrows()
        )));
    }
    if let Some(v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CascError::InvalidParameter(format!(
            "Bernoulli mean {v} outside [0, 1]"
        )));
    }
    let gamma: f64 = (0..m.ncols()).map(|j| bernoulli_kl(m[(0, j)], m[(1, j)])).sum();
    Ok(GammaReport {
        gamma,
        infinite: gamma.is_infinite(),
    })
}

/// Everything the `bounds` report needs for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub alpha: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub lambda_k_bp: f64,
    pub block_conditions_ok: bool,
    pub d_min: f64,
    pub varpi: f64,
    pub s_bound: f64,
    pub delta: f64,
    pub lambda_k: f64,
    /// `population` or `sample`.
    pub lambda_source: String,
    pub p_max: usize,
    pub bound_value: f64,
    pub condition_ii: bool,
    pub condition_iii: bool,
    pub condition_iv: bool,
}

/// Assembles the upper-bound report. `sample_lambda_k` overrides the
/// population `lambda_K(B~ P~)` when given.
pub fn theory_report(
    params: &NcsbmParams,
    alpha: f64,
    tau: f64,
    epsilon: f64,
    sample_lambda_k: Option<f64>,
) -> Result<TheoryReport> {
    let conditions = check_block_conditions(params, alpha, tau)?;
    let conc = concentration_quantities(params, alpha, tau, epsilon)?;
    let (lambda_k, lambda_source) = match sample_lambda_k {
        Some(l) => (l, "sample"),
        None => (conditions.lambda_k_bp, "population"),
    };
    let p_max = params.block_sizes().iter().copied().max().unwrap_or(0);
    let bound = misclustering_bound(
        conc.delta,
        params.k_blocks(),
        p_max,
        params.n_nodes(),
        lambda_k,
        epsilon,
    )?;
    Ok(TheoryReport {
        alpha,
        tau,
        epsilon,
        kappa: conditions.kappa,
        lambda_k_bp: conditions.lambda_k_bp,
        block_conditions_ok: conditions.block_conditions_ok,
        d_min: conc.d_min,
        varpi: conc.varpi,
        s_bound: conc.s_bound,
        delta: conc.delta,
        lambda_k,
        lambda_source: lambda_source.into(),
        p_max,
        bound_value: bound.bound,
        condition_ii: conc.condition_ii,
        condition_iii: conc.condition_iii,
        condition_iv: bound.condition_iv,
    })
}
