//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line each and exits nonzero if any failed.

mod common;

use std::time::{Duration, Instant};

use casc::cluster::cluster_symmetric_matrix;
use casc::experiment::{
    run_design, AlphaChoice, BaseDesign, SimDesign, Sweep, SweepParameter, SweepTable,
};
use casc::metrics::ari;
use casc::sbm::{make_design_matrices, population_alpha_init, population_laplacian, sample_ncsbm};
use casc::theory::{bernoulli_gamma, population_eigengap_closedform, misclustering_bound, two_block_lower_bound};
use casc::tune::tune_alpha;
use casc::{
    misclustering_rate, top_k_symmetric, KmeansConfig, NcsbmParams, OperatorKind, OperatorSpec,
    SolverConfig,
};
use common::*;
use nalgebra::DMatrix;
use rand::Rng;

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn population_exactness() -> Outcome {
    let params = reference_params(300, true);
    let tau = params.expected_mean_degree();
    let alpha = population_alpha_init(&params, tau).map_err(|e| e.to_string())?;
    let l = population_laplacian(&params, alpha, tau).map_err(|e| e.to_string())?;
    let spec = OperatorSpec::new(OperatorKind::Casc, alpha, tau).map_err(|e| e.to_string())?;
    let res = cluster_symmetric_matrix(&l, spec, &KmeansConfig::new(3, 0), false)
        .map_err(|e| e.to_string())?;
    let rate = misclustering_rate(&res.labels, &params.labels(), 3).map_err(|e| e.to_string())?;
    check(rate == 0.0, format!("mis-clustering {rate} at alpha_0 = {alpha:.4e}"))
}

fn eigengap_lattice() -> Outcome {
    let (n, k, r) = (120, 3, 3);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for p in [0.1, 0.2, 0.3] {
        for q in [0.02, 0.05, 0.08] {
            for m1 in [0.6, 0.75, 0.9] {
                for m2 in [0.05, 0.2, 0.35] {
                    for alpha in [0.0, 1e-3, 1e-2] {
                        let d = make_design_matrices(p, q, m1, m2, k, r, true).unwrap();
                        let params = NcsbmParams::with_equal_blocks(n, d.b, d.m).unwrap();
                        let tau = params.expected_mean_degree();
                        let l = population_laplacian(&params, alpha, tau).unwrap();
                        let (values, _) = dense_eigen(&l);
                        let dense_gap = values[k - 1] - values[k];
                        let closed =
                            population_eigengap_closedform(p, q, m1, m2, k, n, r, alpha, tau).unwrap();
                        worst = worst.max(relative_error(closed, dense_gap));
                        count += 1;
                    }
                }
            }
        }
    }
    check(worst <= 1e-6, format!("{count} lattice points, worst relative error {worst:.2e}"))
}

fn reference_design(assortative: bool, sweep: Sweep) -> SimDesign {
    SimDesign {
        base: BaseDesign::reference(assortative),
        sweep,
        replicates: 20,
        agreement: 1.0,
        seed: 2024,
        alpha: AlphaChoice::default(),
        normalize_rows: false,
    }
}

fn cell_stats(table: &SweepTable, value: f64, method: OperatorKind) -> (f64, f64) {
    let c = table.cell(value, method).expect("cell present");
    (c.mean_misclustering, c.se_misclustering)
}

fn describe(table: &SweepTable, value: f64) -> String {
    OperatorKind::ALL
        .iter()
        .filter_map(|&m| table.cell(value, m))
        .map(|c| format!("{} {:.3}+-{:.3}", c.method, c.mean_misclustering, c.se_misclustering))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `a` lies below `b` by at least two combined standard errors.
fn clearly_below(a: (f64, f64), b: (f64, f64)) -> bool {
    b.0 - a.0 >= 2.0 * (a.1 * a.1 + b.1 * b.1).sqrt()
}

fn signal_sweep(assortative: bool) -> std::result::Result<SweepTable, String> {
    let design = reference_design(
        assortative,
        Sweep {
            parameter: SweepParameter::PMinusQ,
            values: vec![0.015],
        },
    );
    let table = run_design(&design, &OperatorKind::ALL).map_err(|e| e.to_string())?;
    if let Some(bad) = table.rows.iter().find(|r| r.error.is_some()) {
        return Err(format!("{} failed: {:?}", bad.method, bad.error));
    }
    Ok(table)
}

fn assortative_ordering() -> Outcome {
    let t = signal_sweep(true)?;
    let v = 0.015;
    let acasc = cell_stats(&t, v, OperatorKind::Acasc);
    let casc = cell_stats(&t, v, OperatorKind::Casc);
    let others = [OperatorKind::Rsc, OperatorKind::Cov, OperatorKind::Cca];
    let ok = acasc.0 <= casc.0
        && others.iter().all(|&m| casc.0 <= cell_stats(&t, v, m).0)
        && clearly_below(acasc, cell_stats(&t, v, OperatorKind::Rsc));
    check(ok, describe(&t, v))
}

fn nonassortative_ordering() -> Outcome {
    let t = signal_sweep(false)?;
    let v = 0.015;
    let casc = cell_stats(&t, v, OperatorKind::Casc);
    let acasc = cell_stats(&t, v, OperatorKind::Acasc);
    let ok = OperatorKind::ALL
        .iter()
        .filter(|&&m| m != OperatorKind::Casc)
        .all(|&m| clearly_below(casc, cell_stats(&t, v, m)))
        && acasc.0 > cell_stats(&t, v, OperatorKind::Rsc).0
        && acasc.0 > cell_stats(&t, v, OperatorKind::Cov).0;
    check(ok, describe(&t, v))
}

fn misspecification_crossover() -> Outcome {
    let design = reference_design(
        true,
        Sweep {
            parameter: SweepParameter::Agreement,
            values: vec![0.6, 0.7, 0.8, 0.9, 1.0],
        },
    );
    let t = run_design(&design, &[OperatorKind::Acasc, OperatorKind::Rsc]).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for &v in &design.sweep.values {
        let a = cell_stats(&t, v, OperatorKind::Acasc).0;
        let r = cell_stats(&t, v, OperatorKind::Rsc).0;
        if v >= 0.8 - 1e-12 {
            ok &= a < r;
        }
        if v <= 0.6 + 1e-12 {
            ok &= a >= r;
        }
        parts.push(format!("{v}: acasc {a:.3} rsc {r:.3}"));
    }
    check(ok, parts.join(", "))
}

fn tuning_containment() -> Outcome {
    let params = reference_params(1500, true);
    let mut inside = 0;
    let mut minimal = 0;
    for seed in 0..10 {
        let s = sample_ncsbm(&params, 100 + seed);
        let kcfg = KmeansConfig::new(3, seed);
        let t = tune_alpha(&s.graph, &s.covariates, s.graph.default_tau(), 3, &kcfg, 20)
            .map_err(|e| e.to_string())?;
        if t.alpha_star >= t.alpha_min && t.alpha_star <= t.alpha_max {
            inside += 1;
        }
        let best = t.best().and_then(|g| g.wcss).ok_or("no minimizer")?;
        if t.grid.iter().filter_map(|g| g.wcss).all(|w| best <= w) {
            minimal += 1;
        }
    }
    check(
        inside == 10 && minimal == 10,
        format!("contained {inside}/10, grid minimum {minimal}/10"),
    )
}

fn eigensolver_equivalence() -> Outcome {
    let mut g = rng(7);
    let mut worst_value: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    for trial in 0..50 {
        let n = g.random_range(50..=500);
        let k = g.random_range(2..=10);
        let rank = g.random_range(n / 4..=n);
        let b = DMatrix::from_fn(n, rank, |_, _| g.random_range(-1.0..1.0));
        let a = &b * b.transpose();
        let cfg = SolverConfig {
            dense_threshold: 0,
            ..SolverConfig::new(k).with_seed(trial)
        };
        let res = top_k_symmetric(
            |v, out| out.copy_from_slice((&b * (b.transpose() * DMatrix::from_column_slice(n, 1, v))).as_slice()),
            n,
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        let (values, vectors) = dense_eigen(&a);
        for i in 0..k {
            worst_value = worst_value.max(relative_error(res.eigenvalues[i], values[i]));
        }
        let top = vectors.columns(0, k).into_owned();
        worst_angle = worst_angle.max(max_principal_angle_sin(&res.eigenvectors, &top).asin());
    }
    check(
        worst_value <= 1e-8 && worst_angle <= 1e-6,
        format!("worst eigenvalue error {worst_value:.2e}, worst angle {worst_angle:.2e}"),
    )
}

fn brute_force_misclustering(est: &[usize], truth: &[usize], k: usize) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let best = perms(k)
        .iter()
        .map(|p| est.iter().zip(truth).filter(|(&e, &t)| p[e] != t).count())
        .min()
        .unwrap();
    best as f64 / truth.len() as f64
}

/// Adjusted Rand index from pair counts rather than the contingency table.
fn brute_force_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += (sa && sb) as u8 as f64;
            only_a += (sa && !sb) as u8 as f64;
            only_b += (!sa && sb) as u8 as f64;
            total += 1.0;
        }
    }
    let pairs_a = both + only_a;
    let pairs_b = both + only_b;
    let expected = pairs_a * pairs_b / total;
    let denom = 0.5 * (pairs_a + pairs_b) - expected;
    if denom == 0.0 {
        1.0
    } else {
        (both - expected) / denom
    }
}

fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..k.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let l = code % k;
                    code /= k;
                    l
                })
                .collect()
        })
        .collect()
}

fn metric_oracles() -> Outcome {
    let mut compared = 0usize;
    for k in 1..=3 {
        for n in 1..=6 {
            let labelings = all_labelings(n, k);
            for a in &labelings {
                for b in &labelings {
                    let rate = misclustering_rate(a, b, k).map_err(|e| e.to_string())?;
                    if rate != brute_force_misclustering(a, b, k) {
                        return Err(format!("mis-clustering mismatch at {a:?} vs {b:?}"));
                    }
                    if n >= 2 {
                        let got = ari(a, b).map_err(|e| e.to_string())?;
                        if (got - brute_force_ari(a, b)).abs() > 1e-12 {
                            return Err(format!("ARI mismatch at {a:?} vs {b:?}"));
                        }
                    } else if ari(a, b).is_ok() {
                        return Err("ARI accepted a single node".into());
                    }
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} labeling pairs"))
}

fn bound_fidelity() -> Outcome {
    let mut g = rng(9);
    let ln2 = 2f64.ln();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let delta = g.random_range(0.01..2.0);
        let k = g.random_range(2..10usize);
        let n = g.random_range(100..5000usize);
        let p = g.random_range(n / k..=n);
        let lambda = g.random_range(0.01..1.0);
        let eps = g.random_range(0.001..0.5);
        let b3 = misclustering_bound(delta, k, p, n, lambda, eps).map_err(|e| e.to_string())?;
        let via_logs = (192f64.ln() + (k as f64).ln() + (p as f64).ln() + 2.0 * delta.ln()
            + (8.0 * n as f64 / eps).ln().ln()
            - (n as f64).ln()
            - 2.0 * lambda.ln())
        .exp();
        worst = worst.max(relative_error(b3.bound, via_logs));
        let up_delta = misclustering_bound(delta * 1.1, k, p, n, lambda, eps).unwrap().bound;
        let up_p = misclustering_bound(delta, k, p + 1, n, lambda, eps).unwrap().bound;
        let up_lambda = misclustering_bound(delta, k, p, n, lambda * 1.1, eps).unwrap().bound;
        if !(up_delta > b3.bound && up_p > b3.bound && up_lambda < b3.bound) {
            return Err("upper bound monotonicity violated".into());
        }

        let b11 = g.random_range(0.01..0.99);
        let n4 = g.random_range(8..5000usize);
        let gamma = g.random_range(0.0..0.4);
        let lb = two_block_lower_bound(b11, n4, gamma, eps, None).map_err(|e| e.to_string())?;
        let inner = 0.5 * (1.0 - eps) * ln2 - gamma - ln2 / n4 as f64;
        let second = if inner > 0.0 {
            let s = (2.0 * inner / n4 as f64).sqrt();
            b11 * (1.0 - b11) * s / (1.0 + (1.0 - b11) * s)
        } else {
            0.0
        };
        if second == 0.0 {
            if lb.delta_threshold != 0.0 || !lb.vacuous {
                return Err("vacuous lower bound not flagged".into());
            }
        } else {
            worst = worst.max(relative_error(lb.delta_threshold, second));
        }
        let more_gamma = two_block_lower_bound(b11, n4, gamma + 0.01, eps, None).unwrap();
        if more_gamma.delta_threshold > lb.delta_threshold {
            return Err("lower bound increased with the covariate divergence".into());
        }

        let r = g.random_range(1..10);
        let m = DMatrix::from_fn(2, r, |_, _| g.random_range(0.01..0.99));
        let gam = bernoulli_gamma(&m).map_err(|e| e.to_string())?.gamma;
        let cross_entropy: f64 = (0..r)
            .map(|j| {
                let (a, b) = (m[(0, j)], m[(1, j)]);
                let entropy = -(a * a.ln() + (1.0 - a) * (1.0 - a).ln());
                -(a * b.ln() + (1.0 - a) * (1.0 - b).ln()) - entropy
            })
            .sum();
        worst = worst.max((gam - cross_entropy).abs() / gam.max(1e-3));
    }
    check(worst <= 1e-12, format!("100 draws, worst discrepancy {worst:.2e}"))
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "population exactness", limit: Some(Duration::from_secs(10)), run: population_exactness },
        Criterion { id: 2, name: "eigengap closed form", limit: Some(Duration::from_secs(60)), run: eigengap_lattice },
        Criterion { id: 3, name: "assortative ordering", limit: Some(Duration::from_secs(600)), run: assortative_ordering },
        Criterion { id: 4, name: "non-assortative ordering", limit: Some(Duration::from_secs(600)), run: nonassortative_ordering },
        Criterion { id: 5, name: "misspecification crossover", limit: Some(Duration::from_secs(900)), run: misspecification_crossover },
        Criterion { id: 6, name: "tuning containment", limit: None, run: tuning_containment },
        Criterion { id: 7, name: "eigensolver equivalence", limit: Some(Duration::from_secs(120)), run: eigensolver_equivalence },
        Criterion { id: 8, name: "metric oracles", limit: Some(Duration::from_secs(30)), run: metric_oracles },
        Criterion { id: 9, name: "bound formula fidelity", limit: None, run: bound_fidelity },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.id.to_string() == *f || c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) => match c.limit {
                Some(limit) if elapsed > limit => (false, format!("{d}; over time limit {}s", limit.as_secs())),
                _ => (true, d),
            },
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {} ({:.1}s) {}",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
