//! Library results against independent dense computations.

mod common;

use casc::cluster::{cluster_symmetric_matrix, kmeans, within_cluster_ss};
use casc::eigen::dense_top_k;
use casc::graph::{cca_apply, operator_apply, laplacian_apply};
use casc::metrics::ari;
use casc::sbm::{population_alpha_init, population_laplacian, sample_ncsbm};
use casc::theory::{
    bernoulli_gamma, check_block_conditions, population_eigengap_closedform, misclustering_bound,
    two_block_lower_bound, theory_report,
};
use casc::tune::{alpha_init, alpha_range};
use casc::{
    misclustering_rate, top_k_left_singular, top_k_symmetric, CovariateMatrix, KmeansConfig,
    OperatorKind, OperatorSpec, SolverConfig,
};
use common::*;
use nalgebra::DMatrix;
use rand::Rng;

#[test]
fn laplacian_matches_dense() {
    let g = random_graph(10, 0.4, 1);
    let tau = g.default_tau();
    let dense = dense_laplacian(&dense_adjacency(10, &g.edges()), tau);
    let v = random_vector(10, 2);
    let got = laplacian_apply(&g, tau, &v).unwrap();
    let want = &dense * DMatrix::from_column_slice(10, 1, &v);
    for i in 0..10 {
        assert!((got[i] - want[i]).abs() < 1e-12);
    }
}

#[test]
fn operators_match_dense() {
    let n = 20;
    let g = random_graph(n, 0.3, 3);
    let x = random_covariates(n, 4, 4);
    let tau = g.default_tau();
    let alpha = 0.37;
    let l = dense_laplacian(&dense_adjacency(n, &g.edges()), tau);
    let xxt = x.values() * x.values().transpose();
    let v = random_vector(n, 5);
    let vm = DMatrix::from_column_slice(n, 1, &v);
    for kind in [OperatorKind::Rsc, OperatorKind::Acasc, OperatorKind::Casc, OperatorKind::Cov] {
        let dense = match kind {
            OperatorKind::Rsc => l.clone(),
            OperatorKind::Acasc => &l + &xxt * alpha,
            OperatorKind::Casc => &l * &l + &xxt * alpha,
            _ => xxt.clone(),
        };
        let spec = OperatorSpec::new(kind, alpha, tau).unwrap();
        let got = operator_apply(&spec, &g, Some(&x), &v).unwrap();
        let want = &dense * &vm;
        for i in 0..n {
            assert!((got[i] - want[i]).abs() < 1e-12, "{kind} row {i}");
        }
    }
}

#[test]
fn cca_matches_dense() {
    let n = 15;
    let g = random_graph(n, 0.3, 6);
    let x = random_covariates(n, 3, 7);
    let tau = g.default_tau();
    let lx = dense_laplacian(&dense_adjacency(n, &g.edges()), tau) * x.values();
    let w = random_vector(3, 8);
    let got = cca_apply(&g, tau, &x, &w, false).unwrap();
    let want = &lx * DMatrix::from_column_slice(3, 1, &w);
    for i in 0..n {
        assert!((got[i] - want[i]).abs() < 1e-12);
    }
    let v = random_vector(n, 9);
    let got_t = cca_apply(&g, tau, &x, &v, true).unwrap();
    let want_t = lx.transpose() * DMatrix::from_column_slice(n, 1, &v);
    for j in 0..3 {
        assert!((got_t[j] - want_t[j]).abs() < 1e-12);
    }
}

#[test]
fn lanczos_matches_dense_eigendecomposition() {
    let n = 200;
    let mut r = rng(10);
    let b = DMatrix::from_fn(n, 60, |_, _| r.random_range(-1.0..1.0));
    let a = &b * b.transpose();
    let cfg = SolverConfig {
        dense_threshold: 0,
        ..SolverConfig::new(5).with_seed(3)
    };
    let res = top_k_symmetric(
        |v, out| {
            let y = &a * DMatrix::from_column_slice(n, 1, v);
            out.copy_from_slice(y.as_slice());
        },
        n,
        &cfg,
    )
    .unwrap();
    assert!(res.converged);
    let (values, vectors) = dense_eigen(&a);
    for i in 0..5 {
        assert!(relative_error(res.eigenvalues[i], values[i]) < 1e-8);
    }
    let top = vectors.columns(0, 5).into_owned();
    assert!(max_principal_angle_sin(&res.eigenvectors, &top) < 1e-6);
}

#[test]
fn singular_vectors_match_dense_svd() {
    let (n, r) = (30, 5);
    let mut g = rng(11);
    let m = DMatrix::from_fn(n, r, |_, _| g.random_range(-1.0..1.0));
    let res = top_k_left_singular(
        |w, out| out.copy_from_slice((&m * DMatrix::from_column_slice(r, 1, w)).as_slice()),
        |v, out| {
            out.copy_from_slice((m.transpose() * DMatrix::from_column_slice(n, 1, v)).as_slice())
        },
        n,
        r,
        &SolverConfig::new(3),
    )
    .unwrap();
    let svd = m.clone().svd(true, false);
    let mut sv: Vec<(f64, usize)> = svd.singular_values.iter().copied().zip(0..).collect();
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    let u = svd.u.unwrap();
    let top = DMatrix::from_fn(n, 3, |i, c| u[(i, sv[c].1)]);
    for c in 0..3 {
        assert!(relative_error(res.eigenvalues[c], sv[c].0) < 1e-8);
    }
    assert!(max_principal_angle_sin(&res.eigenvectors, &top) < 1e-8);
}

/// Smallest within-cluster sum of squares over every labeling using all `k` labels.
fn exhaustive_wcss(points: &DMatrix<f64>, k: usize) -> f64 {
    let n = points.nrows();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut used = vec![false; k];
        labels.iter().for_each(|&l| used[l] = true);
        if used.iter().all(|&u| u) {
            best = best.min(within_cluster_ss(points, &labels, k));
        }
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

#[test]
fn kmeans_reaches_global_optimum_small() {
    for (seed, k) in [(12, 2), (13, 2), (14, 3), (15, 3)] {
        let mut g = rng(seed);
        let pts = DMatrix::from_fn(10, 2, |_, _| g.random_range(0.0..1.0));
        let res = kmeans(&pts, &KmeansConfig::new(k, seed)).unwrap();
        let opt = exhaustive_wcss(&pts, k);
        assert!((res.wcss - opt).abs() <= 1e-10 * opt.max(1.0), "seed {seed}: {} vs {opt}", res.wcss);
    }
}

#[test]
fn population_matrix_recovers_blocks() {
    let params = reference_params(300, true);
    let tau = params.expected_mean_degree();
    let alpha = population_alpha_init(&params, tau).unwrap();
    let l = population_laplacian(&params, alpha, tau).unwrap();
    let spec = OperatorSpec::new(OperatorKind::Casc, alpha, tau).unwrap();
    let res = cluster_symmetric_matrix(&l, spec, &KmeansConfig::new(3, 1), false).unwrap();
    assert_eq!(misclustering_rate(&res.labels, &params.labels(), 3).unwrap(), 0.0);

    // rows of the top eigenvectors coincide exactly within blocks
    let u = dense_top_k(&l, 3).unwrap().eigenvectors;
    let z = params.labels();
    for i in 0..300 {
        for j in (i + 1..300).step_by(7) {
            let dist = (u.row(i) - u.row(j)).norm();
            if z[i] == z[j] {
                assert!(dist < 1e-8);
            } else {
                assert!(dist > 1e-8);
            }
        }
    }
}

fn dense_cov_oracle(params: &casc::NcsbmParams, alpha: f64, tau: f64) -> DMatrix<f64> {
    // Z B~ Z^T assembled with the membership matrix, independent of the block shortcuts
    let n = params.n_nodes();
    let k = params.k_blocks();
    let z_labels = params.labels();
    let z = DMatrix::from_fn(n, k, |i, c| if z_labels[i] == c { 1.0 } else { 0.0 });
    let pop_a = &z * params.b() * z.transpose();
    let d: Vec<f64> = (0..n).map(|i| pop_a.row(i).sum()).collect();
    let d_b = params.b() * z.transpose() * DMatrix::from_element(n, 1, 1.0);
    let db_inv_sqrt = DMatrix::from_fn(k, k, |a, c| {
        if a == c {
            1.0 / (d_b[a] + tau).sqrt()
        } else {
            0.0
        }
    });
    let inner = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / (d[i] + tau) } else { 0.0 });
    let b_tilde = &db_inv_sqrt * params.b() * z.transpose() * inner * &z * params.b() * &db_inv_sqrt
        + params.m() * params.m().transpose() * alpha;
    b_tilde * (z.transpose() * z)
}

#[test]
fn block_conditions_at_reference_parameters() {
    let params = reference_params(300, true);
    let tau = params.expected_mean_degree();
    let alpha = population_alpha_init(&params, tau).unwrap();
    let rep = check_block_conditions(&params, alpha, tau).unwrap();
    assert!(rep.block_conditions_ok);
    let bp = dense_cov_oracle(&params, alpha, tau);
    let mut eig: Vec<f64> = bp.complex_eigenvalues().iter().map(|c| c.re).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    assert!(relative_error(rep.lambda_k_bp, eig[2]) < 1e-10);
}

#[test]
fn eigengap_closedform_matches_population_matrix() {
    let params = reference_params(300, true);
    let tau = params.expected_mean_degree();
    let alpha = population_alpha_init(&params, tau).unwrap();
    let (values, _) = dense_eigen(&population_laplacian(&params, alpha, tau).unwrap());
    let closed =
        population_eigengap_closedform(0.03, 0.015, 0.8, 0.2, 3, 300, 3, alpha, tau).unwrap();
    // the identity diagonal from the covariate variances shifts every eigenvalue equally
    assert!(relative_error(closed, values[2] - values[3]) < 1e-6);
}

#[test]
fn alpha_init_matches_dense() {
    let params = reference_params(50, true);
    let s = sample_ncsbm(&params, 21);
    let tau = s.graph.default_tau();
    let l = dense_laplacian(&dense_adjacency(50, &s.graph.edges()), tau);
    let (ll, _) = dense_eigen(&(&l * &l));
    let xv = s.covariates.values();
    let (xx, _) = dense_eigen(&(xv * xv.transpose()));
    let got = alpha_init(&s.graph, &s.covariates, tau).unwrap();
    assert!(relative_error(got, ll[0] / xx[0]) < 1e-10);
}

#[test]
fn alpha_range_matches_dense() {
    let params = reference_params(100, true);
    let s = sample_ncsbm(&params, 22);
    let tau = s.graph.default_tau();
    let l = dense_laplacian(&dense_adjacency(100, &s.graph.edges()), tau);
    let (ll, _) = dense_eigen(&(&l * &l));
    let xv = s.covariates.values();
    let (xx, _) = dense_eigen(&(xv * xv.transpose()));
    let range = alpha_range(&s.graph, &s.covariates, tau, 3).unwrap();
    let want_min = (ll[2] - ll[3]) / xx[0];
    let want_max = ll[0] / xx[2];
    assert!((range.min - want_min).abs() <= 1e-10 * want_min.abs().max(1e-3));
    assert!(relative_error(range.max, want_max) < 1e-10);
}

#[test]
fn bound_report_matches_recomputation() {
    let params = reference_params(1500, true);
    let tau = params.expected_mean_degree();
    let eps = 0.05;
    let alpha = 0.001;
    let rep = theory_report(&params, alpha, tau, eps, None).unwrap();

    // written out block by block: 500 nodes each, Bernoulli moments equal the means
    let (n, nb) = (1500.0, 500.0);
    let d = nb * (0.03 + 2.0 * 0.015);
    let mut varpi = 0.0;
    for col in 0..3 {
        let means: Vec<f64> = (0..3).map(|b| if b == col { 0.8 } else { 0.2 }).collect();
        let second: f64 = means.iter().map(|m| nb * m).sum();
        let var: f64 = means.iter().map(|m| nb * (m - m * m)).sum();
        varpi += second * var + second;
    }
    varpi *= 8.0 * alpha * alpha;
    let delta = 12.0 / (d + tau).sqrt() + varpi.sqrt();
    let bound = 192.0 * 3.0 * 500.0 * delta * delta * (8.0 * n / eps).ln()
        / (n * rep.lambda_k_bp * rep.lambda_k_bp);
    assert!(relative_error(rep.d_min, d) < 1e-14);
    assert!(relative_error(rep.varpi, varpi) < 1e-12);
    assert!(relative_error(rep.bound_value, bound) < 1e-12);
    let direct = misclustering_bound(delta, 3, 500, 1500, rep.lambda_k_bp, eps).unwrap();
    assert!(relative_error(direct.bound, bound) < 1e-12);
}

#[test]
fn lower_bound_reference_value() {
    let rep = two_block_lower_bound(0.03, 1500, 0.0, 0.05, None).unwrap();
    let ln2 = 2f64.ln();
    let inner = ln2 * 0.95 / 2.0 - ln2 / 1500.0;
    let expected = 0.03 * 0.97 / (1.0 / (inner * 2.0 / 1500.0).sqrt() + 0.97);
    assert!(relative_error(rep.delta_threshold, expected) < 1e-12);
    assert!(!rep.vacuous);
}

#[test]
fn gamma_matches_numeric_kl() {
    let d = casc::sbm::make_design_matrices(0.1, 0.05, 0.8, 0.2, 2, 3, true).unwrap();
    let g = bernoulli_gamma(&d.m).unwrap();
    let mut direct = 0.0;
    for j in 0..3 {
        let (a, b) = (d.m[(0, j)], d.m[(1, j)]);
        for (pa, pb) in [(a, b), (1.0 - a, 1.0 - b)] {
            direct += pa * pa.ln() - pa * pb.ln();
        }
    }
    assert!(relative_error(g.gamma, direct) < 1e-13);
    assert!(relative_error(g.gamma, 3.0 * 0.6 * 4f64.ln()) < 1e-13);
}

#[test]
fn misclustering_against_permutation_search() {
    let truth = [0, 0, 1, 1, 2, 2];
    let est = [0, 0, 1, 2, 2, 2];
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = perms
        .iter()
        .map(|p| truth.iter().zip(&est).filter(|(&t, &e)| p[e] != t).count())
        .min()
        .unwrap();
    assert_eq!(best, 1);
    assert_eq!(misclustering_rate(&est, &truth, 3).unwrap(), best as f64 / 6.0);
}

#[test]
fn ari_null_distribution_centered() {
    let mut g = rng(23);
    let truth: Vec<usize> = (0..1000).map(|i| i % 3).collect();
    let mean: f64 = (0..100)
        .map(|_| {
            let est: Vec<usize> = (0..1000).map(|_| g.random_range(0..3)).collect();
            ari(&est, &truth).unwrap()
        })
        .sum::<f64>()
        / 100.0;
    assert!(mean.abs() < 0.02);
}

#[test]
fn covariates_from_dense_matrix_roundtrip() {
    let x = random_covariates(12, 3, 24);
    let rows: Vec<Vec<f64>> = (0..12).map(|i| x.values().row(i).iter().copied().collect()).collect();
    assert_eq!(CovariateMatrix::from_rows(&rows).unwrap().values(), x.values());
}
