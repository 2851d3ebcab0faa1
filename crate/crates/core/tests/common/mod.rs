#![allow(dead_code)]

use casc::sbm::make_design_matrices;
use casc::{CovariateMatrix, NcsbmParams, SparseGraph};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi graph with uniform weights in `[0.5, 2)`.
pub fn random_graph(n: usize, density: f64, seed: u64) -> SparseGraph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < density {
                edges.push((i, j, r.random_range(0.5..2.0)));
            }
        }
    }
    SparseGraph::from_edges(n, &edges).unwrap()
}

pub fn random_covariates(n: usize, r: usize, seed: u64) -> CovariateMatrix {
    let mut g = rng(seed);
    CovariateMatrix::new(DMatrix::from_fn(n, r, |_, _| g.random_range(-1.0..1.0))).unwrap()
}

pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut g = rng(seed);
    (0..n).map(|_| g.random_range(-1.0..1.0)).collect()
}

/// Dense adjacency assembled straight from an edge list.
pub fn dense_adjacency(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for &(i, j, w) in edges {
        a[(i, j)] += w;
        if i != j {
            a[(j, i)] += w;
        }
    }
    a
}

/// `(D + tau)^{-1/2} A (D + tau)^{-1/2}` from the dense adjacency.
pub fn dense_laplacian(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum() + tau).collect();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt())
}

/// All eigenvalues, descending, and matching eigenvectors as columns.
pub fn dense_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal bases.
pub fn max_principal_angle_sin(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let proj = u.transpose() * v;
    let sv = proj.singular_values();
    let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    (1.0 - smallest * smallest).max(0.0).sqrt()
}

pub fn reference_params(n: usize, assortative: bool) -> NcsbmParams {
    let d = make_design_matrices(0.03, 0.015, 0.8, 0.2, 3, 3, assortative).unwrap();
    NcsbmParams::with_equal_blocks(n, d.b, d.m).unwrap()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
