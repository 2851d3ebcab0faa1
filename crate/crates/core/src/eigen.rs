//! Top-k eigenpairs of symmetric matrix-free operators.
//!
//! Small problems are materialized and solved densely. Larger ones use a
//! thick-restart Lanczos iteration with full (two-pass) reorthogonalization:
//! the projected matrix `T = V^T A V` is accumulated column by column, its
//! eigenpairs give the Ritz approximations, and each restart keeps the leading
//! Ritz vectors plus the normalized residual direction.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CascError, Result};

/// Gap below which eigenvalues at positions `k` and `k + 1` count as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of eigenpairs.
    pub k: usize,
    /// Residual tolerance, relative to `max(1, |lambda|)`.
    pub tol: f64,
    /// Maximum number of restart cycles.
    pub max_iterations: usize,
    /// Krylov subspace dimension per cycle; 0 picks one from `k`.
    pub block_size: usize,
    pub seed: u64,
    /// Problems of at most this dimension are solved densely.
    pub dense_threshold: usize,
}

impl SolverConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 1,
            tol: 1e-10,
            max_iterations: 500,
            block_size: 0,
            seed: 0,
            dense_threshold: 600,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `n x k`, unit-norm columns.
    pub eigenvectors: DMatrix<f64>,
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    pub matvecs: usize,
    pub converged: bool,
    pub method: SolveMethod,
    /// Estimate of the `(k + 1)`-th eigenvalue when `k < n`.
    pub next_eigenvalue: Option<f64>,
    /// The `k`-th and `(k + 1)`-th eigenvalues are within [`TIE_TOLERANCE`].
    pub tie_at_k: bool,
}

/// Serializable summary of an [`EigenResult`] without the vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenDiagnostics {
    pub eigenvalues: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    pub matvecs: usize,
    pub converged: bool,
    pub method: SolveMethod,
    pub next_eigenvalue: Option<f64>,
    pub tie_at_k: bool,
}

impl EigenResult {
    pub fn diagnostics(&self) -> EigenDiagnostics {
        EigenDiagnostics {
            eigenvalues: self.eigenvalues.clone(),
            residual_norms: self.residual_norms.clone(),
            iterations: self.iterations,
            matvecs: self.matvecs,
            converged: self.converged,
            method: self.method,
            next_eigenvalue: self.next_eigenvalue,
            tie_at_k: self.tie_at_k,
        }
    }
}

fn validate(k: usize, n: usize, config: &SolverConfig) -> Result<()> {
    if k == 0 || k > n {
        return Err(CascError::InvalidParameter(format!(
            "requested {k} eigenpairs of an operator of dimension {n}"
        )));
    }
    if !(config.tol > 0.0) {
        return Err(CascError::InvalidParameter(format!(
            "solver tolerance must be positive, got {}",
            config.tol
        )));
    }
    Ok(())
}

/// The `config.k` algebraically largest eigenpairs of the symmetric operator `apply`.
pub fn top_k_symmetric<F>(apply: F, n: usize, config: &SolverConfig) -> Result<EigenResult>
where
    F: Fn(&[f64], &mut [f64]),
{
    validate(config.k, n, config)?;
    if cfg!(debug_assertions) {
        check_symmetry(&apply, n, config.seed);
    }
    if n <= config.dense_threshold {
        let mut a = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            apply(&e, &mut col);
            a.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        let sym = (&a + a.transpose()) * 0.5;
        let mut res = dense_top_k(&sym, config.k)?;
        res.matvecs = n;
        Ok(res)
    } else {
        Ok(Lanczos::new(&apply, n, config).run())
    }
}

/// Top-k eigenpairs of a dense symmetric matrix (only the lower triangle is read).
pub fn dense_top_k(matrix: &DMatrix<f64>, k: usize) -> Result<EigenResult> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(CascError::DimensionMismatch {
            expected: n,
            got: matrix.ncols(),
        });
    }
    validate(k, n, &SolverConfig::default())?;
    let eig = SymmetricEigen::new(matrix.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, k);
    for (c, &i) in order[..k].iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    normalize_signs(&mut vectors);
    let residual_norms = (0..k)
        .map(|c| {
            let u = vectors.column(c);
            (matrix * u - u * eigenvalues[c]).norm()
        })
        .collect();
    let next_eigenvalue = order.get(k).map(|&i| eig.eigenvalues[i]);
    Ok(EigenResult {
        tie_at_k: next_eigenvalue.is_some_and(|l| (eigenvalues[k - 1] - l).abs() <= TIE_TOLERANCE),
        eigenvalues,
        eigenvectors: vectors,
        residual_norms,
        iterations: 1,
        matvecs: 0,
        converged: true,
        method: SolveMethod::Dense,
        next_eigenvalue,
    })
}

/// Top-k singular values and left singular vectors of the `n x r` operator
/// given by `forward` (length `r` to length `n`) and `transposed`.
///
/// Solved through the symmetric operator `v -> forward(transposed(v))`, whose
/// eigenvalues are the squared singular values.
pub fn top_k_left_singular<F, G>(
    forward: F,
    transposed: G,
    n: usize,
    r: usize,
    config: &SolverConfig,
) -> Result<EigenResult>
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
{
    if config.k > r {
        return Err(CascError::InvalidParameter(format!(
            "requested {} singular vectors of an operator with {r} columns",
            config.k
        )));
    }
    let normal = |v: &[f64], out: &mut [f64]| {
        let mut tmp = vec![0.0; r];
        transposed(v, &mut tmp);
        forward(&tmp, out);
    };
    let mut res = top_k_symmetric(normal, n, config)?;
    res.eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0).sqrt());
    res.next_eigenvalue = res.next_eigenvalue.map(|l| l.max(0.0).sqrt());
    Ok(res)
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn normalize_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best + 1e-12 {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

fn check_symmetry<F: Fn(&[f64], &mut [f64])>(apply: &F, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut av = vec![0.0; n];
    let mut aw = vec![0.0; n];
    apply(&v, &mut av);
    apply(&w, &mut aw);
    let lhs = dot(&w, &av);
    let rhs = dot(&v, &aw);
    let scale = norm(&av).max(norm(&aw)) * norm(&v).max(norm(&w));
    if (lhs - rhs).abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        log::warn!("operator passed to the symmetric solver looks asymmetric: {lhs} vs {rhs}");
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Two passes of classical Gram-Schmidt; returns the accumulated coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, b) in coeffs.iter_mut().zip(basis) {
            let proj = dot(b, w);
            *c += proj;
            axpy(-proj, b, w);
        }
    }
    coeffs
}

struct Lanczos<'a, F> {
    apply: &'a F,
    n: usize,
    k: usize,
    nev: usize,
    basis_size: usize,
    tol: f64,
    max_iterations: usize,
    rng: ChaCha8Rng,
    matvecs: usize,
}

impl<'a, F: Fn(&[f64], &mut [f64])> Lanczos<'a, F> {
    fn new(apply: &'a F, n: usize, config: &SolverConfig) -> Self {
        let k = config.k;
        let nev = (k + 1).min(n);
        let basis_size = if config.block_size > 0 {
            config.block_size.max(nev + 2)
        } else {
            (2 * nev + 20).max(40)
        }
        .min(n);
        Self {
            apply,
            n,
            k,
            nev,
            basis_size,
            tol: config.tol,
            max_iterations: config.max_iterations.max(1),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            matvecs: 0,
        }
    }

    fn random_unit(&mut self, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
        for _ in 0..8 {
            let mut v: Vec<f64> = (0..self.n).map(|_| self.rng.random_range(-1.0..1.0)).collect();
            let before = norm(&v);
            orthogonalize(basis, &mut v);
            let after = norm(&v);
            if after > 1e-8 * before {
                v.iter_mut().for_each(|x| *x /= after);
                return Some(v);
            }
        }
        None
    }

    fn matvec(&mut self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        (self.apply)(v, &mut out);
        self.matvecs += 1;
        out
    }

    fn run(mut self) -> EigenResult {
        let m = self.basis_size;
        let start = self
            .random_unit(&[])
            .expect("random start vector in a nonempty space");
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(start);
        let mut t = DMatrix::<f64>::zeros(m, m);
        let mut processed = 0usize;
        let mut iterations = 0usize;

        loop {
            iterations += 1;
            // expansion
            let mut residual: Option<Vec<f64>> = None;
            let mut exhausted = false;
            while processed < m {
                let j = processed;
                let mut w = self.matvec(&basis[j]);
                let scale = norm(&w);
                let h = orthogonalize(&basis[..=j], &mut w);
                for (i, &hij) in h.iter().enumerate() {
                    t[(i, j)] = hij;
                    t[(j, i)] = hij;
                }
                processed += 1;
                let beta = norm(&w);
                let broke_down = beta <= 1e-12 * scale.max(h.iter().fold(0.0, |a, b| a.max(b.abs())));
                if processed == m {
                    residual = if broke_down { None } else { Some(w) };
                    break;
                }
                if broke_down {
                    match self.random_unit(&basis) {
                        Some(v) => basis.push(v),
                        None => {
                            exhausted = true;
                            break;
                        }
                    }
                } else {
                    w.iter_mut().for_each(|x| *x /= beta);
                    basis.push(w);
                }
            }

            let dim = processed;
            let (theta, s) = sorted_eigen(&t.view((0, 0), (dim, dim)).into_owned());
            let beta = residual.as_ref().map_or(0.0, |r| norm(r));
            let est: Vec<f64> = (0..dim).map(|i| beta * s[(dim - 1, i)].abs()).collect();
            let want = self.k.min(dim);
            let done = (0..want).all(|i| est[i] <= self.tol * theta[i].abs().max(1.0));

            if done || exhausted || dim >= self.n || iterations >= self.max_iterations {
                return self.finish(&basis[..dim], &theta, &s, iterations);
            }

            // thick restart: keep the leading Ritz vectors, continue from the residual
            let keep = (self.nev + (dim - self.nev) / 2).min(dim - 1).max(self.nev.min(dim - 1));
            let mut kept: Vec<Vec<f64>> = (0..keep)
                .map(|c| ritz_vector(&basis[..dim], &s, c))
                .collect();
            t.fill(0.0);
            for (i, &th) in theta.iter().take(keep).enumerate() {
                t[(i, i)] = th;
            }
            let next = match residual {
                Some(mut r) => {
                    orthogonalize(&kept, &mut r);
                    let rn = norm(&r);
                    if rn > 1e-14 {
                        r.iter_mut().for_each(|x| *x /= rn);
                        Some(r)
                    } else {
                        self.random_unit(&kept)
                    }
                }
                None => self.random_unit(&kept),
            };
            match next {
                Some(v) => kept.push(v),
                None => return self.finish(&basis[..dim], &theta, &s, iterations),
            }
            basis = kept;
            processed = keep;
        }
    }

    fn finish(
        &mut self,
        basis: &[Vec<f64>],
        theta: &[f64],
        s: &DMatrix<f64>,
        iterations: usize,
    ) -> EigenResult {
        let k = self.k.min(theta.len());
        let mut vectors = DMatrix::zeros(self.n, k);
        for c in 0..k {
            let mut y = ritz_vector(basis, s, c);
            let yn = norm(&y);
            y.iter_mut().for_each(|x| *x /= yn);
            vectors.column_mut(c).copy_from_slice(&y);
        }
        normalize_signs(&mut vectors);
        let eigenvalues: Vec<f64> = theta[..k].to_vec();
        let mut residual_norms = Vec::with_capacity(k);
        for c in 0..k {
            let u: Vec<f64> = vectors.column(c).iter().copied().collect();
            let mut au = self.matvec(&u);
            axpy(-eigenvalues[c], &u, &mut au);
            residual_norms.push(norm(&au));
        }
        let converged = k == self.k
            && residual_norms
                .iter()
                .zip(&eigenvalues)
                .all(|(r, l)| *r <= self.tol * l.abs().max(1.0));
        if !converged {
            log::warn!(
                "Lanczos stopped after {iterations} cycles without reaching tolerance {}",
                self.tol
            );
        }
        let next_eigenvalue = theta.get(self.k).copied();
        EigenResult {
            tie_at_k: next_eigenvalue
                .is_some_and(|l| (eigenvalues[k - 1] - l).abs() <= TIE_TOLERANCE),
            eigenvalues,
            eigenvectors: vectors,
            residual_norms,
            iterations,
            matvecs: self.matvecs,
            converged,
            method: SolveMethod::Lanczos,
            next_eigenvalue,
        }
    }
}

fn ritz_vector(basis: &[Vec<f64>], s: &DMatrix<f64>, c: usize) -> Vec<f64> {
    let n = basis[0].len();
    let mut y = vec![0.0; n];
    for (i, b) in basis.iter().enumerate() {
        axpy(s[(i, c)], b, &mut y);
    }
    y
}

/// Eigenpairs of a small symmetric matrix sorted by descending eigenvalue.
fn sorted_eigen(t: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (t + t.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let dim = t.nrows();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut s = DMatrix::zeros(dim, dim);
    for (c, &i) in order.iter().enumerate() {
        s.set_column(c, &eig.eigenvectors.column(i));
    }
    (theta, s)
}
