//! Partition agreement: permutation-minimized mis-clustering rate and the
//! adjusted Rand index.

use crate::error::{CascError, Result};

/// Largest `K` solved by enumerating permutations; above it the Hungarian method is used.
pub const EXHAUSTIVE_MAX_K: usize = 8;

/// Two labelings of the same node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPair {
    pub labels_a: Vec<usize>,
    pub labels_b: Vec<usize>,
    pub k_a: usize,
    pub k_b: usize,
}

impl PartitionPair {
    pub fn new(labels_a: &[usize], labels_b: &[usize]) -> Result<Self> {
        if labels_a.len() != labels_b.len() {
            return Err(CascError::DimensionMismatch {
                expected: labels_a.len(),
                got: labels_b.len(),
            });
        }
        let count = |l: &[usize]| l.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            k_a: count(labels_a),
            k_b: count(labels_b),
            labels_a: labels_a.to_vec(),
            labels_b: labels_b.to_vec(),
        })
    }

    /// `table[a][b]` counts nodes labelled `a` in the first and `b` in the second partition.
    pub fn contingency(&self) -> Vec<Vec<u64>> {
        let mut table = vec![vec![0u64; self.k_b]; self.k_a];
        for (&a, &b) in self.labels_a.iter().zip(&self.labels_b) {
            table[a][b] += 1;
        }
        table
    }
}

/// Fraction of nodes whose estimated label disagrees with the truth under the
/// best relabeling of the estimate.
pub fn misclustering_rate(estimated: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(CascError::DimensionMismatch {
            expected: truth.len(),
            got: estimated.len(),
        });
    }
    if let Some(&bad) = estimated.iter().chain(truth).find(|&&l| l >= k) {
        return Err(CascError::InvalidParameter(format!(
            "label {bad} outside [0, {k})"
        )));
    }
    let n = truth.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut confusion = vec![vec![0i64; k]; k];
    for (&e, &t) in estimated.iter().zip(truth) {
        confusion[e][t] += 1;
    }
    let matched = if k <= EXHAUSTIVE_MAX_K {
        best_permutation_exhaustive(&confusion)
    } else {
        let assignment = hungarian_max(&confusion);
        assignment
            .iter()
            .enumerate()
            .map(|(e, &t)| confusion[e][t])
            .sum()
    };
    Ok((n as i64 - matched) as f64 / n as f64)
}

fn best_permutation_exhaustive(confusion: &[Vec<i64>]) -> i64 {
    fn recurse(row: usize, used: &mut [bool], acc: i64, confusion: &[Vec<i64>], best: &mut i64) {
        let k = confusion.len();
        if row == k {
            *best = (*best).max(acc);
            return;
        }
        for col in 0..k {
            if !used[col] {
                used[col] = true;
                recurse(row + 1, used, acc + confusion[row][col], confusion, best);
                used[col] = false;
            }
        }
    }
    let mut best = i64::MIN;
    recurse(0, &mut vec![false; confusion.len()], 0, confusion, &mut best);
    best
}

/// Maximum-weight perfect matching on a square integer matrix
/// (Hungarian method with potentials, `O(k^3)`). Returns the column assigned to each row.
pub fn hungarian_max(weights: &[Vec<i64>]) -> Vec<usize> {
    let k = weights.len();
    let max_w = weights.iter().flatten().copied().max().unwrap_or(0);
    // minimize cost = max_w - weight; 1-based arrays with a sentinel column 0
    let cost = |i: usize, j: usize| max_w - weights[i - 1][j - 1];
    let mut u = vec![0i64; k + 1];
    let mut v = vec![0i64; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; k];
    for j in 1..=k {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn choose2(n: u64) -> f64 {
    (n as f64) * (n.saturating_sub(1) as f64) / 2.0
}

/// Hubert-Arabie adjusted Rand index.
pub fn adjusted_rand_index(pair: &PartitionPair) -> Result<f64> {
    let n = pair.labels_a.len() as u64;
    if n < 2 {
        return Err(CascError::InvalidParameter(
            "adjusted Rand index needs at least two nodes".into(),
        ));
    }
    let table = pair.contingency();
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..pair.k_b)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let expected = rows * cols / choose2(n);
    let max_index = 0.5 * (rows + cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        // only reachable when both partitions are trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Convenience wrapper over [`adjusted_rand_index`].
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    adjusted_rand_index(&PartitionPair::new(labels_a, labels_b)?)
}
