//! Similarity between estimated and true factor columns.
//!
//! The score is the mean absolute cosine over the best injective pairing
//! of the smaller column set into the larger one. The pairing is an exact
//! maximum-weight assignment: enumeration when both sides have at most
//! [`BRUTE_FORCE_LIMIT`] columns, the Hungarian method otherwise.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::column_norms;
use crate::scalar::Scalar;

pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreResult<T> {
    pub score: T,
    /// `(true column, estimated column)` pairs.
    pub matching: Vec<(usize, usize)>,
    /// `|cos|` for each matched pair, in `matching` order.
    pub cosines: Vec<T>,
}

pub fn similarity_score<T: Scalar>(truth: ArrayView2<'_, T>, estimate: ArrayView2<'_, T>) -> Result<ScoreResult<T>> {
    if truth.nrows() != estimate.nrows() {
        return Err(Error::arg(format!(
            "true factors have {} rows, estimate has {}",
            truth.nrows(),
            estimate.nrows()
        )));
    }
    if truth.ncols() == 0 || estimate.ncols() == 0 {
        return Err(Error::arg("score needs at least one column on each side"));
    }
    let unit = |m: ArrayView2<'_, T>, what: &str| -> Result<Array2<T>> {
        let norms = column_norms(m);
        if let Some(j) = norms.iter().position(|x| !(*x > T::zero()) || !x.is_finite()) {
            return Err(Error::arg(format!("{what} column {j} has zero or non-finite norm")));
        }
        Ok(&m / &norms)
    };
    let t = unit(truth, "true")?;
    let e = unit(estimate, "estimated")?;
    let cos = t.t().dot(&e).mapv(|x| x.abs().min(T::one()));

    // Rows are the smaller side.
    let transposed = cos.nrows() > cos.ncols();
    let weights: Array2<f64> = if transposed { cos.t().mapv(|x| x.to_f64_lossy()) } else { cos.mapv(|x| x.to_f64_lossy()) };
    let assignment = if weights.ncols() <= BRUTE_FORCE_LIMIT {
        brute_force_assignment(&weights)
    } else {
        hungarian_assignment(&weights)
    };

    let mut matching: Vec<(usize, usize)> = assignment
        .iter()
        .enumerate()
        .map(|(row, &col)| if transposed { (col, row) } else { (row, col) })
        .collect();
    matching.sort_unstable();
    let cosines: Vec<T> = matching.iter().map(|&(i, j)| cos[[i, j]]).collect();
    let total = cosines.iter().fold(T::zero(), |acc, &c| acc + c);
    let score = total / T::from_usize(cosines.len()).unwrap();
    Ok(ScoreResult { score, matching, cosines })
}

/// Maximum-weight injective map rows → columns (`rows ≤ cols`) by
/// exhaustive search. Returns the column chosen for each row.
pub fn brute_force_assignment(w: &Array2<f64>) -> Vec<usize> {
    let (rows, cols) = w.dim();
    assert!(rows <= cols, "assignment needs rows ≤ cols");
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut current = Vec::with_capacity(rows);
    let mut used = vec![false; cols];
    fn go(w: &Array2<f64>, row: usize, acc: f64, current: &mut Vec<usize>, used: &mut [bool], best: &mut (f64, Vec<usize>)) {
        if row == w.nrows() {
            if acc > best.0 {
                *best = (acc, current.clone());
            }
            return;
        }
        for c in 0..w.ncols() {
            if !used[c] {
                used[c] = true;
                current.push(c);
                go(w, row + 1, acc + w[[row, c]], current, used, best);
                current.pop();
                used[c] = false;
            }
        }
    }
    go(w, 0, 0.0, &mut current, &mut used, &mut best);
    best.1
}

/// Maximum-weight injective map rows → columns (`rows ≤ cols`) by the
/// Hungarian method with potentials, `O(rows² · cols)`.
pub fn hungarian_assignment(w: &Array2<f64>) -> Vec<usize> {
    let (n, m) = w.dim();
    assert!(n <= m, "assignment needs rows ≤ cols");
    // Minimize cost = −weight. Arrays are 1-based; index 0 is a sentinel.
    let cost = |i: usize, j: usize| -w[[i - 1, j - 1]];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
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
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}
