//! Small dense helpers that do not warrant a LAPACK dependency.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `[M]^k`, each entry raised to the `k`-th power.
pub fn elementwise_powu<T: Scalar>(m: ArrayView2<'_, T>, k: usize) -> Array2<T> {
    m.mapv(|x| x.powu(k))
}

pub fn column_norms<T: Scalar>(m: ArrayView2<'_, T>) -> Array1<T> {
    m.map_axis(Axis(0), |c| c.dot(&c).sqrt())
}

/// Scales every column to unit Euclidean norm. Fails on a zero column.
pub fn normalize_columns<T: Scalar>(m: &mut Array2<T>) -> Result<()> {
    for (j, mut col) in m.axis_iter_mut(Axis(1)).enumerate() {
        let norm = col.dot(&col).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::arg(format!("column {j} has norm {norm}, cannot normalize")));
        }
        col.mapv_inplace(|x| x / norm);
    }
    Ok(())
}

pub fn inf_norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Orthonormal basis for the column span of `m` (`n × r`, `r ≤ n`) by
/// modified Gram–Schmidt with one reorthogonalization pass.
pub fn orthonormalize<T: Scalar>(m: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let (n, r) = m.dim();
    if r > n {
        return Err(Error::arg(format!("cannot orthonormalize {r} columns in dimension {n}")));
    }
    let mut q = m.to_owned();
    for j in 0..r {
        let original = q.column(j).dot(&q.column(j)).sqrt();
        for _pass in 0..2 {
            for k in 0..j {
                let proj = q.column(k).dot(&q.column(j));
                let qk = q.column(k).to_owned();
                Zip::from(q.column_mut(j)).and(&qk).for_each(|x, &b| *x -= proj * b);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if !(norm > original * T::lit(1e-12)) {
            return Err(Error::arg(format!("column {j} is numerically dependent on earlier columns")));
        }
        q.column_mut(j).mapv_inplace(|x| x / norm);
    }
    Ok(q)
}

/// Upper-triangular `R` with `RᵀR = G` for symmetric positive definite `G`.
pub fn cholesky_upper<T: Scalar>(g: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let r = g.nrows();
    if g.ncols() != r {
        return Err(Error::arg("Cholesky factorization needs a square matrix"));
    }
    let mut u = Array2::<T>::zeros((r, r));
    for i in 0..r {
        let mut diag = g[[i, i]];
        for k in 0..i {
            diag -= u[[k, i]] * u[[k, i]];
        }
        if !(diag > T::zero()) {
            return Err(Error::arg(format!(
                "matrix is not positive definite (pivot {i} is {diag})"
            )));
        }
        let diag = diag.sqrt();
        u[[i, i]] = diag;
        for j in i + 1..r {
            let mut s = g[[i, j]];
            for k in 0..i {
                s -= u[[k, i]] * u[[k, j]];
            }
            u[[i, j]] = s / diag;
        }
    }
    Ok(u)
}
