use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Observation matrix `V` (`n × p`, one observation per column) with
/// strictly positive weights `ν`. Implicitly represents the moment tensor
/// `X = Σ_ℓ ν_ℓ v_ℓ^{⊗d}` for any order `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet<T> {
    data: Array2<T>,
    weights: Array1<T>,
}

impl<T: Scalar> ObservationSet<T> {
    pub fn new(data: Array2<T>, weights: Array1<T>) -> Result<Self> {
        let (n, p) = data.dim();
        if n == 0 || p == 0 {
            return Err(Error::arg(format!(
                "observation matrix must be non-empty, got {n}×{p}"
            )));
        }
        if weights.len() != p {
            return Err(Error::arg(format!(
                "weight vector has length {} but there are {p} observations",
                weights.len()
            )));
        }
        if let Some(bad) = weights.iter().position(|w| !(w.is_finite() && *w > T::zero())) {
            return Err(Error::Validation(format!(
                "observation weight {bad} is {}, weights must be finite and positive",
                weights[bad]
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            let (i, l) = (bad / p, bad % p);
            return Err(Error::Validation(format!(
                "observation {l}, component {i} is not finite"
            )));
        }
        Ok(Self { data, weights })
    }

    /// Weights `ν_ℓ = 1/p`, the plain empirical moment.
    pub fn uniform(data: Array2<T>) -> Result<Self> {
        let p = data.ncols().max(1);
        let w = T::one() / T::from_usize(p).unwrap();
        let weights = Array1::from_elem(data.ncols(), w);
        Self::new(data, weights)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn data(&self) -> ArrayView2<'_, T> {
        self.data.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, T> {
        self.weights.view()
    }

    pub fn observation(&self, l: usize) -> ArrayView1<'_, T> {
        self.data.column(l)
    }

    /// True when every weight is bitwise equal to the first.
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| *w == w0)
    }

    /// Columns at `indices` (repeats allowed) with uniform weights `1/len`.
    pub fn select_uniform(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::arg("cannot select zero observations"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::arg(format!(
                "observation index {bad} out of range for {} observations",
                self.len()
            )));
        }
        let data = self.data.select(Axis(1), indices);
        Self::uniform(data)
    }

    pub fn into_parts(self) -> (Array2<T>, Array1<T>) {
        (self.data, self.weights)
    }
}
