//! Matrix-free kernels over the observation matrix.
//!
//! With `X = Σ_ℓ ν_ℓ v_ℓ^{⊗d}` and a model `M = Σ_j λ_j a_j^{⊗d}`, the
//! rank-one identities `⟨a^{⊗d}, b^{⊗d}⟩ = ⟨a,b⟩^d` and
//! `b^{⊗d} a^{d-1} = ⟨a,b⟩^{d-1} b` turn every quantity the objective needs
//! into products of `V`, `A` and small Gram matrices:
//!
//! - `Y = V·diag(ν)·[VᵀA]^{d-1}` (all TTSVs at once, `O(npr)`),
//! - `‖M‖² = λᵀ[AᵀA]^d λ` (`O(nr²)`),
//! - `‖X‖² = νᵀ[VᵀV]^d ν` (`O(np²)`),
//! - `⟨X, M⟩ = Σ_j λ_j a_jᵀ y_j`.
//!
//! Bracketed powers are elementwise.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::dense::{kruskal_to_dense, DenseSymTensor, ElementCap};
use crate::error::{Error, Result};
use crate::linalg::{column_norms, elementwise_powu};
use crate::observations::ObservationSet;
use crate::scalar::Scalar;

/// Column block used when forming `VᵀV` piecewise in [`data_norm_sq`].
const GRAM_BLOCK: usize = 512;

/// Symmetric Kruskal tensor `Σ_j λ_j a_j^{⊗d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymKruskal<T> {
    order: usize,
    weights: Array1<T>,
    factors: Array2<T>,
}

impl<T: Scalar> SymKruskal<T> {
    pub fn new(order: usize, weights: Array1<T>, factors: Array2<T>) -> Result<Self> {
        if order < 2 {
            return Err(Error::arg(format!("model order must be at least 2, got {order}")));
        }
        let (n, r) = factors.dim();
        if n == 0 || r == 0 {
            return Err(Error::arg(format!("factor matrix must be non-empty, got {n}×{r}")));
        }
        if weights.len() != r {
            return Err(Error::arg(format!(
                "{} weights for {r} components",
                weights.len()
            )));
        }
        if weights.iter().chain(factors.iter()).any(|x| !x.is_finite()) {
            return Err(Error::arg("model weights and factors must be finite"));
        }
        Ok(Self { order, weights, factors })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rank(&self) -> usize {
        self.factors.ncols()
    }

    pub fn dim(&self) -> usize {
        self.factors.nrows()
    }

    pub fn weights(&self) -> ArrayView1<'_, T> {
        self.weights.view()
    }

    pub fn factors(&self) -> ArrayView2<'_, T> {
        self.factors.view()
    }

    pub fn norm_sq(&self) -> T {
        kruskal_norm_sq(self)
    }

    pub fn to_dense(&self, cap: ElementCap) -> Result<DenseSymTensor<T>> {
        kruskal_to_dense(self, cap)
    }

    /// Same tensor with unit-norm factor columns; the norms move into the
    /// weights as `λ_j ‖a_j‖^d`. Zero columns are left untouched.
    pub fn normalized(&self) -> Self {
        let norms = column_norms(self.factors.view());
        let mut out = self.clone();
        for (j, &norm) in norms.iter().enumerate() {
            if norm > T::zero() {
                out.factors.column_mut(j).mapv_inplace(|x| x / norm);
                out.weights[j] *= norm.powu(self.order);
            }
        }
        out
    }

    pub fn into_parts(self) -> (Array1<T>, Array2<T>) {
        (self.weights, self.factors)
    }
}

/// `Y = V·diag(ν)·[VᵀA]^{d-1}`; column `j` is `X a_j^{d-1}`.
pub fn ttsv_batch<T: Scalar>(obs: &ObservationSet<T>, factors: ArrayView2<'_, T>, d: usize) -> Result<Array2<T>> {
    if d < 2 {
        return Err(Error::arg(format!("tensor order must be at least 2, got {d}")));
    }
    if factors.nrows() != obs.dim() {
        return Err(Error::arg(format!(
            "factor matrix has {} rows but observations have dimension {}",
            factors.nrows(),
            obs.dim()
        )));
    }
    let v = obs.data();
    let mut z = v.t().dot(&factors);
    Zip::from(z.rows_mut())
        .and(&obs.weights())
        .for_each(|mut row, &w| row.mapv_inplace(|x| w * x.powu(d - 1)));
    Ok(v.dot(&z))
}

/// `‖M‖² = λᵀ[AᵀA]^d λ`.
pub fn kruskal_norm_sq<T: Scalar>(model: &SymKruskal<T>) -> T {
    let a = model.factors();
    let gram = elementwise_powu(a.t().dot(&a).view(), model.order());
    let lambda = model.weights();
    lambda.dot(&gram.dot(&lambda))
}

/// `‖X‖² = νᵀ[VᵀV]^d ν`, formed one column block of `VᵀV` at a time.
pub fn data_norm_sq<T: Scalar>(obs: &ObservationSet<T>, d: usize) -> T {
    let v = obs.data();
    let nu = obs.weights();
    let p = obs.len();
    let mut total = T::zero();
    let mut start = 0;
    while start < p {
        let end = (start + GRAM_BLOCK).min(p);
        let block = v.slice(ndarray::s![.., start..end]);
        let g = elementwise_powu(block.t().dot(&v).view(), d);
        total += nu.slice(ndarray::s![start..end]).dot(&g.dot(&nu));
        start = end;
    }
    total
}

/// `w_j = a_jᵀ y_j` and `⟨X, M⟩ = wᵀλ` given `Y` from [`ttsv_batch`].
pub fn model_data_inner<T: Scalar>(
    y: ArrayView2<'_, T>,
    factors: ArrayView2<'_, T>,
    weights: ArrayView1<'_, T>,
) -> Result<(Array1<T>, T)> {
    if y.dim() != factors.dim() {
        return Err(Error::arg(format!(
            "Y is {:?} but A is {:?}",
            y.dim(),
            factors.dim()
        )));
    }
    if weights.len() != factors.ncols() {
        return Err(Error::arg(format!(
            "{} weights for {} components",
            weights.len(),
            factors.ncols()
        )));
    }
    let w: Array1<T> = Zip::from(y.axis_iter(Axis(1)))
        .and(factors.axis_iter(Axis(1)))
        .map_collect(|yj, aj| aj.dot(&yj));
    let value = w.dot(&weights);
    Ok((w, value))
}

/// Quantities shared between the function value and both gradients.
#[derive(Clone, Debug)]
pub struct GramCache<T> {
    /// `B = AᵀA`.
    pub gram: Array2<T>,
    /// `C = [B]^{d-1}`.
    pub gram_pow: Array2<T>,
    /// `u = (B ∘ C) λ = [B]^d λ`.
    pub u: Array1<T>,
    /// Column `j` is `X a_j^{d-1}`.
    pub y: Array2<T>,
    /// `w_j = a_jᵀ y_j`.
    pub w: Array1<T>,
}

impl<T: Scalar> GramCache<T> {
    pub fn new(y: Array2<T>, factors: ArrayView2<'_, T>, weights: ArrayView1<'_, T>, d: usize) -> Result<Self> {
        let (w, _) = model_data_inner(y.view(), factors, weights)?;
        let gram = factors.t().dot(&factors);
        let gram_pow = elementwise_powu(gram.view(), d - 1);
        let u = (&gram * &gram_pow).dot(&weights);
        Ok(Self { gram, gram_pow, u, y, w })
    }
}
