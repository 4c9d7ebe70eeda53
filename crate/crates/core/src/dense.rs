//! Explicit `d`-way symmetric tensors.
//!
//! Storage is a flat buffer of `n^d` entries in row-major order over the
//! multiindex `(i_1, …, i_d)`: `i_d` varies fastest, so the linear position
//! is `Σ_k i_k · n^{d-1-k}`. These tensors exist to check the implicit
//! kernels and to time the explicit objective; every constructor is guarded
//! by an [`ElementCap`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::implicit::SymKruskal;
use crate::observations::ObservationSet;
use crate::scalar::Scalar;

/// Environment variable overriding the default element cap.
pub const ELEMENT_CAP_ENV: &str = "MOMENTCP_ELEMENT_CAP";

/// Above this many entries `check_symmetric` samples instead of enumerating.
pub const EXHAUSTIVE_SYMMETRY_LIMIT: usize = 1_000_000;
const SYMMETRY_SAMPLES: usize = 100_000;
const SYMMETRY_SEED: u64 = 0x005E_ED0F_5E77;

/// Storage in gigabytes of a dense `n^d` tensor of doubles.
pub fn dense_storage_gb(n: usize, d: usize) -> f64 {
    (n as f64).powi(d as i32) * 8.0 / 1e9
}

/// Upper bound on the number of entries any dense tensor may hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElementCap(usize);

impl ElementCap {
    pub const DEFAULT: usize = 100_000_000;

    pub fn new(max_elements: usize) -> Self {
        Self(max_elements)
    }

    pub fn unlimited() -> Self {
        Self(usize::MAX)
    }

    /// Reads [`ELEMENT_CAP_ENV`], falling back to [`ElementCap::DEFAULT`]
    /// when unset or unparsable.
    pub fn from_env() -> Self {
        std::env::var(ELEMENT_CAP_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|v| *v >= 1.0)
            .map(|v| Self(v as usize))
            .unwrap_or(Self(Self::DEFAULT))
    }

    pub fn max_elements(self) -> usize {
        self.0
    }

    /// Returns `n^d` if it fits under the cap.
    pub fn check(self, n: usize, d: usize) -> Result<usize> {
        let len = u32::try_from(d)
            .ok()
            .and_then(|d| n.checked_pow(d))
            .filter(|&len| len <= self.0);
        len.ok_or_else(|| {
            Error::Resource(format!(
                "dense tensor with n={n}, d={d} has n^d = {:.3e} entries ({:.3} GB), \
                 above the element cap of {} (set {ELEMENT_CAP_ENV} to override)",
                (n as f64).powi(d as i32),
                dense_storage_gb(n, d),
                self.0
            ))
        })
    }
}

impl Default for ElementCap {
    fn default() -> Self {
        Self::from_env()
    }
}

/// Number of distinct entries of a symmetric tensor, `C(n+d-1, d)`.
pub fn unique_entries(n: usize, d: usize) -> Result<u64> {
    if n == 0 || d == 0 {
        return Err(Error::arg("unique_entries needs n ≥ 1 and d ≥ 1"));
    }
    let overflow = || Error::Resource(format!("C({}+{}-1, {}) overflows u64", n, d, d));
    // After step k, acc = C(n-1+k, k), so each division is exact.
    let mut acc: u128 = 1;
    for k in 1..=d as u128 {
        acc = acc
            .checked_mul(n as u128 - 1 + k)
            .ok_or_else(overflow)?
            / k;
    }
    u64::try_from(acc).map_err(|_| overflow())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseSymTensor<T> {
    order: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseSymTensor<T> {
    pub fn zeros(n: usize, d: usize, cap: ElementCap) -> Result<Self> {
        validate_shape(n, d)?;
        let len = cap.check(n, d)?;
        Ok(Self {
            order: d,
            dim: n,
            data: vec![T::zero(); len],
        })
    }

    /// Wraps a row-major buffer. Symmetry is not checked here.
    pub fn from_vec(n: usize, d: usize, data: Vec<T>) -> Result<Self> {
        validate_shape(n, d)?;
        let len = ElementCap::unlimited().check(n, d)?;
        if data.len() != len {
            return Err(Error::arg(format!(
                "buffer has {} entries, expected n^d = {len}",
                data.len()
            )));
        }
        Ok(Self { order: d, dim: n, data })
    }

    /// `a^{⊗d}`.
    pub fn outer_power(a: ArrayView1<'_, T>, d: usize) -> Result<Self> {
        Self::outer_power_with_cap(a, d, ElementCap::default())
    }

    pub fn outer_power_with_cap(a: ArrayView1<'_, T>, d: usize, cap: ElementCap) -> Result<Self> {
        let vectors = a.insert_axis(ndarray::Axis(1));
        let weights = Array1::from_elem(1, T::one());
        Self::from_weighted_outer_powers(weights.view(), vectors, d, cap)
    }

    /// The weighted moment `Σ_ℓ ν_ℓ v_ℓ^{⊗d}`.
    pub fn build_moment(obs: &ObservationSet<T>, d: usize) -> Result<Self> {
        Self::build_moment_with_cap(obs, d, ElementCap::default())
    }

    pub fn build_moment_with_cap(obs: &ObservationSet<T>, d: usize, cap: ElementCap) -> Result<Self> {
        Self::from_weighted_outer_powers(obs.weights(), obs.data(), d, cap)
    }

    /// `Σ_j w_j c_j^{⊗d}` over the columns `c_j` of `vectors`.
    ///
    /// Each distinct entry is computed once, on its sorted multiindex, and
    /// copied to every permutation, so the result is exactly symmetric.
    pub fn from_weighted_outer_powers(
        weights: ArrayView1<'_, T>,
        vectors: ArrayView2<'_, T>,
        d: usize,
        cap: ElementCap,
    ) -> Result<Self> {
        let (n, m) = vectors.dim();
        validate_shape(n, d)?;
        if weights.len() != m {
            return Err(Error::arg(format!(
                "{} weights for {m} vectors",
                weights.len()
            )));
        }
        let len = cap.check(n, d)?;
        let mut data = vec![T::zero(); len];
        if m > 0 {
            let rows = vectors.as_standard_layout().into_owned();
            let weights = weights.to_vec();
            let mut idx = vec![0usize; d];
            let mut prefix = vec![vec![T::zero(); m]; d];
            fill_canonical(&rows, &weights, n, 0, 0, &mut idx, &mut prefix, &mut data);
            let mut idx = vec![0usize; d];
            let mut sorted = vec![0usize; d];
            for lin in 0..len {
                sorted.copy_from_slice(&idx);
                sorted.sort_unstable();
                let canon = linear_index(n, &sorted);
                if canon != lin {
                    data[lin] = data[canon];
                }
                advance(&mut idx, n);
            }
        }
        Ok(Self { order: d, dim: n, data })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.order, "multiindex length must equal the order");
        assert!(idx.iter().all(|&i| i < self.dim), "multiindex out of range");
        linear_index(self.dim, idx)
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.linear_index(idx)]
    }

    /// Writes a single entry. This can break symmetry.
    pub fn set(&mut self, idx: &[usize], value: T) {
        let lin = self.linear_index(idx);
        self.data[lin] = value;
    }

    /// `⟨X, Y⟩ = Σ_i x_i y_i`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.order != other.order || self.dim != other.dim {
            return Err(Error::arg(format!(
                "inner product of tensors with shapes (d={}, n={}) and (d={}, n={})",
                self.order, self.dim, other.order, other.dim
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&x, &y)| acc + x * y))
    }

    pub fn norm_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    /// `X a^d`: contraction with `a` in every mode.
    pub fn ttsv_all(&self, a: ArrayView1<'_, T>) -> Result<T> {
        let y = self.ttsv_all_but_one(a)?;
        Ok(y.dot(&a))
    }

    /// `X a^{d-1}`: contraction with `a` in all modes but the first.
    pub fn ttsv_all_but_one(&self, a: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check_vector(a.len())?;
        let a = a.to_vec();
        let mut buf = contract_last(&self.data, &a);
        for _ in 2..self.order {
            buf = contract_last(&buf, &a);
        }
        Ok(Array1::from(buf))
    }

    /// `X a_j^{d-1}` for every column of `factors` at once; the first
    /// contraction is a single `n^{d-1} × n` by `n × r` product.
    pub fn ttsv_all_but_one_batch(&self, factors: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_vector(factors.nrows())?;
        let n = self.dim;
        let r = factors.ncols();
        let unfolded = ArrayView2::from_shape((self.data.len() / n, n), &self.data)
            .expect("buffer length is n^d");
        let first = unfolded.dot(&factors);
        let mut out = Array2::zeros((n, r));
        for j in 0..r {
            let a = factors.column(j).to_vec();
            let mut buf = first.column(j).to_vec();
            for _ in 2..self.order {
                buf = contract_last(&buf, &a);
            }
            out.column_mut(j).assign(&ArrayView1::from(&buf));
        }
        Ok(out)
    }

    /// True iff every permutation orbit of entries spans at most `tol`.
    ///
    /// Exhaustive up to [`EXHAUSTIVE_SYMMETRY_LIMIT`] entries; larger tensors
    /// are checked on a fixed-seed sample of permuted pairs.
    pub fn check_symmetric(&self, tol: T) -> bool {
        let n = self.dim;
        let d = self.order;
        if self.data.iter().any(|x| x.is_nan()) {
            return false;
        }
        if self.data.len() <= EXHAUSTIVE_SYMMETRY_LIMIT {
            let mut lo = self.data.clone();
            let mut hi = self.data.clone();
            let mut idx = vec![0usize; d];
            let mut sorted = vec![0usize; d];
            for lin in 0..self.data.len() {
                sorted.copy_from_slice(&idx);
                sorted.sort_unstable();
                let canon = linear_index(n, &sorted);
                let x = self.data[lin];
                lo[canon] = lo[canon].min(x);
                hi[canon] = hi[canon].max(x);
                advance(&mut idx, n);
            }
            lo.iter().zip(&hi).all(|(&l, &h)| h - l <= tol)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(SYMMETRY_SEED);
            let mut idx = vec![0usize; d];
            let mut perm = vec![0usize; d];
            (0..SYMMETRY_SAMPLES).all(|_| {
                for i in idx.iter_mut() {
                    *i = rng.random_range(0..n);
                }
                perm.copy_from_slice(&idx);
                perm.shuffle(&mut rng);
                let a = self.data[linear_index(n, &idx)];
                let b = self.data[linear_index(n, &perm)];
                (a - b).abs() <= tol
            })
        }
    }

    fn check_vector(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::arg(format!(
                "vector of length {len} against tensor of dimension {}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Dense form of a symmetric Kruskal tensor, `Σ_j λ_j a_j^{⊗d}`.
pub fn kruskal_to_dense<T: Scalar>(model: &SymKruskal<T>, cap: ElementCap) -> Result<DenseSymTensor<T>> {
    DenseSymTensor::from_weighted_outer_powers(model.weights(), model.factors(), model.order(), cap)
}

fn validate_shape(n: usize, d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::arg(format!("tensor order must be at least 2, got {d}")));
    }
    if n == 0 {
        return Err(Error::arg("tensor dimension must be at least 1"));
    }
    Ok(())
}

fn linear_index(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Row-major odometer step.
fn advance(idx: &mut [usize], n: usize) {
    for i in idx.iter_mut().rev() {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}

/// Contracts the fastest-varying mode of `buf` with `a`.
fn contract_last<T: Scalar>(buf: &[T], a: &[T]) -> Vec<T> {
    buf.chunks_exact(a.len())
        .map(|chunk| {
            chunk
                .iter()
                .zip(a)
                .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
        })
        .collect()
}

/// Enumerates nondecreasing multiindices and writes `Σ_ℓ w_ℓ ∏_k c_{i_k ℓ}`
/// at each one. `prefix[k]` holds the running products through level `k`.
#[allow(clippy::too_many_arguments)]
fn fill_canonical<T: Scalar>(
    rows: &Array2<T>,
    weights: &[T],
    n: usize,
    level: usize,
    start: usize,
    idx: &mut [usize],
    prefix: &mut [Vec<T>],
    data: &mut [T],
) {
    let d = idx.len();
    for i in start..n {
        idx[level] = i;
        let (done, rest) = prefix.split_at_mut(level);
        let src: &[T] = if level == 0 { weights } else { &done[level - 1] };
        let row = rows.row(i);
        for ((dst, &s), &v) in rest[0].iter_mut().zip(src).zip(row.iter()) {
            *dst = s * v;
        }
        if level + 1 == d {
            let total = rest[0].iter().fold(T::zero(), |acc, &x| acc + x);
            data[linear_index(n, idx)] = total;
        } else {
            fill_canonical(rows, weights, n, level + 1, i, idx, prefix, data);
        }
    }
}
