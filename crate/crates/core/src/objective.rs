//! Function value and gradients of `f(λ, A) = α + ‖M‖² − 2⟨X, M⟩`.
//!
//! With `α = ‖X‖²` this is `‖X − M‖²`; the default `α = 0` gives the
//! shifted objective, which has the same minimizers. The explicit and
//! implicit paths differ only in how `Y` (the TTSVs) is obtained.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseSymTensor;
use crate::error::{Error, Result};
use crate::implicit::{ttsv_batch, GramCache};
use crate::observations::ObservationSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    Explicit,
    Implicit,
    Stochastic,
}

#[derive(Clone, Debug)]
pub struct FgResult<T> {
    pub f: T,
    pub grad_weights: Array1<T>,
    pub grad_factors: Array2<T>,
    /// Wall-clock seconds spent in this evaluation.
    pub eval_time: f64,
    pub eval_kind: EvalKind,
}

/// Objective and gradients against a dense moment tensor.
pub fn fg_explicit<T: Scalar>(
    x: &DenseSymTensor<T>,
    weights: ArrayView1<'_, T>,
    factors: ArrayView2<'_, T>,
    alpha: T,
) -> Result<FgResult<T>> {
    let start = Instant::now();
    check_model(x.dim(), weights, factors, alpha)?;
    let y = x.ttsv_all_but_one_batch(factors)?;
    assemble(y, weights, factors, x.order(), alpha, EvalKind::Explicit, start)
}

/// Objective and gradients computed from the observations alone.
pub fn fg_implicit<T: Scalar>(
    obs: &ObservationSet<T>,
    weights: ArrayView1<'_, T>,
    factors: ArrayView2<'_, T>,
    d: usize,
    alpha: T,
) -> Result<FgResult<T>> {
    let start = Instant::now();
    check_model(obs.dim(), weights, factors, alpha)?;
    let y = ttsv_batch(obs, factors, d)?;
    assemble(y, weights, factors, d, alpha, EvalKind::Implicit, start)
}

/// Unbiased estimate of [`fg_implicit`] from `s` observations drawn with
/// replacement. The input must carry uniform weights.
pub fn fg_stochastic<T: Scalar, R: Rng + ?Sized>(
    obs: &ObservationSet<T>,
    weights: ArrayView1<'_, T>,
    factors: ArrayView2<'_, T>,
    d: usize,
    alpha: T,
    s: usize,
    rng: &mut R,
) -> Result<FgResult<T>> {
    let start = Instant::now();
    let sample = sample_observations(obs, s, rng)?;
    let mut out = fg_implicit(&sample, weights, factors, d, alpha)?;
    out.eval_kind = EvalKind::Stochastic;
    out.eval_time = start.elapsed().as_secs_f64();
    Ok(out)
}

/// `s` columns drawn uniformly with replacement, reweighted to `1/s`.
pub fn sample_observations<T: Scalar, R: Rng + ?Sized>(
    obs: &ObservationSet<T>,
    s: usize,
    rng: &mut R,
) -> Result<ObservationSet<T>> {
    if s == 0 {
        return Err(Error::arg("sample size must be at least 1"));
    }
    if !obs.is_uniform() {
        return Err(Error::arg(
            "stochastic sampling is only defined for uniformly weighted observations",
        ));
    }
    let p = obs.len();
    let indices: Vec<usize> = (0..s).map(|_| rng.random_range(0..p)).collect();
    obs.select_uniform(&indices)
}

fn check_model<T: Scalar>(n: usize, weights: ArrayView1<'_, T>, factors: ArrayView2<'_, T>, alpha: T) -> Result<()> {
    let (rows, r) = factors.dim();
    if rows != n {
        return Err(Error::arg(format!(
            "factor matrix has {rows} rows, data has dimension {n}"
        )));
    }
    if r == 0 || weights.len() != r {
        return Err(Error::arg(format!(
            "{} weights for {r} factor columns",
            weights.len()
        )));
    }
    if !alpha.is_finite() || weights.iter().chain(factors.iter()).any(|v| !v.is_finite()) {
        return Err(Error::arg("model variables must be finite"));
    }
    Ok(())
}

fn assemble<T: Scalar>(
    y: Array2<T>,
    weights: ArrayView1<'_, T>,
    factors: ArrayView2<'_, T>,
    d: usize,
    alpha: T,
    eval_kind: EvalKind,
    start: Instant,
) -> Result<FgResult<T>> {
    let two = T::lit(2.0);
    let cache = GramCache::new(y, factors, weights, d)?;
    let f = alpha + weights.dot(&cache.u) - two * cache.w.dot(&weights);
    let grad_weights = (&cache.w - &cache.u) * (-two);

    // −2d (Y − A·diag(λ)·C)·diag(λ)
    let mut scaled = factors.to_owned();
    for (mut col, &l) in scaled.columns_mut().into_iter().zip(weights) {
        col *= l;
    }
    let mut grad_factors = cache.y - scaled.dot(&cache.gram_pow);
    let coef = -two * T::from_usize(d).unwrap();
    for (mut col, &l) in grad_factors.columns_mut().into_iter().zip(weights) {
        col *= coef * l;
    }

    if !f.is_finite() || grad_weights.iter().chain(grad_factors.iter()).any(|v| !v.is_finite()) {
        return Err(Error::arg("objective overflowed to a non-finite value"));
    }
    Ok(FgResult {
        f,
        grad_weights,
        grad_factors,
        eval_time: start.elapsed().as_secs_f64(),
        eval_kind,
    })
}
