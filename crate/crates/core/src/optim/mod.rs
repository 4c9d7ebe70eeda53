//! First-order solvers over the packed variable vector `x = (λ, vec(A))`.

mod adam;
mod lbfgs;
mod line_search;
mod multistart;

pub use adam::{adam_minimize, AdamConfig};
pub use lbfgs::{lbfgs_minimize, LbfgsMemory};
pub use multistart::{multistart, run_rng, MultistartReport};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Stop once the infinity norm of the gradient is at most this.
    pub pgtol: f64,
    /// Cap on accepted steps.
    pub max_iters: usize,
    /// Cap on function/gradient evaluations (inner iterations).
    pub max_total_iters: usize,
    /// Sufficient-decrease constant of the line search.
    pub c1: f64,
    /// Curvature constant of the strong Wolfe conditions.
    pub c2: f64,
    /// Trial steps allowed per line search.
    pub max_line_search: usize,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            memory: 5,
            pgtol: 1e-4,
            max_iters: 10_000,
            max_total_iters: 50_000,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 20,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pgtol > 0.0) {
            return Err(Error::arg(format!("pgtol must be positive, got {}", self.pgtol)));
        }
        if self.memory == 0 {
            return Err(Error::arg("L-BFGS memory must be at least 1"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::arg(format!(
                "line-search constants need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.max_line_search == 0 {
            return Err(Error::arg("line search needs at least one trial step"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Tolerance,
    IterationCap,
    LearningRateExhausted,
    LineSearchFailure,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Tolerance => "tolerance",
            Termination::IterationCap => "iteration cap",
            Termination::LearningRateExhausted => "learning-rate exhausted",
            Termination::LineSearchFailure => "line-search failure",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Function/gradient evaluations so far.
    pub evaluation: usize,
    pub f: f64,
    /// Seconds since the solver started.
    pub time: f64,
}

/// Result of a solver on a flat variable vector.
#[derive(Clone, Debug)]
pub struct SolverOutcome<T> {
    pub x: Array1<T>,
    pub f: T,
    pub grad_inf_norm: T,
    pub evaluations: usize,
    pub iterations: usize,
    pub reason: Termination,
    pub trace: Vec<TracePoint>,
    pub wall_time: f64,
}

/// One decomposition run, unpacked into model variables.
#[derive(Clone, Debug)]
pub struct RunReport<T> {
    pub weights: Array1<T>,
    pub factors: Array2<T>,
    pub f: T,
    pub grad_inf_norm: T,
    /// Inner iterations, i.e. function/gradient evaluations.
    pub evaluations: usize,
    /// Accepted steps (L-BFGS) or stochastic updates (Adam).
    pub iterations: usize,
    pub wall_time: f64,
    pub reason: Termination,
    pub seed: u64,
    pub run_index: usize,
    pub trace: Vec<TracePoint>,
}

impl<T: Scalar> RunReport<T> {
    pub fn from_outcome(outcome: SolverOutcome<T>, n: usize, r: usize) -> Result<Self> {
        let (weights, factors) = unpack(outcome.x.view(), n, r)?;
        Ok(Self {
            weights,
            factors,
            f: outcome.f,
            grad_inf_norm: outcome.grad_inf_norm,
            evaluations: outcome.evaluations,
            iterations: outcome.iterations,
            wall_time: outcome.wall_time,
            reason: outcome.reason,
            seed: 0,
            run_index: 0,
            trace: outcome.trace,
        })
    }

    /// Equality of everything except wall-clock fields.
    pub fn same_result(&self, other: &Self) -> bool {
        self.weights == other.weights
            && self.factors == other.factors
            && self.f == other.f
            && self.grad_inf_norm == other.grad_inf_norm
            && self.evaluations == other.evaluations
            && self.iterations == other.iterations
            && self.reason == other.reason
            && self.seed == other.seed
            && self.run_index == other.run_index
            && self.trace.len() == other.trace.len()
            && self
                .trace
                .iter()
                .zip(&other.trace)
                .all(|(a, b)| a.evaluation == b.evaluation && a.f.to_bits() == b.f.to_bits())
    }
}

/// `x = (λ, vec(A))` with `A` flattened column by column.
pub fn pack<T: Scalar>(weights: ArrayView1<'_, T>, factors: ArrayView2<'_, T>) -> Array1<T> {
    let r = weights.len();
    let mut x = Array1::zeros(r + factors.len());
    x.slice_mut(s![..r]).assign(&weights);
    for (j, col) in factors.columns().into_iter().enumerate() {
        let n = col.len();
        x.slice_mut(s![r + j * n..r + (j + 1) * n]).assign(&col);
    }
    x
}

/// Inverse of [`pack`] for an `n × r` factor matrix.
pub fn unpack<T: Scalar>(x: ArrayView1<'_, T>, n: usize, r: usize) -> Result<(Array1<T>, Array2<T>)> {
    if x.len() != r + n * r {
        return Err(Error::arg(format!(
            "packed vector has length {}, expected r + n·r = {}",
            x.len(),
            r + n * r
        )));
    }
    let weights = x.slice(s![..r]).to_owned();
    let flat = x.slice(s![r..]).to_vec();
    let factors = Array2::from_shape_vec((n, r).f(), flat)
        .expect("length checked above")
        .as_standard_layout()
        .into_owned();
    Ok((weights, factors))
}
