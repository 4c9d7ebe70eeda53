//! Symmetric CP decomposition of empirical moment tensors.
//!
//! The `d`-th moment of `p` observations in `n` dimensions is a symmetric
//! tensor with `n^d` entries. This crate fits a rank-`r` symmetric Kruskal
//! model `M = Σ λ_j a_j^{⊗d}` to it without ever forming the tensor: every
//! function value and gradient is computed from the observation matrix and
//! its weights in `O(pnr)` work. A dense reference implementation is kept
//! alongside for verification and for small problems.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod decompose;
pub mod dense;
pub mod error;
pub mod gmm;
pub mod implicit;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod observations;
pub mod optim;
pub mod scalar;
pub mod score;

pub use decompose::{decompose, relative_error, DecomposeOptions, Decomposition};
pub use dense::{kruskal_to_dense, unique_entries, DenseSymTensor, ElementCap};
pub use error::{Error, Result};
pub use implicit::{
    data_norm_sq, kruskal_norm_sq, model_data_inner, ttsv_batch, GramCache, SymKruskal,
};
pub use objective::{fg_explicit, fg_implicit, fg_stochastic, sample_observations, EvalKind, FgResult};
pub use observations::ObservationSet;
pub use optim::{
    adam_minimize, lbfgs_minimize, multistart, pack, unpack, AdamConfig, MultistartReport,
    OptConfig, RunReport, Termination,
};
pub use scalar::Scalar;
pub use score::{similarity_score, ScoreResult};

pub type DenseSymTensor64 = DenseSymTensor<f64>;
pub type ObservationSet64 = ObservationSet<f64>;
pub type SymKruskal64 = SymKruskal<f64>;
pub type FgResult64 = FgResult<f64>;
pub type RunReport64 = RunReport<f64>;

pub type DenseSymTensor32 = DenseSymTensor<f32>;
pub type ObservationSet32 = ObservationSet<f32>;
pub type SymKruskal32 = SymKruskal<f32>;

/// Crate version, stamped into serialized solutions.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
