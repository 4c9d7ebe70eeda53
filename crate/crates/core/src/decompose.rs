//! End-to-end decomposition: initialization, multistart, and the Gaussian
//! mixture rank sweep.

use std::io::Write;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseSymTensor, ElementCap};
use crate::error::{Error, Result};
use crate::gmm::{gaussian_init, rrf_init, starting_point, GmmSample, GmmSpec};
use crate::implicit::{data_norm_sq, kruskal_norm_sq, model_data_inner, ttsv_batch, SymKruskal};
use crate::io::csv_err;
use crate::objective::{fg_explicit, fg_implicit};
use crate::observations::ObservationSet;
use crate::optim::{
    adam_minimize, lbfgs_minimize, multistart, pack, unpack, AdamConfig, MultistartReport, OptConfig, RunReport,
};
use crate::scalar::Scalar;
use crate::score::similarity_score;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// Randomized range finder on the observations.
    Rrf,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Implicit,
    /// Forms the dense moment tensor once; subject to the element cap.
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    /// Minimize the shifted objective `‖M‖² − 2⟨X, M⟩`.
    Zero,
    /// Add `‖X‖²` so the objective is the squared residual.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Lbfgs,
    Adam(AdamConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lbfgs => "lbfgs",
            Method::Adam(_) => "adam",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecomposeOptions {
    pub order: usize,
    pub rank: usize,
    pub starts: usize,
    pub init: InitKind,
    pub eval: EvalMode,
    pub alpha: AlphaMode,
    pub method: Method,
    pub opt: OptConfig,
    pub seed: u64,
    pub cap: ElementCap,
}

impl DecomposeOptions {
    pub fn new(order: usize, rank: usize) -> Self {
        Self {
            order,
            rank,
            starts: 10,
            init: InitKind::Rrf,
            eval: EvalMode::Implicit,
            alpha: AlphaMode::Zero,
            method: Method::Lbfgs,
            opt: OptConfig::default(),
            seed: 0,
            cap: ElementCap::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::arg(format!("order must be at least 2, got {}", self.order)));
        }
        if self.rank == 0 {
            return Err(Error::arg("rank must be at least 1"));
        }
        if self.starts == 0 {
            return Err(Error::arg("need at least one start"));
        }
        if let Method::Adam(cfg) = &self.method {
            cfg.validate()?;
            if self.eval == EvalMode::Explicit {
                return Err(Error::arg("the stochastic method only runs on observations"));
            }
        }
        self.opt.validate()
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition<T> {
    pub report: MultistartReport<T>,
    /// Constant included in every reported `f`.
    pub alpha: T,
}

impl<T: Scalar> Decomposition<T> {
    pub fn best(&self) -> &RunReport<T> {
        self.report.best()
    }
}

/// Best of `starts` runs on the `order`-th moment of `obs`.
///
/// Adam runs optimize the shifted objective on samples; each finished run
/// is then scored by one full evaluation (with `alpha`) so that runs of
/// both methods compare on the same objective.
pub fn decompose<T: Scalar>(obs: &ObservationSet<T>, opts: &DecomposeOptions) -> Result<Decomposition<T>> {
    opts.validate()?;
    let (n, d, r) = (obs.dim(), opts.order, opts.rank);
    let alpha = match opts.alpha {
        AlphaMode::Zero => T::zero(),
        AlphaMode::Exact => data_norm_sq(obs, d),
    };
    let dense = match opts.eval {
        EvalMode::Explicit => Some(DenseSymTensor::build_moment_with_cap(obs, d, opts.cap)?),
        EvalMode::Implicit => None,
    };

    let init = |rng: &mut ChaCha8Rng| -> Result<Array1<T>> {
        let a0 = match opts.init {
            InitKind::Rrf => rrf_init(obs, r, rng)?,
            InitKind::Gaussian => gaussian_init(n, r, rng)?,
        };
        starting_point(obs, a0, d)
    };

    let report = match &opts.method {
        Method::Lbfgs => multistart(opts.starts, opts.seed, init, |x0, _rng| {
            let fg = |x: &Array1<T>| -> Result<(T, Array1<T>)> {
                let (weights, factors) = unpack(x.view(), n, r)?;
                let out = match &dense {
                    Some(t) => fg_explicit(t, weights.view(), factors.view(), alpha)?,
                    None => fg_implicit(obs, weights.view(), factors.view(), d, alpha)?,
                };
                Ok((out.f, pack(out.grad_weights.view(), out.grad_factors.view())))
            };
            let outcome = lbfgs_minimize(fg, x0, &opts.opt)?;
            RunReport::from_outcome(outcome, n, r)
        })?,
        Method::Adam(cfg) => multistart(opts.starts, opts.seed, init, |x0, rng| {
            let mut report = adam_minimize(obs, d, r, x0, cfg, rng)?;
            let full = fg_implicit(obs, report.weights.view(), report.factors.view(), d, alpha)?;
            report.f = full.f;
            report.grad_inf_norm = crate::linalg::inf_norm(pack(full.grad_weights.view(), full.grad_factors.view()).view());
            Ok(report)
        })?,
    };
    Ok(Decomposition { report, alpha })
}

/// `‖X − M‖² / ‖X‖²` for the moment of `obs`, computed without forming `X`.
pub fn relative_error<T: Scalar>(
    obs: &ObservationSet<T>,
    d: usize,
    weights: ArrayView1<'_, T>,
    factors: ArrayView2<'_, T>,
) -> Result<T> {
    let model = SymKruskal::new(d, weights.to_owned(), factors.to_owned())?;
    let x_sq = data_norm_sq(obs, d);
    if !(x_sq > T::zero()) {
        return Err(Error::arg("relative error is undefined for a zero moment tensor"));
    }
    let y = ttsv_batch(obs, factors, d)?;
    let (_, inner) = model_data_inner(y.view(), factors, weights)?;
    let resid = x_sq - T::lit(2.0) * inner + kruskal_norm_sq(&model);
    Ok(resid.max(T::zero()) / x_sq)
}

/// Rank sweep on one mixture draw.
#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub spec: GmmSpec,
    pub order: usize,
    pub rank_min: usize,
    pub rank_max: usize,
    pub starts: usize,
    pub init: InitKind,
    pub opt: OptConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rank: usize,
    /// Relative error of the run with the lowest `f`.
    pub rel_error: f64,
    /// Similarity of that run's factors to the true means.
    pub score: f64,
    /// Seconds summed over all starts.
    pub total_time: f64,
    pub best_f: f64,
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub sample: GmmSample<f64>,
    pub rows: Vec<SweepRow>,
}

/// Independent 64-bit seed for sub-task `tag` of a job seeded with `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // SplitMix64 finalizer over the combined input.
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DATA_TAG: u64 = u64::MAX;

/// Draws mixture data from `seed` and fits every rank in `[rank_min, rank_max]`.
pub fn gmm_sweep(opts: &SweepOptions) -> Result<Sweep> {
    opts.spec.validate()?;
    if opts.rank_min == 0 || opts.rank_min > opts.rank_max {
        return Err(Error::arg(format!(
            "need 1 ≤ rank-min ≤ rank-max, got {}..{}",
            opts.rank_min, opts.rank_max
        )));
    }
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, DATA_TAG));
    let sample = opts.spec.generate::<f64, _>(&mut data_rng)?;
    let mut rows = Vec::new();
    for rank in opts.rank_min..=opts.rank_max {
        let dopts = DecomposeOptions {
            starts: opts.starts,
            init: opts.init,
            opt: opts.opt.clone(),
            seed: derive_seed(opts.seed, rank as u64),
            ..DecomposeOptions::new(opts.order, rank)
        };
        let out = decompose(&sample.obs, &dopts)?;
        let best = out.best();
        rows.push(SweepRow {
            rank,
            rel_error: relative_error(&sample.obs, opts.order, best.weights.view(), best.factors.view())?,
            score: similarity_score(sample.means.view(), best.factors.view())?.score,
            total_time: out.report.total_time(),
            best_f: best.f,
        });
    }
    Ok(Sweep { sample, rows })
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
