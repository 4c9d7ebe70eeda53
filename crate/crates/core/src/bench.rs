//! Timing comparison of dense and implicit evaluation inside full L-BFGS runs.
//!
//! Both paths start from the same Gaussian initializations. Times exclude
//! data generation and the construction of the dense tensor.

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decompose::derive_seed;
use crate::dense::{DenseSymTensor, ElementCap};
use crate::error::{Error, Result};
use crate::gmm::{gaussian_init, initial_weights};
use crate::implicit::{ttsv_batch, GramCache};
use crate::io::csv_err;
use crate::objective::{fg_explicit, fg_implicit, EvalKind};
use crate::observations::ObservationSet;
use crate::optim::{lbfgs_minimize, pack, run_rng, unpack, OptConfig, SolverOutcome};

/// Largest relative disagreement tolerated between the two paths at one point.
pub const SHARED_ITERATE_RTOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchScenario {
    pub order: usize,
    pub dim: usize,
    pub observations: usize,
    pub rank: usize,
    pub runs: usize,
    pub pgtol: f64,
    pub seed: u64,
}

impl BenchScenario {
    pub fn new(order: usize, dim: usize, observations: usize, rank: usize) -> Self {
        Self {
            order,
            dim,
            observations,
            rank,
            runs: 10,
            pgtol: 0.05,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 || self.dim == 0 || self.observations == 0 || self.rank == 0 || self.runs == 0 {
            return Err(Error::arg(format!("scenario dimensions must be positive (order ≥ 2): {self:?}")));
        }
        Ok(())
    }

    /// Observations with independent uniform(0, 1) coordinates.
    pub fn data(&self) -> Result<ObservationSet<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, u64::MAX));
        let v = Array2::from_shape_simple_fn((self.dim, self.observations), || rng.random::<f64>());
        ObservationSet::uniform(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: EvalKind,
    pub runs: usize,
    pub mean_time: f64,
    pub std_time: f64,
    /// Function/gradient evaluations per run.
    pub mean_iters: f64,
    pub std_iters: f64,
    pub mean_time_per_iter: f64,
    pub std_time_per_iter: f64,
}

impl MethodStats {
    fn from_runs(method: EvalKind, runs: &[SolverOutcome<f64>]) -> Self {
        let times: Vec<f64> = runs.iter().map(|r| r.wall_time).collect();
        let iters: Vec<f64> = runs.iter().map(|r| r.evaluations as f64).collect();
        let per: Vec<f64> = runs.iter().map(|r| r.wall_time / r.evaluations as f64).collect();
        let (mean_time, std_time) = mean_std(&times);
        let (mean_iters, std_iters) = mean_std(&iters);
        let (mean_time_per_iter, std_time_per_iter) = mean_std(&per);
        Self {
            method,
            runs: runs.len(),
            mean_time,
            std_time,
            mean_iters,
            std_iters,
            mean_time_per_iter,
            std_time_per_iter,
        }
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: BenchScenario,
    pub implicit: MethodStats,
    /// `None` when the dense tensor would exceed the element cap.
    pub explicit: Option<MethodStats>,
    pub notice: Option<String>,
    /// Seconds to form the dense tensor, reported separately.
    pub formation_time: Option<f64>,
    /// Largest `|f_explicit − f_implicit|` between final values of paired runs.
    pub max_paired_final_diff: Option<f64>,
    /// Largest relative disagreement of the two paths at common points.
    pub max_shared_rel_diff: Option<f64>,
}

/// Runs the scenario. Each run starts both methods from one initialization;
/// the two evaluators are also compared directly at the start and at both
/// final iterates, and any relative gap above [`SHARED_ITERATE_RTOL`] is an error.
pub fn run_bench(scenario: &BenchScenario, cap: ElementCap) -> Result<BenchReport> {
    scenario.validate()?;
    let (n, d, r) = (scenario.dim, scenario.order, scenario.rank);
    let obs = scenario.data()?;
    let opt = OptConfig { pgtol: scenario.pgtol, seed: scenario.seed, ..Default::default() };

    let (dense, notice, formation_time) = match cap.check(n, d) {
        Ok(_) => {
            let start = std::time::Instant::now();
            let x = DenseSymTensor::build_moment_with_cap(&obs, d, cap)?;
            (Some(x), None, Some(start.elapsed().as_secs_f64()))
        }
        Err(Error::Resource(msg)) => (None, Some(format!("explicit evaluation skipped: {msg}")), None),
        Err(e) => return Err(e),
    };

    let mut implicit_runs = Vec::new();
    let mut explicit_runs = Vec::new();
    let mut max_final: f64 = 0.0;
    let mut max_shared: f64 = 0.0;
    for i in 0..scenario.runs {
        let mut rng = run_rng(scenario.seed, i);
        let a0 = gaussian_init::<f64, _>(n, r, &mut rng)?;
        let x0 = pack(initial_weights::<f64>(r).view(), a0.view());

        let imp = |x: &ndarray::Array1<f64>| {
            let (w, a) = unpack(x.view(), n, r)?;
            let out = fg_implicit(&obs, w.view(), a.view(), d, 0.0)?;
            Ok((out.f, pack(out.grad_weights.view(), out.grad_factors.view())))
        };
        let imp_out = lbfgs_minimize(imp, x0.clone(), &opt)?;

        if let Some(x) = &dense {
            let exp = |v: &ndarray::Array1<f64>| {
                let (w, a) = unpack(v.view(), n, r)?;
                let out = fg_explicit(x, w.view(), a.view(), 0.0)?;
                Ok((out.f, pack(out.grad_weights.view(), out.grad_factors.view())))
            };
            let exp_out = lbfgs_minimize(exp, x0.clone(), &opt)?;
            max_final = max_final.max((exp_out.f - imp_out.f).abs());
            for point in [&x0, &imp_out.x, &exp_out.x] {
                let gap = shared_gap(&obs, x, point, n, r)?;
                if gap > SHARED_ITERATE_RTOL {
                    return Err(Error::Validation(format!(
                        "run {i}: explicit and implicit evaluations differ by relative {gap:e}"
                    )));
                }
                max_shared = max_shared.max(gap);
            }
            explicit_runs.push(exp_out);
        }
        implicit_runs.push(imp_out);
    }

    let explicit = dense.as_ref().map(|_| MethodStats::from_runs(EvalKind::Explicit, &explicit_runs));
    Ok(BenchReport {
        scenario: scenario.clone(),
        implicit: MethodStats::from_runs(EvalKind::Implicit, &implicit_runs),
        explicit,
        notice,
        formation_time,
        max_paired_final_diff: dense.as_ref().map(|_| max_final),
        max_shared_rel_diff: dense.as_ref().map(|_| max_shared),
    })
}

/// Largest difference between the two evaluations at `point`, relative to
/// the magnitude of the terms each quantity is assembled from. Near a
/// stationary point the gradient is a small difference of large terms, so
/// its own size is not a usable scale.
fn shared_gap(
    obs: &ObservationSet<f64>,
    x: &DenseSymTensor<f64>,
    point: &ndarray::Array1<f64>,
    n: usize,
    r: usize,
) -> Result<f64> {
    let d = x.order();
    let (w, a) = unpack(point.view(), n, r)?;
    let e = fg_explicit(x, w.view(), a.view(), 0.0)?;
    let i = fg_implicit(obs, w.view(), a.view(), d, 0.0)?;

    let cache = GramCache::new(ttsv_batch(obs, a.view(), d)?, a.view(), w.view(), d)?;
    let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
    let f_scale = w.dot(&cache.u).abs() + 2.0 * w.dot(&cache.w).abs();
    let lambda_scale = 2.0 * max_abs(&mut cache.w.iter().chain(cache.u.iter()).copied());
    let data_term = &cache.y * &w;
    let model_term = a.dot(&(&cache.gram_pow * &w)) * &w;
    let factor_scale = 2.0 * d as f64 * max_abs(&mut data_term.iter().chain(model_term.iter()).copied());

    let fgap = (e.f - i.f).abs() / f_scale.max(f64::MIN_POSITIVE);
    let lgap = scaled_diff(e.grad_weights.iter(), i.grad_weights.iter(), lambda_scale);
    let agap = scaled_diff(e.grad_factors.iter(), i.grad_factors.iter(), factor_scale);
    Ok(fgap.max(lgap).max(agap))
}

fn scaled_diff<'a>(p: impl Iterator<Item = &'a f64>, q: impl Iterator<Item = &'a f64>, scale: f64) -> f64 {
    p.zip(q).fold(0.0, |m, (a, b)| m.max((a - b).abs() / scale))
}

/// One row per evaluated method.
pub fn write_bench_csv<W: Write>(out: W, report: &BenchReport) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        d: usize,
        n: usize,
        p: usize,
        r: usize,
        method: EvalKind,
        runs: usize,
        mean_time: f64,
        std_time: f64,
        mean_iters: f64,
        std_iters: f64,
        mean_time_per_iter: f64,
        std_time_per_iter: f64,
        max_paired_final_diff: Option<f64>,
        note: &'a str,
    }
    let s = &report.scenario;
    let mut w = csv::Writer::from_writer(out);
    for stats in report.explicit.iter().chain(std::iter::once(&report.implicit)) {
        w.serialize(Row {
            d: s.order,
            n: s.dim,
            p: s.observations,
            r: s.rank,
            method: stats.method,
            runs: stats.runs,
            mean_time: stats.mean_time,
            std_time: stats.std_time,
            mean_iters: stats.mean_iters,
            std_iters: stats.std_iters,
            mean_time_per_iter: stats.mean_time_per_iter,
            std_time_per_iter: stats.std_time_per_iter,
            max_paired_final_diff: report.max_paired_final_diff,
            note: report.notice.as_deref().unwrap_or(""),
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
