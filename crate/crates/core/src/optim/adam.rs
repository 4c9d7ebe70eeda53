use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pack, unpack, RunReport, Termination, TracePoint};
use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::objective::{fg_implicit, fg_stochastic};
use crate::observations::ObservationSet;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    /// Step size after the first epoch without improvement.
    pub reduced_step_size: f64,
    /// Stochastic updates between function-value estimates.
    pub epoch_len: usize,
    /// Observations drawn (with replacement) per update.
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Size of the fixed observation subset used to estimate `f`.
    pub estimate_size: usize,
    /// Seed selecting that subset; shared across runs so estimates compare.
    pub estimate_seed: u64,
    pub max_epochs: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            reduced_step_size: 0.001,
            epoch_len: 100,
            batch_size: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            estimate_size: 1000,
            estimate_seed: 0,
            max_epochs: 1000,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epoch_len == 0 {
            return Err(Error::arg("epoch length must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        if self.estimate_size == 0 {
            return Err(Error::arg("estimate sample size must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.reduced_step_size > 0.0) {
            return Err(Error::arg("step sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::arg("Adam decay rates must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Adam on stochastic objective estimates with epoch-level safeguarding.
///
/// Every update uses a fresh sample of `batch_size` observations. After each
/// epoch the shifted objective is estimated on a fixed subset. The first
/// epoch that fails to lower the estimate rolls back to the previous
/// epoch's iterate and switches to the reduced step size (restarting the
/// moment estimates); the second ends the run at the previous epoch's
/// iterate.
pub fn adam_minimize<T: Scalar, R: Rng + ?Sized>(
    obs: &ObservationSet<T>,
    d: usize,
    rank: usize,
    x0: Array1<T>,
    cfg: &AdamConfig,
    rng: &mut R,
) -> Result<RunReport<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let n = obs.dim();
    unpack(x0.view(), n, rank)?;
    if !obs.is_uniform() {
        return Err(Error::arg(
            "stochastic optimization needs uniformly weighted observations",
        ));
    }

    let estimate_obs = estimate_subset(obs, cfg.estimate_size, cfg.estimate_seed)?;
    let estimate = |x: ArrayView1<'_, T>| -> Result<(T, T)> {
        let (weights, factors) = unpack(x, n, rank)?;
        let out = fg_implicit(&estimate_obs, weights.view(), factors.view(), d, T::zero())?;
        let g = pack(out.grad_weights.view(), out.grad_factors.view());
        Ok((out.f, inf_norm(g.view())))
    };

    let beta1 = T::lit(cfg.beta1);
    let beta2 = T::lit(cfg.beta2);
    let eps = T::lit(cfg.epsilon);
    let mut step_size = T::lit(cfg.step_size);

    let (mut best_f, mut best_gnorm) = estimate(x0.view())?;
    let mut best_x = x0.clone();
    let mut x = x0;
    let mut m = Array1::<T>::zeros(x.len());
    let mut v = Array1::<T>::zeros(x.len());
    let mut t = 0i32;
    let mut updates = 0usize;
    let mut reduced = false;
    let mut trace = vec![TracePoint {
        evaluation: 0,
        f: best_f.to_f64_lossy(),
        time: start.elapsed().as_secs_f64(),
    }];

    let mut reason = Termination::IterationCap;
    for _epoch in 0..cfg.max_epochs {
        for _ in 0..cfg.epoch_len {
            let (weights, factors) = unpack(x.view(), n, rank)?;
            let out = fg_stochastic(obs, weights.view(), factors.view(), d, T::zero(), cfg.batch_size, rng)?;
            let g = pack(out.grad_weights.view(), out.grad_factors.view());
            t += 1;
            updates += 1;
            let bias1 = T::one() - beta1.powi(t);
            let bias2 = T::one() - beta2.powi(t);
            ndarray::Zip::from(&mut x)
                .and(&mut m)
                .and(&mut v)
                .and(&g)
                .for_each(|xi, mi, vi, &gi| {
                    *mi = beta1 * *mi + (T::one() - beta1) * gi;
                    *vi = beta2 * *vi + (T::one() - beta2) * gi * gi;
                    let m_hat = *mi / bias1;
                    let v_hat = *vi / bias2;
                    *xi -= step_size * m_hat / (v_hat.sqrt() + eps);
                });
        }

        let (f_est, gnorm) = estimate(x.view())?;
        trace.push(TracePoint {
            evaluation: updates,
            f: f_est.to_f64_lossy(),
            time: start.elapsed().as_secs_f64(),
        });
        if f_est < best_f {
            best_f = f_est;
            best_gnorm = gnorm;
            best_x.assign(&x);
            continue;
        }
        if reduced {
            reason = Termination::LearningRateExhausted;
            break;
        }
        reduced = true;
        step_size = T::lit(cfg.reduced_step_size);
        x.assign(&best_x);
        m.fill(T::zero());
        v.fill(T::zero());
        t = 0;
    }

    let (weights, factors) = unpack(best_x.view(), n, rank)?;
    Ok(RunReport {
        weights,
        factors,
        f: best_f,
        grad_inf_norm: best_gnorm,
        evaluations: updates,
        iterations: updates,
        wall_time: start.elapsed().as_secs_f64(),
        reason,
        seed: 0,
        run_index: 0,
        trace,
    })
}

/// Fixed subset (without replacement) used for objective estimates.
pub(crate) fn estimate_subset<T: Scalar>(obs: &ObservationSet<T>, size: usize, seed: u64) -> Result<ObservationSet<T>> {
    let p = obs.len();
    if size >= p {
        return obs.select_uniform(&(0..p).collect::<Vec<_>>());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, p, size).into_vec();
    idx.sort_unstable();
    obs.select_uniform(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn small_data() -> ObservationSet<f64> {
        let v = Array2::from_shape_fn((4, 40), |(i, l)| 0.5 + 0.05 * ((l * 7 + i * 3) % 5) as f64 - 0.1);
        ObservationSet::uniform(v).unwrap()
    }

    #[test]
    fn zero_epochs_returns_start() {
        let obs = small_data();
        let x0 = array![0.3, 1.0, 0.0, 0.0, 0.0];
        let cfg = AdamConfig { max_epochs: 0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let report = adam_minimize(&obs, 3, 1, x0.clone(), &cfg, &mut rng).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(pack(report.weights.view(), report.factors.view()), x0);
        assert_eq!(report.reason, Termination::IterationCap);
    }

    #[test]
    fn rejects_weighted_observations() {
        let obs = ObservationSet::new(array![[1.0, 2.0]], array![0.3, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = adam_minimize(&obs, 3, 1, array![1.0, 1.0], &AdamConfig::default(), &mut rng);
        assert!(err.is_err());
    }

    #[test]
    fn returned_iterate_is_last_improving_epoch() {
        let obs = small_data();
        let x0 = array![0.1, 0.9, 0.1, 0.3, 0.2];
        let cfg = AdamConfig { max_epochs: 200, epoch_len: 10, batch_size: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let report = adam_minimize(&obs, 3, 1, x0, &cfg, &mut rng).unwrap();
        // The reported value is the smallest epoch estimate, and it belongs
        // to the returned variables.
        let min_trace = report.trace.iter().map(|p| p.f).fold(f64::INFINITY, f64::min);
        assert_eq!(report.f, min_trace);
        let est = estimate_subset(&obs, cfg.estimate_size, cfg.estimate_seed).unwrap();
        let again = fg_implicit(&est, report.weights.view(), report.factors.view(), 3, 0.0).unwrap();
        assert_eq!(again.f.to_bits(), report.f.to_bits());
    }

    #[test]
    fn estimate_subset_is_fixed_by_seed() {
        let v = Array2::from_shape_fn((2, 50), |(i, l)| (i * 50 + l) as f64);
        let obs = ObservationSet::uniform(v).unwrap();
        let a = estimate_subset(&obs, 10, 4).unwrap();
        let b = estimate_subset(&obs, 10, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_eq!(estimate_subset(&obs, 500, 4).unwrap().len(), 50);
    }
}
