use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::RunReport;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Independent generator for run `index` of a job seeded with `seed`.
pub fn run_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone, Debug)]
pub struct MultistartReport<T> {
    pub best_index: usize,
    /// Every run in index order; failed runs keep their error message.
    pub runs: Vec<std::result::Result<RunReport<T>, String>>,
}

impl<T: Scalar> MultistartReport<T> {
    pub fn best(&self) -> &RunReport<T> {
        self.runs[self.best_index]
            .as_ref()
            .expect("best run always succeeded")
    }

    pub fn successful(&self) -> impl Iterator<Item = &RunReport<T>> {
        self.runs.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn total_time(&self) -> f64 {
        self.successful().map(|r| r.wall_time).sum()
    }
}

/// Runs `k` initializations and solves, keeping the lowest final `f`.
///
/// Run `i` draws both its starting point and any solver randomness from
/// [`run_rng`]`(seed, i)`. Runs execute on the current rayon pool; results
/// are ordered by index, so the report does not depend on scheduling. Ties
/// go to the lower index.
pub fn multistart<T, X, I, S>(k: usize, seed: u64, init: I, minimize: S) -> Result<MultistartReport<T>>
where
    T: Scalar,
    X: Send,
    I: Fn(&mut ChaCha8Rng) -> Result<X> + Sync,
    S: Fn(X, &mut ChaCha8Rng) -> Result<RunReport<T>> + Sync,
{
    if k == 0 {
        return Err(Error::arg("multistart needs at least one run"));
    }
    let runs: Vec<std::result::Result<RunReport<T>, String>> = (0..k)
        .into_par_iter()
        .map(|index| {
            let mut rng = run_rng(seed, index);
            let x0 = init(&mut rng)?;
            let mut report = minimize(x0, &mut rng)?;
            report.seed = seed;
            report.run_index = index;
            Ok(report)
        })
        .map(|r: Result<RunReport<T>>| r.map_err(|e| e.to_string()))
        .collect();

    let best_index = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().map(|rep| (i, rep.f)))
        .fold(None::<(usize, T)>, |best, (i, f)| match best {
            Some((_, bf)) if !(f < bf) => best,
            _ => Some((i, f)),
        })
        .map(|(i, _)| i);

    match best_index {
        Some(best_index) => Ok(MultistartReport { best_index, runs }),
        None => Err(Error::AllRunsFailed {
            runs: k,
            reasons: runs
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.as_ref().err().map(|e| format!("run {i}: {e}")))
                .collect::<Vec<_>>()
                .join("; "),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{lbfgs_minimize, OptConfig};
    use ndarray::{array, Array1};
    use rand::Rng;

    fn solve(x0: Array1<f64>, _rng: &mut ChaCha8Rng) -> Result<RunReport<f64>> {
        // Double well: minima at ±1 with different depths.
        let fg = |x: &Array1<f64>| {
            let t = x[0];
            Ok(((t * t - 1.0).powi(2) + 0.3 * t, array![4.0 * t * (t * t - 1.0) + 0.3]))
        };
        let out = lbfgs_minimize(fg, x0, &OptConfig { pgtol: 1e-10, ..Default::default() })?;
        let f = out.f;
        Ok(RunReport {
            weights: out.x.clone(),
            factors: ndarray::Array2::zeros((1, 1)),
            f,
            grad_inf_norm: out.grad_inf_norm,
            evaluations: out.evaluations,
            iterations: out.iterations,
            wall_time: out.wall_time,
            reason: out.reason,
            seed: 0,
            run_index: 0,
            trace: out.trace,
        })
    }

    fn init(rng: &mut ChaCha8Rng) -> Result<Array1<f64>> {
        Ok(array![rng.random_range(-2.0..2.0)])
    }

    #[test]
    fn picks_the_lowest_run_and_is_deterministic() {
        let a = multistart(8, 42, init, solve).unwrap();
        let b = multistart(8, 42, init, solve).unwrap();
        assert_eq!(a.best_index, b.best_index);
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert!(x.as_ref().unwrap().same_result(y.as_ref().unwrap()));
        }
        let best = a.best().f;
        assert!(a.successful().all(|r| r.f >= best));
        assert!(a.best().weights[0] < 0.0, "deeper well is at -1");
        assert_eq!(a.runs.len(), 8);
        assert!(a.successful().enumerate().all(|(i, r)| r.run_index == i && r.seed == 42));
    }

    #[test]
    fn single_start_equals_single_run() {
        let report = multistart(1, 5, init, solve).unwrap();
        let mut rng = run_rng(5, 0);
        let x0 = init(&mut rng).unwrap();
        let mut direct = solve(x0, &mut rng).unwrap();
        direct.seed = 5;
        assert!(report.best().same_result(&direct));
    }

    #[test]
    fn streams_differ_per_run() {
        let a: f64 = run_rng(1, 0).random();
        let b: f64 = run_rng(1, 1).random();
        assert_ne!(a, b);
    }

    #[test]
    fn all_failures_are_aggregated() {
        let err = multistart::<f64, (), _, _>(3, 0, |_| Ok(()), |_, _| Err(Error::arg("boom"))).unwrap_err();
        match err {
            Error::AllRunsFailed { runs, reasons } => {
                assert_eq!(runs, 3);
                assert!(reasons.contains("run 2: invalid argument: boom"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(multistart::<f64, (), _, _>(0, 0, |_| Ok(()), |_, _| Err(Error::arg("x"))).is_err());
    }
}
