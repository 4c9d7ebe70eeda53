use std::collections::VecDeque;
use std::time::Instant;

use ndarray::{Array1, ArrayView1};

use super::line_search::LineSearch;
use super::{OptConfig, SolverOutcome, Termination, TracePoint};
use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::scalar::Scalar;

/// Curvature pairs `(s, y, 1/sᵀy)` for the two-loop recursion, oldest first.
#[derive(Clone, Debug)]
pub struct LbfgsMemory<T> {
    capacity: usize,
    pairs: VecDeque<(Array1<T>, Array1<T>, T)>,
}

impl<T: Scalar> LbfgsMemory<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores the pair if `sᵀy > 0`; returns whether it was kept.
    pub fn push(&mut self, s: Array1<T>, y: Array1<T>) -> bool {
        let sy = s.dot(&y);
        if !(sy > T::epsilon() * y.dot(&y)) {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, T::one() / sy));
        true
    }

    /// Initial inverse-Hessian scale `sᵀy / yᵀy` from the newest pair.
    pub fn gamma(&self) -> T {
        self.pairs
            .back()
            .map(|(s, y, _)| s.dot(y) / y.dot(y))
            .unwrap_or_else(T::one)
    }

    /// `-H g` by the two-loop recursion.
    pub fn direction(&self, grad: ArrayView1<'_, T>) -> Array1<T> {
        let mut q = grad.to_owned();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = *rho * s.dot(&q);
            q.scaled_add(-a, y);
            alphas.push(a);
        }
        q *= self.gamma();
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * y.dot(&q);
            q.scaled_add(a - b, s);
        }
        q.mapv_inplace(|v| -v);
        q
    }
}

/// Unconstrained limited-memory BFGS with a strong Wolfe line search.
///
/// Stops when `‖∇f‖_∞ ≤ pgtol`, when either iteration cap is reached, or
/// when the line search cannot find a sufficient-decrease step even along
/// steepest descent. `evaluations` in the outcome counts every `fg` call.
pub fn lbfgs_minimize<T, F>(mut fg: F, x0: Array1<T>, cfg: &OptConfig) -> Result<SolverOutcome<T>>
where
    T: Scalar,
    F: FnMut(&Array1<T>) -> Result<(T, Array1<T>)>,
{
    cfg.validate()?;
    let start = Instant::now();
    let pgtol = T::lit(cfg.pgtol);
    let search = LineSearch {
        c1: T::lit(cfg.c1),
        c2: T::lit(cfg.c2),
        max_evals: cfg.max_line_search,
    };

    let (mut f, mut g) = fg(&x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) || g.len() != x0.len() {
        return Err(Error::arg("objective is not finite at the starting point"));
    }
    let mut x = x0;
    let mut evaluations = 1usize;
    let mut iterations = 0usize;
    let mut memory = LbfgsMemory::new(cfg.memory);
    let mut trace = vec![TracePoint {
        evaluation: evaluations,
        f: f.to_f64_lossy(),
        time: start.elapsed().as_secs_f64(),
    }];

    let reason = loop {
        if inf_norm(g.view()) <= pgtol {
            break Termination::Tolerance;
        }
        if iterations >= cfg.max_iters || evaluations >= cfg.max_total_iters {
            break Termination::IterationCap;
        }

        let mut accepted = None;
        // Second attempt, if any, restarts from steepest descent.
        for _attempt in 0..2 {
            let mut dir = memory.direction(g.view());
            let mut slope = g.dot(&dir);
            if !(slope < T::zero()) {
                memory.clear();
                dir = g.mapv(|v| -v);
                slope = -g.dot(&g);
            }
            let step0 = if memory.is_empty() {
                T::one().min(T::one() / g.dot(&g).sqrt())
            } else {
                T::one()
            };
            let budget = cfg.max_total_iters - evaluations;
            let ls = LineSearch {
                max_evals: search.max_evals.min(budget),
                ..search
            };
            let out = ls.search(&mut fg, &x, f, slope, &dir, step0);
            evaluations += out.evaluations;
            if out.accepted.is_some() || memory.is_empty() || evaluations >= cfg.max_total_iters {
                accepted = out.accepted;
                break;
            }
            memory.clear();
        }

        let Some(trial) = accepted else {
            break if evaluations >= cfg.max_total_iters {
                Termination::IterationCap
            } else {
                Termination::LineSearchFailure
            };
        };
        let g_new = trial.grad.expect("accepted trials carry a gradient");
        memory.push(&trial.x - &x, &g_new - &g);
        x = trial.x;
        f = trial.f;
        g = g_new;
        iterations += 1;
        trace.push(TracePoint {
            evaluation: evaluations,
            f: f.to_f64_lossy(),
            time: start.elapsed().as_secs_f64(),
        });
    };

    Ok(SolverOutcome {
        grad_inf_norm: inf_norm(g.view()),
        x,
        f,
        evaluations,
        iterations,
        reason,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    /// Dense BFGS inverse-Hessian built from the same pairs and initial
    /// scale the limited-memory recursion uses.
    fn dense_bfgs_direction(pairs: &[(Array1<f64>, Array1<f64>)], gamma: f64, g: &Array1<f64>) -> Array1<f64> {
        let n = g.len();
        let mut h = Array2::<f64>::eye(n) * gamma;
        for (s, y) in pairs {
            let rho = 1.0 / s.dot(y);
            let i = Array2::<f64>::eye(n);
            let sy = outer(s, y);
            let ys = outer(y, s);
            let left = &i - &(sy * rho);
            let right = &i - &(ys * rho);
            h = left.dot(&h).dot(&right) + outer(s, s) * rho;
        }
        -h.dot(g)
    }

    fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
        Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
    }

    fn quadratic<'a>(h: &'a Array2<f64>, c: &'a Array1<f64>) -> impl FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)> + 'a {
        move |x| {
            let r = x - c;
            let hr = h.dot(&r);
            Ok((0.5 * r.dot(&hr), hr))
        }
    }

    #[test]
    fn two_loop_matches_dense_bfgs_on_quadratic() {
        let h = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let c = array![1.0, -2.0, 0.5];
        let mut fg = quadratic(&h, &c);
        let mut memory = LbfgsMemory::new(5);
        let mut pairs = Vec::new();
        let mut x = array![0.3, 0.9, -1.2];
        let (_, mut g) = fg(&x).unwrap();
        for _ in 0..5 {
            let d = memory.direction(g.view());
            let oracle = dense_bfgs_direction(&pairs, memory.gamma(), &g);
            for (a, b) in d.iter().zip(oracle.iter()) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3), "{d} vs {oracle}");
            }
            // Fixed, non-exact step so the pairs stay informative.
            let x_new = &x + &(&d * 0.7);
            let (_, g_new) = fg(&x_new).unwrap();
            let (s, y) = (&x_new - &x, &g_new - &g);
            if g_new.dot(&g_new) < 1e-24 {
                break;
            }
            assert!(memory.push(s.clone(), y.clone()));
            pairs.push((s, y));
            x = x_new;
            g = g_new;
        }
    }

    #[test]
    fn memory_discards_oldest_pair() {
        let mut m = LbfgsMemory::new(2);
        for k in 1..=3 {
            let v = array![k as f64, 0.0];
            assert!(m.push(v.clone(), v));
        }
        assert_eq!(m.len(), 2);
        assert!(!m.push(array![1.0, 0.0], array![-1.0, 0.0]));
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let n = 8;
        let c = Array1::from_shape_fn(n, |i| (i as f64 * 0.7).sin() * 3.0);
        let fg = |x: &Array1<f64>| {
            let r = x - &c;
            Ok((r.dot(&r), r * 2.0))
        };
        let x0 = Array1::from_shape_fn(n, |i| (i as f64 * 1.3).cos() * 5.0);
        let cfg = OptConfig { pgtol: 1e-9, ..Default::default() };
        let out = lbfgs_minimize(fg, x0, &cfg).unwrap();
        assert_eq!(out.reason, Termination::Tolerance);
        assert!(out.iterations <= 50);
        let err = (&out.x - &c).dot(&(&out.x - &c)).sqrt();
        assert!(err <= 1e-6, "error {err}");
    }

    #[test]
    fn rosenbrock_trace_is_nonincreasing() {
        let fg = |x: &Array1<f64>| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = array![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((f, g))
        };
        let cfg = OptConfig { pgtol: 1e-8, ..Default::default() };
        let out = lbfgs_minimize(fg, array![-1.2, 1.0], &cfg).unwrap();
        assert_eq!(out.reason, Termination::Tolerance);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
        assert!(out.trace.windows(2).all(|w| w[1].f <= w[0].f));
        assert!(out.trace.windows(2).all(|w| w[1].time >= w[0].time));
    }

    #[test]
    fn infinite_tolerance_returns_immediately() {
        let fg = |x: &Array1<f64>| Ok((x.dot(x), x * 2.0));
        let cfg = OptConfig { pgtol: f64::INFINITY, ..Default::default() };
        let out = lbfgs_minimize(fg, array![1.0, 2.0], &cfg).unwrap();
        assert_eq!(out.reason, Termination::Tolerance);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.evaluations, 1);
        assert_eq!(out.x, array![1.0, 2.0]);
    }

    #[test]
    fn caps_are_respected() {
        let fg = |x: &Array1<f64>| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = array![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((f, g))
        };
        let cfg = OptConfig { pgtol: 1e-12, max_iters: 3, ..Default::default() };
        let out = lbfgs_minimize(fg, array![-1.2, 1.0], &cfg).unwrap();
        assert_eq!(out.reason, Termination::IterationCap);
        assert_eq!(out.iterations, 3);
        let cfg = OptConfig { pgtol: 1e-12, max_total_iters: 7, ..Default::default() };
        let out = lbfgs_minimize(fg, array![-1.2, 1.0], &cfg).unwrap();
        assert_eq!(out.reason, Termination::IterationCap);
        assert!(out.evaluations <= 7);
    }

    #[test]
    fn nonfinite_start_is_an_error() {
        let fg = |_: &Array1<f64>| Ok((f64::NAN, array![0.0]));
        assert!(lbfgs_minimize(fg, array![0.0], &OptConfig::default()).is_err());
    }
}
