//! Strong Wolfe line search: bracketing followed by cubic-interpolation zoom.

use ndarray::Array1;

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub(crate) struct Trial<T> {
    pub step: T,
    pub f: T,
    /// Directional derivative `gᵀd`; NaN when the evaluation failed.
    pub slope: T,
    pub x: Array1<T>,
    /// Absent for the starting point and for failed evaluations.
    pub grad: Option<Array1<T>>,
}

impl<T: Scalar> Trial<T> {
    fn failed(&self) -> bool {
        !self.f.is_finite()
    }
}

pub(crate) struct LineSearch<T> {
    pub c1: T,
    pub c2: T,
    pub max_evals: usize,
}

/// Accepted point (sufficient decrease always holds) and the number of
/// evaluations spent, or `None` when no acceptable step was found.
pub(crate) struct Outcome<T> {
    pub accepted: Option<Trial<T>>,
    pub evaluations: usize,
}

impl<T: Scalar> LineSearch<T> {
    pub fn search<F>(&self, fg: &mut F, x: &Array1<T>, f0: T, slope0: T, dir: &Array1<T>, step0: T) -> Outcome<T>
    where
        F: FnMut(&Array1<T>) -> Result<(T, Array1<T>)>,
    {
        let mut evals = 0usize;
        let dir_norm = dir.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut eval = |step: T, evals: &mut usize| -> Trial<T> {
            *evals += 1;
            let xt = x + &(dir * step);
            match fg(&xt) {
                Ok((f, g)) if f.is_finite() => {
                    let slope = g.dot(dir);
                    Trial { step, f, slope, x: xt, grad: Some(g) }
                }
                _ => Trial { step, f: T::infinity(), slope: T::nan(), x: xt, grad: None },
            }
        };
        let armijo = |t: &Trial<T>| !t.failed() && t.f <= f0 + self.c1 * t.step * slope0;
        let curvature = |t: &Trial<T>| t.slope.abs() <= -self.c2 * slope0;

        let origin = Trial {
            step: T::zero(),
            f: f0,
            slope: slope0,
            x: x.clone(),
            grad: None,
        };
        let mut prev = origin;
        let mut step = step0;
        let mut first = true;
        let (lo, hi) = loop {
            if evals >= self.max_evals {
                return self.finish(prev, evals);
            }
            let t = eval(step, &mut evals);
            if !armijo(&t) || (!first && t.f >= prev.f) {
                break (prev, t);
            }
            if curvature(&t) {
                return Outcome { accepted: Some(t), evaluations: evals };
            }
            if t.slope >= T::zero() {
                break (t, prev);
            }
            let lower = t.step + T::lit(0.01) * (t.step - prev.step);
            let upper = t.step * T::lit(10.0);
            step = cubic_minimizer(&prev, &t, Some((lower, upper)));
            prev = t;
            first = false;
        };

        let (mut lo, mut hi) = (lo, hi);
        while evals < self.max_evals {
            let width = (hi.step - lo.step).abs();
            if width * dir_norm <= T::epsilon() * (T::one() + lo.step.abs() * dir_norm) {
                break;
            }
            let (a, b) = if lo.step < hi.step { (lo.step, hi.step) } else { (hi.step, lo.step) };
            let margin = T::lit(0.1) * width;
            let trial_step = if hi.failed() {
                (lo.step + hi.step) * T::lit(0.5)
            } else {
                cubic_minimizer(&lo, &hi, None).max(a + margin).min(b - margin)
            };
            let t = eval(trial_step, &mut evals);
            if !armijo(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if curvature(&t) {
                    return Outcome { accepted: Some(t), evaluations: evals };
                }
                if t.slope * (hi.step - lo.step) >= T::zero() {
                    hi = lo;
                }
                lo = t;
            }
        }
        self.finish(lo, evals)
    }

    /// Falls back to the best sufficient-decrease point seen, if any.
    fn finish(&self, best: Trial<T>, evaluations: usize) -> Outcome<T> {
        let accepted = (best.step > T::zero() && best.grad.is_some()).then_some(best);
        Outcome { accepted, evaluations }
    }
}

/// Minimizer of the cubic through two points with slopes, clamped to
/// `bounds` (default: the interval between the points). Falls back to the
/// midpoint when the cubic has no real minimizer.
fn cubic_minimizer<T: Scalar>(p: &Trial<T>, q: &Trial<T>, bounds: Option<(T, T)>) -> T {
    let (x1, f1, g1) = (p.step, p.f, p.slope);
    let (x2, f2, g2) = (q.step, q.f, q.slope);
    let (lo, hi) = bounds.unwrap_or(if x1 < x2 { (x1, x2) } else { (x2, x1) });
    let three = T::lit(3.0);
    let d1 = g1 + g2 - three * (f1 - f2) / (x1 - x2);
    let disc = d1 * d1 - g1 * g2;
    let candidate = if disc >= T::zero() {
        let d2 = disc.sqrt();
        if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + T::lit(2.0) * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + T::lit(2.0) * d2))
        }
    } else {
        T::nan()
    };
    if candidate.is_finite() {
        candidate.max(lo).min(hi)
    } else {
        (lo + hi) * T::lit(0.5)
    }
}
