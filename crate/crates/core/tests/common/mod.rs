#![allow(dead_code)]

use momentcp::ObservationSet;
use ndarray::{Array1, Array2};
use rand::Rng;

pub struct Instance {
    pub obs: ObservationSet<f64>,
    pub weights: Array1<f64>,
    pub factors: Array2<f64>,
    pub order: usize,
}

/// Random well-scaled instance with non-uniform observation weights.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, p: usize, r: usize, d: usize) -> Instance {
    let v = Array2::from_shape_simple_fn((n, p), || rng.random_range(-1.0..1.0));
    let nu = Array1::from_shape_simple_fn(p, || rng.random_range(0.1..1.0));
    let lambda = Array1::from_shape_simple_fn(r, || rng.random_range(-1.5..1.5));
    let a = Array2::from_shape_simple_fn((n, r), || rng.random_range(-1.0..1.0));
    Instance {
        obs: ObservationSet::new(v, nu).unwrap(),
        weights: lambda,
        factors: a,
        order: d,
    }
}

/// Every multiindex of `{0..n}^d`, last index fastest.
pub fn multiindices(n: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(n.pow(d as u32));
    let mut idx = vec![0; d];
    loop {
        out.push(idx.clone());
        let mut k = d;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Double-double value `hi + lo`, accurate to about 2⁻¹⁰⁶ relative. Lets the
/// entrywise oracle sum heavily cancelling terms without its own rounding
/// dominating the comparison.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = Self::two_sum(self.hi, o.hi);
        Self::renorm(s, e + self.lo + o.lo)
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Self::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

fn dd_product(vals: impl Iterator<Item = f64>) -> Dd {
    vals.fold(Dd::from(1.0), |acc, v| acc.mul(Dd::from(v)))
}

fn moment_entry_dd(obs: &ObservationSet<f64>, idx: &[usize]) -> Dd {
    let v = obs.data();
    (0..obs.len()).fold(Dd::default(), |acc, l| {
        acc.add(Dd::from(obs.weights()[l]).mul(dd_product(idx.iter().map(|&i| v[[i, l]]))))
    })
}

fn model_entry_dd(weights: &Array1<f64>, factors: &Array2<f64>, idx: &[usize]) -> Dd {
    (0..weights.len()).fold(Dd::default(), |acc, j| {
        acc.add(Dd::from(weights[j]).mul(dd_product(idx.iter().map(|&i| factors[[i, j]]))))
    })
}

/// `Σ_ℓ ν_ℓ Π_k V[i_k, ℓ]`.
pub fn moment_entry(obs: &ObservationSet<f64>, idx: &[usize]) -> f64 {
    moment_entry_dd(obs, idx).value()
}

/// `Σ_j λ_j Π_k A[i_k, j]`.
pub fn model_entry(weights: &Array1<f64>, factors: &Array2<f64>, idx: &[usize]) -> f64 {
    model_entry_dd(weights, factors, idx).value()
}

/// Entry-by-entry reference values, independent of the library kernels.
pub struct Oracle {
    pub x_norm_sq: f64,
    pub m_norm_sq: f64,
    pub inner: f64,
    /// `Y[i, j] = Σ_{i_2..i_d} X[i, i_2, …] Π_k a_j[i_k]`.
    pub y: Array2<f64>,
}

pub fn oracle(inst: &Instance) -> Oracle {
    let (n, r) = inst.factors.dim();
    let d = inst.order;
    let (mut x_norm_sq, mut m_norm_sq, mut inner) = (Dd::default(), Dd::default(), Dd::default());
    let mut y = vec![Dd::default(); n * r];
    for idx in multiindices(n, d) {
        let x = moment_entry_dd(&inst.obs, &idx);
        let m = model_entry_dd(&inst.weights, &inst.factors, &idx);
        x_norm_sq = x_norm_sq.add(x.mul(x));
        m_norm_sq = m_norm_sq.add(m.mul(m));
        inner = inner.add(x.mul(m));
        for j in 0..r {
            let tail = dd_product(idx[1..].iter().map(|&i| inst.factors[[i, j]]));
            y[idx[0] * r + j] = y[idx[0] * r + j].add(x.mul(tail));
        }
    }
    Oracle {
        x_norm_sq: x_norm_sq.value(),
        m_norm_sq: m_norm_sq.value(),
        inner: inner.value(),
        y: Array2::from_shape_fn((n, r), |(i, j)| y[i * r + j].value()),
    }
}

/// Componentwise relative gap, with entries compared against `max(|b_i|, floor·max|b|)`.
pub fn rel_gap(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())) * floor;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
