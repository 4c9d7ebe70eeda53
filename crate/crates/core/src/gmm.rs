//! Spherical Gaussian mixtures with correlated means, and the starting
//! points used to decompose their moments.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::implicit::ttsv_batch;
use crate::linalg::{cholesky_upper, normalize_columns, orthonormalize};
use crate::observations::ObservationSet;
use crate::optim::pack;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub dim: usize,
    pub components: usize,
    pub sigma: f64,
    pub samples_per_component: usize,
    /// Common inner product between distinct unit-norm means.
    pub congruence: f64,
}

impl GmmSpec {
    pub fn new(dim: usize, components: usize, sigma: f64) -> Self {
        Self {
            dim,
            components,
            sigma,
            samples_per_component: 250,
            congruence: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.components > self.dim {
            return Err(Error::arg(format!(
                "need 1 ≤ r ≤ n, got r={} n={}",
                self.components, self.dim
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::arg(format!("σ must be finite and nonnegative, got {}", self.sigma)));
        }
        if !(self.congruence.abs() < 1.0) {
            return Err(Error::arg(format!("congruence must satisfy |c| < 1, got {}", self.congruence)));
        }
        if self.samples_per_component == 0 {
            return Err(Error::arg("need at least one sample per component"));
        }
        Ok(())
    }

    pub fn observations(&self) -> usize {
        self.samples_per_component * self.components
    }

    /// Draws means and `r · samples_per_component` observations.
    pub fn generate<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GmmSample<T>> {
        self.validate()?;
        let means = correlated_means(self.dim, self.components, self.congruence, rng)?;
        sample_gmm(means, self.sigma, self.observations(), rng)
    }
}

/// Mixture draw. `labels` are kept for evaluation only; solvers see `obs`.
#[derive(Clone, Debug)]
pub struct GmmSample<T> {
    pub means: Array2<T>,
    pub obs: ObservationSet<T>,
    pub labels: Vec<usize>,
}

fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    // Filled column by column so a column's draws do not depend on `cols`.
    let mut m = Array2::zeros((rows, cols));
    for mut col in m.columns_mut() {
        for v in col.iter_mut() {
            *v = T::lit(rng.sample::<f64, _>(StandardNormal));
        }
    }
    m
}

/// Unit-norm columns with every pairwise inner product equal to `c`:
/// a random orthonormal basis times the upper Cholesky factor of the
/// `r × r` matrix with unit diagonal and `c` elsewhere.
pub fn correlated_means<T: Scalar, R: Rng + ?Sized>(n: usize, r: usize, c: f64, rng: &mut R) -> Result<Array2<T>> {
    if r == 0 || r > n {
        return Err(Error::arg(format!("need 1 ≤ r ≤ n, got r={r} n={n}")));
    }
    if !(c.abs() < 1.0) {
        return Err(Error::arg(format!("congruence must satisfy |c| < 1, got {c}")));
    }
    let gram = Array2::from_shape_fn((r, r), |(i, j)| if i == j { T::one() } else { T::lit(c) });
    let upper = cholesky_upper(gram.view())
        .map_err(|_| Error::arg(format!("congruence {c} gives an indefinite Gram matrix for r={r}")))?;
    let basis = orthonormalize(gaussian_matrix::<T, _>(n, r, rng).view())?;
    Ok(basis.dot(&upper))
}

/// `p` draws from `N(μ_j, σ²I)`; observation `ℓ` comes from component
/// `ℓ mod r`, so counts are equal when `r` divides `p`.
pub fn sample_gmm<T: Scalar, R: Rng + ?Sized>(means: Array2<T>, sigma: f64, p: usize, rng: &mut R) -> Result<GmmSample<T>> {
    let (n, r) = means.dim();
    if r == 0 || p == 0 {
        return Err(Error::arg("need at least one component and one observation"));
    }
    let labels: Vec<usize> = (0..p).map(|l| l % r).collect();
    let sigma = T::lit(sigma);
    let mut v = Array2::zeros((n, p));
    for (l, mut col) in v.columns_mut().into_iter().enumerate() {
        let mu = means.column(labels[l]);
        for (x, &m) in col.iter_mut().zip(mu) {
            *x = m + sigma * T::lit(rng.sample::<f64, _>(StandardNormal));
        }
    }
    let obs = ObservationSet::uniform(v)?;
    Ok(GmmSample { means, obs, labels })
}

/// Randomized range finder start: `V·Ω` with Gaussian `Ω` (`p × r̂`), columns normalized.
pub fn rrf_init<T: Scalar, R: Rng + ?Sized>(obs: &ObservationSet<T>, rank: usize, rng: &mut R) -> Result<Array2<T>> {
    if rank == 0 {
        return Err(Error::arg("rank must be at least 1"));
    }
    let omega = gaussian_matrix::<T, _>(obs.len(), rank, rng);
    let mut a = obs.data().dot(&omega);
    normalize_columns(&mut a)?;
    Ok(a)
}

/// Standard normal `n × r̂` matrix with normalized columns.
pub fn gaussian_init<T: Scalar, R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> Result<Array2<T>> {
    if rank == 0 || n == 0 {
        return Err(Error::arg("dimension and rank must be at least 1"));
    }
    let mut a = gaussian_matrix::<T, _>(n, rank, rng);
    normalize_columns(&mut a)?;
    Ok(a)
}

/// Starting weights paired with the initial factors.
pub fn initial_weights<T: Scalar>(rank: usize) -> Array1<T> {
    Array1::from_elem(rank, T::one())
}

/// Flips each column whose rank-1 term anticorrelates with the data, so that
/// `⟨X, a_j^{⊗d}⟩ ≥ 0`. For odd `d` the sign of a column decides the sign of
/// its term, and a unit weight on a wrongly signed column tends to stall in
/// a poor local minimum. A no-op for even `d`.
pub fn orient_to_data<T: Scalar>(obs: &ObservationSet<T>, factors: &mut Array2<T>, d: usize) -> Result<()> {
    if d.is_multiple_of(2) {
        return Ok(());
    }
    let y = ttsv_batch(obs, factors.view(), d)?;
    for (mut col, ycol) in factors.columns_mut().into_iter().zip(y.columns()) {
        if col.dot(&ycol) < T::zero() {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(())
}

/// Packed start for the solvers: oriented factors with unit weights.
pub fn starting_point<T: Scalar>(obs: &ObservationSet<T>, mut factors: Array2<T>, d: usize) -> Result<Array1<T>> {
    orient_to_data(obs, &mut factors, d)?;
    Ok(pack(initial_weights::<T>(factors.ncols()).view(), factors.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn assert_gram(means: &Array2<f64>, c: f64) {
        let g = means.t().dot(means);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let want = if i == j { 1.0 } else { c };
                assert!((g[[i, j]] - want).abs() < 1e-10, "G[{i},{j}] = {}", g[[i, j]]);
            }
        }
    }

    #[test]
    fn orthonormal_when_uncorrelated() {
        let m = correlated_means::<f64, _>(7, 4, 0.0, &mut rng(1)).unwrap();
        assert_gram(&m, 0.0);
    }

    #[test]
    fn sixty_degrees_at_one_half() {
        let m = correlated_means::<f64, _>(5, 2, 0.5, &mut rng(2)).unwrap();
        let cos = m.column(0).dot(&m.column(1));
        assert!((cos.acos().to_degrees() - 60.0).abs() < 1e-8);
    }

    #[test]
    fn gram_property_across_sizes() {
        for (n, r) in [(1, 1), (10, 10), (50, 3), (500, 10)] {
            for c in [0.0, 0.5, 0.9] {
                let m = correlated_means::<f64, _>(n, r, c, &mut rng(n as u64 * 31 + r as u64)).unwrap();
                assert_gram(&m, c);
            }
        }
    }

    #[test]
    fn indefinite_congruence_is_rejected() {
        // c ≤ −1/(r−1) is not positive definite.
        assert!(correlated_means::<f64, _>(5, 3, -0.5, &mut rng(0)).is_err());
        assert!(correlated_means::<f64, _>(5, 3, -0.49, &mut rng(0)).is_ok());
        assert!(correlated_means::<f64, _>(2, 3, 0.1, &mut rng(0)).is_err());
        assert!(correlated_means::<f64, _>(3, 2, 1.0, &mut rng(0)).is_err());
    }

    #[test]
    fn noiseless_samples_are_means() {
        let means = correlated_means::<f64, _>(6, 3, 0.5, &mut rng(3)).unwrap();
        let s = sample_gmm(means.clone(), 0.0, 10, &mut rng(4)).unwrap();
        assert_eq!(s.obs.len(), 10);
        for (l, col) in s.obs.data().columns().into_iter().enumerate() {
            assert_eq!(col, means.column(s.labels[l]));
        }
        let counts: Vec<usize> = (0..3).map(|j| s.labels.iter().filter(|&&x| x == j).count()).collect();
        assert_eq!(counts, vec![4, 3, 3]);

        let one = correlated_means::<f64, _>(4, 1, 0.5, &mut rng(5)).unwrap();
        let s = sample_gmm(one.clone(), 0.0, 5, &mut rng(6)).unwrap();
        assert!(s.obs.data().columns().into_iter().all(|c| c == one.column(0)));
    }

    #[test]
    fn rrf_columns_lie_in_data_range() {
        let spec = GmmSpec { samples_per_component: 4, ..GmmSpec::new(10, 3, 0.1) };
        let sample = spec.generate::<f64, _>(&mut rng(7)).unwrap();
        // Use only 3 observations so range(V) is a proper subspace.
        let obs = sample.obs.select_uniform(&[0, 1, 2]).unwrap();
        let a = rrf_init(&obs, 4, &mut rng(8)).unwrap();
        let q = orthonormalize(obs.data()).unwrap();
        for col in a.columns() {
            assert!((col.dot(&col) - 1.0).abs() < 1e-12);
            let resid = &col - &q.dot(&q.t().dot(&col));
            assert!(resid.dot(&resid).sqrt() <= 1e-10);
        }
    }

    #[test]
    fn rrf_fails_on_zero_data() {
        let obs = ObservationSet::uniform(Array2::<f64>::zeros((3, 5))).unwrap();
        assert!(rrf_init(&obs, 2, &mut rng(0)).is_err());
    }

    #[test]
    fn gaussian_init_is_normalized_and_reproducible() {
        let a = gaussian_init::<f64, _>(9, 3, &mut rng(10)).unwrap();
        let b = gaussian_init::<f64, _>(9, 3, &mut rng(10)).unwrap();
        assert_eq!(a, b);
        for col in a.columns() {
            assert!((col.dot(&col) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(GmmSpec::new(3, 4, 0.1).validate().is_err());
        assert!(GmmSpec::new(3, 2, -1.0).validate().is_err());
        assert!(GmmSpec { congruence: 1.0, ..GmmSpec::new(3, 2, 0.1) }.validate().is_err());
        assert_eq!(GmmSpec::new(30, 4, 0.1).observations(), 1000);
    }

    #[test]
    fn orientation_makes_odd_terms_agree_with_data() {
        let s = GmmSpec::new(8, 3, 0.01).generate::<f64, _>(&mut rng(11)).unwrap();
        let a = gaussian_init::<f64, _>(8, 3, &mut rng(12)).unwrap();
        let mut flipped = a.clone();
        flipped.column_mut(1).mapv_inplace(|v| -v);

        let mut x = a.clone();
        let mut z = flipped.clone();
        orient_to_data(&s.obs, &mut x, 3).unwrap();
        orient_to_data(&s.obs, &mut z, 3).unwrap();
        assert_eq!(x, z);
        let y = ttsv_batch(&s.obs, x.view(), 3).unwrap();
        for j in 0..3 {
            assert!(x.column(j).dot(&y.column(j)) >= 0.0);
        }

        let mut even = flipped.clone();
        orient_to_data(&s.obs, &mut even, 4).unwrap();
        assert_eq!(even, flipped);
    }
}
