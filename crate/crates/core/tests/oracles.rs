mod common;

use common::*;
use momentcp::{
    data_norm_sq, fg_explicit, fg_implicit, fg_stochastic, kruskal_norm_sq, kruskal_to_dense, model_data_inner,
    sample_observations, ttsv_batch, DenseSymTensor, ElementCap, ObservationSet, SymKruskal,
};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance_strategy() -> impl Strategy<Value = (u64, usize, usize, usize, usize)> {
    (any::<u64>(), 1usize..=5, 1usize..=7, 1usize..=3, 2usize..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn implicit_kernels_match_entrywise_oracle((seed, n, p, r, d) in instance_strategy()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), n, p, r, d);
        let want = oracle(&inst);
        let model = SymKruskal::new(d, inst.weights.clone(), inst.factors.clone()).unwrap();
        let y = ttsv_batch(&inst.obs, inst.factors.view(), d).unwrap();
        let (_, inner) = model_data_inner(y.view(), inst.factors.view(), inst.weights.view()).unwrap();

        prop_assert!(rel_gap(y.as_slice().unwrap(), want.y.as_slice().unwrap(), 1e-4) < 1e-12);
        prop_assert!(rel(data_norm_sq(&inst.obs, d), want.x_norm_sq) < 1e-12);
        prop_assert!(rel(kruskal_norm_sq(&model), want.m_norm_sq) < 1e-12);
        prop_assert!((inner - want.inner).abs() <= 1e-12 * want.inner.abs().max(want.x_norm_sq.sqrt() * want.m_norm_sq.sqrt()));
    }

    #[test]
    fn shifted_objective_matches_oracle((seed, n, p, r, d) in instance_strategy(), alpha in -2.0f64..2.0) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), n, p, r, d);
        let want = oracle(&inst);
        let out = fg_implicit(&inst.obs, inst.weights.view(), inst.factors.view(), d, alpha).unwrap();
        let f = alpha + want.m_norm_sq - 2.0 * want.inner;
        let scale = alpha.abs() + want.m_norm_sq + 2.0 * want.inner.abs();
        prop_assert!((out.f - f).abs() <= 1e-12 * scale);
    }

    #[test]
    fn dense_moment_is_exactly_symmetric((seed, n, p, _r, d) in instance_strategy()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), n, p, 1, d);
        let x = DenseSymTensor::build_moment(&inst.obs, d).unwrap();
        prop_assert!(x.check_symmetric(0.0));
        for idx in multiindices(n, d) {
            let want = moment_entry(&inst.obs, &idx);
            prop_assert!((x.get(&idx) - want).abs() <= 1e-14 * want.abs().max(1.0));
        }
    }

    #[test]
    fn outer_power_inner_product_is_powered_dot((seed, n) in (any::<u64>(), 1usize..=6), d in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Array1<f64> = Array1::from_shape_simple_fn(n, || rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_simple_fn(n, || rng.random_range(-1.0..1.0));
        let ta = DenseSymTensor::outer_power(a.view(), d).unwrap();
        let tb = DenseSymTensor::outer_power(b.view(), d).unwrap();
        let want = a.dot(&b).powi(d as i32);
        prop_assert!((ta.inner(&tb).unwrap() - want).abs() <= 1e-13 * want.abs().max(1.0));
    }

    #[test]
    fn explicit_and_implicit_gradients_agree((seed, n, p, r, d) in instance_strategy()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), n, p, r, d);
        let x = DenseSymTensor::build_moment(&inst.obs, d).unwrap();
        let e = fg_explicit(&x, inst.weights.view(), inst.factors.view(), 0.5).unwrap();
        let i = fg_implicit(&inst.obs, inst.weights.view(), inst.factors.view(), d, 0.5).unwrap();
        prop_assert!((e.f - i.f).abs() <= 1e-10 * i.f.abs().max(1.0));
        prop_assert!(rel_gap(e.grad_weights.as_slice().unwrap(), i.grad_weights.as_slice().unwrap(), 1e-4) < 1e-10);
        prop_assert!(rel_gap(e.grad_factors.as_slice().unwrap(), i.grad_factors.as_slice().unwrap(), 1e-4) < 1e-10);
    }
}

#[test]
fn kruskal_to_dense_matches_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = random_instance(&mut rng, 4, 3, 3, 3);
    let model = SymKruskal::new(3, inst.weights.clone(), inst.factors.clone()).unwrap();
    let m = kruskal_to_dense(&model, ElementCap::default()).unwrap();
    for idx in multiindices(4, 3) {
        let want = model_entry(&inst.weights, &inst.factors, &idx);
        assert!((m.get(&idx) - want).abs() <= 1e-14 * want.abs().max(1.0));
    }
}

#[test]
fn gradient_of_exact_fit_vanishes() {
    // X = M: the data are the factors with weights equal to λ.
    let a: Array2<f64> = array![[0.6, 0.0, 1.0], [0.8, 0.6, 0.0], [0.0, 0.8, 0.0]];
    let lambda = array![0.2, 0.5, 0.3];
    let obs = ObservationSet::new(a.clone(), lambda.clone()).unwrap();
    for d in 2..=4 {
        let alpha = data_norm_sq(&obs, d);
        let out = fg_implicit(&obs, lambda.view(), a.view(), d, alpha).unwrap();
        assert!(out.f.abs() < 1e-15, "d={d} f={}", out.f);
        assert!(out.grad_weights.iter().chain(out.grad_factors.iter()).all(|g| g.abs() < 1e-14));
    }
}

#[test]
fn single_precision_tracks_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inst = random_instance(&mut rng, 5, 8, 2, 3);
    let obs32 = ObservationSet::<f32>::new(inst.obs.data().mapv(|v| v as f32), inst.obs.weights().mapv(|v| v as f32)).unwrap();
    let w32 = inst.weights.mapv(|v| v as f32);
    let a32 = inst.factors.mapv(|v| v as f32);
    let f64_out = fg_implicit(&inst.obs, inst.weights.view(), inst.factors.view(), 3, 0.0).unwrap();
    let f32_out = fg_implicit(&obs32, w32.view(), a32.view(), 3, 0.0f32).unwrap();
    assert!(((f32_out.f as f64) - f64_out.f).abs() <= 1e-4 * f64_out.f.abs().max(1.0));
    let g32: Vec<f64> = f32_out.grad_factors.iter().map(|&v| v as f64).collect();
    assert!(rel_gap(&g32, f64_out.grad_factors.as_slice().unwrap(), 1e-2) < 1e-3);
}

#[test]
fn stochastic_objective_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let v = Array2::from_shape_simple_fn((4, 12), || rng.random_range(-1.0..1.0));
    let obs = ObservationSet::uniform(v).unwrap();
    let lambda = array![0.7, -0.4];
    let a = Array2::from_shape_simple_fn((4, 2), || rng.random_range(-1.0..1.0));
    let exact = fg_implicit(&obs, lambda.view(), a.view(), 3, 0.0).unwrap();

    let reps = 4000;
    let mut fs = Vec::with_capacity(reps);
    let mut g = Array2::<f64>::zeros((4, 2));
    let mut g_sq = Array2::<f64>::zeros((4, 2));
    for _ in 0..reps {
        let out = fg_stochastic(&obs, lambda.view(), a.view(), 3, 0.0, 5, &mut rng).unwrap();
        fs.push(out.f);
        g += &out.grad_factors;
        g_sq += &out.grad_factors.mapv(|x| x * x);
    }
    let k = reps as f64;
    let mean = fs.iter().sum::<f64>() / k;
    let var = fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (k - 1.0);
    assert!((mean - exact.f).abs() <= 3.0 * (var / k).sqrt(), "{mean} vs {}", exact.f);
    let g_mean = &g / k;
    let g_var = (&g_sq / k - g_mean.mapv(|x| x * x)) * (k / (k - 1.0));
    for ((m, v), e) in g_mean.iter().zip(g_var.iter()).zip(exact.grad_factors.iter()) {
        assert!((m - e).abs() <= 3.5 * (v / k).sqrt(), "{m} vs {e}");
    }
}

#[test]
fn sampling_draws_every_observation() {
    let obs = ObservationSet::uniform(Array2::from_shape_fn((1, 4), |(_, l)| l as f64)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = sample_observations(&obs, 4000, &mut rng).unwrap();
    for l in 0..4 {
        let count = s.data().iter().filter(|&&v| v == l as f64).count();
        // Binomial(4000, 1/4): sd ≈ 27.
        assert!((count as i64 - 1000).abs() < 120, "observation {l} drawn {count} times");
    }
}
