use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redunet::linalg;
use redunet::rate::{self, coding_rate, rate_gradient, rate_reduction, rate_trace};
use redunet::vector::{self, Membership, VectorNetConfig};
use redunet::{FeatureMatrix, Partition, RateParams};

fn random_matrix(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
}

fn random_partition(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Partition {
    // First k samples seed every class, the rest are random.
    let mut labels: Vec<usize> = (0..m).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    labels.rotate_left(rng.random_range(0..m));
    Partition::new(labels, k).unwrap()
}

/// `log det` through LU, independent of the Cholesky kernels.
fn lu_logdet(m: &DMatrix<f64>) -> f64 {
    m.clone().determinant().ln()
}

/// R and R_c term by term with explicit diagonal Πʲ matrices.
fn brute_force_delta_r(z: &DMatrix<f64>, p: &Partition, eps: f64) -> (f64, f64) {
    let (n, m) = z.shape();
    let alpha = n as f64 / (m as f64 * eps * eps);
    let r = 0.5 * lu_logdet(&(DMatrix::identity(n, n) + z * z.transpose() * alpha));
    let mut rc = 0.0;
    for j in 0..p.classes() {
        let pi = DMatrix::from_fn(m, m, |a, b| if a == b && p.labels()[a] == j { 1.0 } else { 0.0 });
        let tr = pi.trace();
        let aj = n as f64 / (tr * eps * eps);
        rc += tr / m as f64 / 2.0 * lu_logdet(&(DMatrix::identity(n, n) + z * &pi * z.transpose() * aj));
    }
    (r, rc)
}

fn central_difference<F: Fn(&DMatrix<f64>) -> f64>(z: &DMatrix<f64>, f: F, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(z.nrows(), z.ncols());
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            let mut plus = z.clone();
            plus[(i, j)] += h;
            let mut minus = z.clone();
            minus[(i, j)] -= h;
            g[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    g
}

#[test]
fn rate_gradient_matches_finite_differences_on_many_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..24 {
        let n = 2 + trial % 4;
        let m = 3 + (trial * 7) % 8;
        let k = (1 + trial % 3).min(m);
        let eps = RateParams::new(rng.random_range(0.3..1.0)).unwrap();
        let z = random_matrix(n, m, &mut rng);
        let p = random_partition(m, k, &mut rng);
        let g = rate_gradient(&FeatureMatrix::new(z.clone()).unwrap(), &p, &eps).unwrap();
        let fd = central_difference(
            &z,
            |w| rate_reduction(&FeatureMatrix::new(w.clone()).unwrap(), &p, &eps).unwrap(),
            1e-5,
        );
        let scale = fd.norm().max(1e-3);
        let rel = (&g - &fd).norm() / scale;
        worst = worst.max(rel);
        assert!(rel <= 1e-5, "trial {trial}: relative error {rel:e}");
    }
    assert!(worst <= 1e-5);
}

#[test]
fn rate_gradient_example_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = random_matrix(4, 8, &mut rng);
    let p = Partition::new(vec![0, 1, 0, 1, 1, 0, 0, 1], 2).unwrap();
    let eps = RateParams::new(0.5).unwrap();
    let g = rate_gradient(&FeatureMatrix::new(z.clone()).unwrap(), &p, &eps).unwrap();
    let fd = central_difference(&z, |w| rate_reduction(&FeatureMatrix::new(w.clone()).unwrap(), &p, &eps).unwrap(), 1e-5);
    assert!((&g - &fd).norm() / fd.norm() <= 1e-5);
    // One class: both terms coincide.
    let single = rate_gradient(&FeatureMatrix::new(z).unwrap(), &Partition::single_class(8).unwrap(), &eps).unwrap();
    assert!(single.abs().max() < 1e-12);
}

#[test]
fn rates_match_brute_force_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let z = random_matrix(3, 6, &mut rng);
        let p = random_partition(6, 2, &mut rng);
        let eps = RateParams::new(0.4).unwrap();
        let t = rate_trace(&FeatureMatrix::new(z.clone()).unwrap(), &p, &eps).unwrap();
        let (r, rc) = brute_force_delta_r(&z, &p, 0.4);
        assert!((t.r - r).abs() < 1e-10);
        assert!((t.r_c - rc).abs() < 1e-10);
    }
    // Two orthogonal unit vectors in separate classes.
    let z = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let p = Partition::new(vec![0, 1], 2).unwrap();
    let d = rate_reduction(&FeatureMatrix::new(z.clone()).unwrap(), &p, &RateParams::new(0.1).unwrap()).unwrap();
    let (r, rc) = brute_force_delta_r(&z, &p, 0.1);
    assert!(d > 0.0);
    assert!((d - (r - rc)).abs() < 1e-10);
}

#[test]
fn identity_features_closed_form() {
    let n = 5;
    let e: f64 = 0.3;
    let r = coding_rate(&FeatureMatrix::new(DMatrix::identity(n, n)).unwrap(), &RateParams::new(e).unwrap()).unwrap();
    assert!((r - n as f64 / 2.0 * (1.0 + 1.0 / (e * e)).ln()).abs() < 1e-12);
}

#[test]
fn single_class_reduction_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, m) in [(3, 7), (6, 2), (4, 4)] {
        let z = FeatureMatrix::normalized(random_matrix(n, m, &mut rng)).unwrap();
        let d = rate_reduction(&z, &Partition::single_class(m).unwrap(), &RateParams::new(0.2).unwrap()).unwrap();
        assert!(d.abs() < 1e-10);
    }
}

#[test]
fn primal_and_dual_log_determinants_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (n, m) in [(8, 3), (3, 8), (5, 5), (20, 4)] {
        let z = random_matrix(n, m, &mut rng);
        let a = 2.5;
        let primal = linalg::logdet_psd(&(DMatrix::identity(n, n) + &z * z.transpose() * a)).unwrap();
        let dual = linalg::logdet_psd(&(DMatrix::identity(m, m) + z.transpose() * &z * a)).unwrap();
        assert!((primal - dual).abs() < 1e-9);
        assert!((linalg::logdet_gram(&z, a).unwrap() - primal).abs() < 1e-9);
        let (op, ld) = linalg::regularized_inverse(&z, a).unwrap();
        let (op2, ld2) = linalg::resolvent(&(&z * z.transpose()), a).unwrap();
        assert!((ld - ld2).abs() < 1e-9);
        assert!((op - op2).abs().max() < 1e-9);
    }
}

#[test]
fn expansion_is_ridge_regression_residual() {
    // E z = α (z − Z q*), q* = argmin_q α‖z − Zq‖² + ‖q‖².
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let zm = random_matrix(4, 6, &mut rng);
    let eps = RateParams::new(0.5).unwrap();
    let alpha = eps.alpha(4, 6);
    let e = vector::expansion_operator(&FeatureMatrix::new(zm.clone()).unwrap(), &eps).unwrap();
    let probe = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    let normal = zm.transpose() * &zm * alpha + DMatrix::identity(6, 6);
    let q = normal.lu().solve(&(zm.transpose() * &probe * alpha)).unwrap();
    let expected = (&probe - &zm * q) * alpha;
    assert!((&e * &probe - expected).abs().max() < 1e-9);
}

#[test]
fn expansion_eigen_decomposition() {
    // E = α U diag(1/(1 + α σ²)) Uᵀ with Z = U Σ Vᵀ.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let zm = random_matrix(4, 9, &mut rng);
    let eps = RateParams::new(0.7).unwrap();
    let alpha = eps.alpha(4, 9);
    let e = vector::expansion_operator(&FeatureMatrix::new(zm.clone()).unwrap(), &eps).unwrap();
    let svd = zm.svd(true, false);
    let u = svd.u.unwrap();
    let d = DMatrix::from_diagonal(&svd.singular_values.map(|s| alpha / (1.0 + alpha * s * s)));
    assert!((e - &u * d * u.transpose()).abs().max() < 1e-9);
}

#[test]
fn true_label_construction_follows_rate_gradient() {
    // With true-label membership each layer is z ← P_S(z + η ∂ΔR/∂z).
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = FeatureMatrix::normalized(random_matrix(4, 8, &mut rng)).unwrap();
    let p = Partition::new(vec![0, 0, 1, 1, 0, 1, 0, 1], 2).unwrap();
    let eps = RateParams::new(0.5).unwrap();
    let eta = 0.3;
    let config = VectorNetConfig {
        layers: 3,
        eta,
        epsilon: 0.5,
        membership: Membership::TrueLabels,
        ..Default::default()
    };
    let mut z = x.data().clone();
    let mut expected = Vec::new();
    for _ in 0..3 {
        let g = rate_gradient(&FeatureMatrix::new(z.clone()).unwrap(), &p, &eps).unwrap();
        z = FeatureMatrix::normalized(&z + g * eta).unwrap().into_inner();
        expected.push(z.clone());
    }
    let mut seen = Vec::new();
    let mut state = x.data().clone();
    let (model, out) = vector::construct_vector_net_with(&x, &p, &config, |_, layer| {
        state = vector::apply_layer_batch(&state, layer, Some(p.labels()))?;
        seen.push(state.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(model.trace.len(), 4);
    for (a, b) in seen.iter().zip(&expected) {
        assert!((a - b).abs().max() < 1e-10);
    }
    assert!((out.data() - &expected[2]).abs().max() < 1e-10);
}

#[test]
fn estimated_membership_layer_matches_hand_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = FeatureMatrix::normalized(random_matrix(5, 10, &mut rng)).unwrap();
    let p = random_partition(10, 2, &mut rng);
    let eps = RateParams::new(0.5).unwrap();
    let (layer, _) = vector::build_layer(&x, &p, &eps, 4.0, 0.2).unwrap();
    let z = x.data().column(3).into_owned();
    let norms: Vec<f64> = layer.compression.iter().map(|c| (c * &z).norm()).collect();
    let top = norms.iter().map(|n| -4.0 * n).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = norms.iter().map(|n| (-4.0 * n - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut step = &layer.expansion * &z;
    for j in 0..2 {
        step -= &layer.compression[j] * &z * (layer.gamma[j] * w[j] / total);
    }
    let expected = (&z + step * 0.2).normalize();
    let got = vector::apply_layer(&z, &layer, None).unwrap();
    assert!((got - expected).abs().max() < 1e-12);
}

#[test]
fn replay_reproduces_training_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = FeatureMatrix::normalized(random_matrix(4, 12, &mut rng)).unwrap();
    let p = random_partition(12, 3, &mut rng);
    let config = VectorNetConfig { layers: 6, eta: 0.5, epsilon: 0.5, ..Default::default() };
    let (model, z) = vector::construct_vector_net_with(&x, &p, &config, |_, _| Ok(())).unwrap();
    let replay = vector::forward_vector_batch(&model, x.data()).unwrap();
    assert!((replay - z.data()).abs().max() < 1e-6);
    for c in z.data().column_iter() {
        assert!((c.norm() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn zero_layer_model_normalizes() {
    let x = FeatureMatrix::new(DMatrix::from_column_slice(2, 2, &[3.0, 4.0, 0.0, -2.0])).unwrap();
    let p = Partition::new(vec![0, 1], 2).unwrap();
    let config = VectorNetConfig { layers: 0, ..Default::default() };
    let (model, z) = vector::construct_vector_net_with(&x, &p, &config, |_, _| Ok(())).unwrap();
    assert_eq!(model.trace.len(), 1);
    assert!(model.layers.is_empty());
    let out = vector::forward_vector(&model, &DVector::from_vec(vec![3.0, 4.0])).unwrap();
    assert!((out - DVector::from_vec(vec![0.6, 0.8])).abs().max() < 1e-15);
    assert!((z.data()[(1, 1)] + 1.0).abs() < 1e-15);
}

fn matrix_strategy() -> impl Strategy<Value = (DMatrix<f64>, Vec<usize>)> {
    (2usize..5, 3usize..9).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0f64..1.0, n * m).prop_map(move |v| DMatrix::from_vec(n, m, v)),
            prop::collection::vec(0usize..2, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(norms in prop::collection::vec(0.0f64..50.0, 1..6), lambda in 0.01f64..500.0) {
        let p = vector::softmax_neg(&norms, lambda);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn reduction_is_invariant_to_rotations((z, labels) in matrix_strategy(), seed in 0u64..1000) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let p = Partition::new(labels, 2).unwrap();
        let eps = RateParams::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_matrix(z.nrows(), z.nrows(), &mut rng).qr().q();
        let a = rate_reduction(&FeatureMatrix::new(z.clone()).unwrap(), &p, &eps).unwrap();
        let b = rate_reduction(&FeatureMatrix::new(q * &z).unwrap(), &p, &eps).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences((z, labels) in matrix_strategy()) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let p = Partition::new(labels, 2).unwrap();
        let eps = RateParams::new(0.6).unwrap();
        let g = rate_gradient(&FeatureMatrix::new(z.clone()).unwrap(), &p, &eps).unwrap();
        let fd = central_difference(&z, |w| rate_reduction(&FeatureMatrix::new(w.clone()).unwrap(), &p, &eps).unwrap(), 1e-5);
        prop_assert!((&g - &fd).norm() <= 1e-5 * fd.norm().max(1e-3));
    }

    #[test]
    fn layer_outputs_are_unit_vectors((z, labels) in matrix_strategy(), eta in 0.0f64..1.0) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        prop_assume!(z.column_iter().all(|c| c.norm() > 1e-3));
        let p = Partition::new(labels, 2).unwrap();
        let x = FeatureMatrix::normalized(z).unwrap();
        let (layer, _) = vector::build_layer(&x, &p, &RateParams::new(0.5).unwrap(), 20.0, eta).unwrap();
        let out = vector::apply_layer_batch(x.data(), &layer, None).unwrap();
        for c in out.column_iter() {
            prop_assert!((c.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn class_rate_never_uses_other_columns((z, labels) in matrix_strategy()) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let p = Partition::new(labels.clone(), 2).unwrap();
        let eps = RateParams::new(0.5).unwrap();
        let rc = rate::class_rate(&FeatureMatrix::new(z.clone()).unwrap(), &p, &eps).unwrap();
        let (_, expected) = brute_force_delta_r(&z, &p, 0.5);
        prop_assert!((rc - expected).abs() < 1e-9);
    }
}
