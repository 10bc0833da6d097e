use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redunet::classify::{self, fit_spectral_subspaces, fit_subspaces, SubspaceModel};
use redunet::datasets::{self, LabeledDataset};
use redunet::lifting::{self, Interpolation, Lifting, Sparsify};
use redunet::spectral::{Dft, MultiChannel};
use redunet::{Error, Partition};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_signal(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> MultiChannel {
    MultiChannel::new(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn repo_data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-01")
}

#[test]
fn lifting_fft_path_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (h, w, kh, kw) in [(1, 16, 1, 5), (1, 7, 1, 7), (6, 5, 3, 3), (4, 4, 2, 3)] {
        let bank = lifting::random_filters(3, kh, kw, 9).unwrap();
        let x: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = lifting::lift(&x, h, w, &bank).unwrap();
        let slow = lifting::lift_dense(&x, h, w, &bank).unwrap();
        assert!(max_diff(fast.as_slice(), slow.as_slice()) < 1e-9);
    }
    let bank = lifting::random_filters(2, 5, 5, 0).unwrap();
    assert!(matches!(lifting::lift(&[0.0; 12], 3, 4, &bank), Err(Error::ShapeMismatch(_))));
}

#[test]
fn lifting_commutes_with_translation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lift = Lifting { bank: lifting::random_filters(4, 3, 3, 5).unwrap(), sparsify: Sparsify::Relu };
    let x = random_signal(1, 7, 9, &mut rng);
    let base = lift.apply(&x).unwrap();
    for (dy, dx) in [(1, 0), (0, 4), (3, 8), (6, 6)] {
        let moved = lift.apply(&x.shifted(dy, dx)).unwrap();
        assert!(max_diff(moved.as_slice(), base.shifted(dy, dx).as_slice()) < 1e-12);
    }
    let signal = random_signal(1, 1, 11, &mut rng);
    let bank = lifting::random_filters(3, 1, 4, 6).unwrap();
    let base = lifting::lift_1d(signal.as_slice(), &bank).unwrap();
    let moved = lifting::lift_1d(signal.shifted_1d(5).as_slice(), &bank).unwrap();
    assert!(max_diff(moved.as_slice(), base.shifted_1d(5).as_slice()) < 1e-12);
}

/// Smooth synthetic pattern in coordinates relative to the image centre.
fn pattern(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    (-r2 / 60.0).exp() * (1.0 + 0.3 * (x * x - y * y) / 40.0 + 0.25 * x * y / 40.0 + 0.1 * x / 6.0)
}

fn render(h: usize, w: usize, angle: f64) -> Vec<f64> {
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, c) = angle.sin_cos();
    let mut img = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let (x, y) = (col as f64 - cx, row as f64 - cy);
            // Value of the rotated image is the original at R(−angle)·p.
            img.push(pattern(c * x + s * y, -s * x + c * y));
        }
    }
    img
}

#[test]
fn polar_grid_turns_rotation_into_shift() {
    let (h, w, gamma) = (28, 28, 100);
    let radii = lifting::default_radii(5, h, w, 0.5);
    let base = lifting::polar_transform(&render(h, w, 0.0), h, w, gamma, &radii, Interpolation::Bilinear).unwrap();
    for s in [1usize, 7, 25, 50, 93] {
        let angle = 2.0 * std::f64::consts::PI * s as f64 / gamma as f64;
        let rotated = lifting::polar_transform(&render(h, w, angle), h, w, gamma, &radii, Interpolation::Bilinear).unwrap();
        let err = max_diff(rotated.as_slice(), base.shifted_1d(s as isize).as_slice());
        assert!(err < 1e-2, "shift {s}: {err}");
    }
}

#[test]
fn polar_transform_of_digit_has_requested_grid() {
    let ds = datasets::load_mnist(
        &repo_data().join("images-idx3-ubyte"),
        &repo_data().join("labels-idx1-ubyte"),
        Some(&[0, 1]),
    )
    .unwrap();
    let radii = lifting::default_radii(5, 28, 28, 0.5);
    let p = lifting::polar_transform(ds.samples[0].as_slice(), 28, 28, 200, &radii, Interpolation::Bilinear).unwrap();
    assert_eq!((p.channels(), p.width()), (5, 200));
    let nearest = lifting::polar_transform(ds.samples[0].as_slice(), 28, 28, 200, &radii, Interpolation::Nearest).unwrap();
    assert_eq!(nearest.shape(), p.shape());
}

#[test]
fn generators_are_reproducible() {
    let means = datasets::random_means_separated(3, 3, 0.5, 4).unwrap();
    assert_eq!(means, datasets::random_means_separated(3, 3, 0.5, 4).unwrap());
    for a in 0..3 {
        for b in a + 1..3 {
            assert!(means[a].dot(&means[b]).abs() <= 0.5f64.cos() + 1e-15);
        }
    }
    let a = datasets::gaussian_sphere(&means, 0.1, 50, 8).unwrap();
    let b = datasets::gaussian_sphere(&means, 0.1, 50, 8).unwrap();
    assert_eq!(a, b);
    assert!(a.samples.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    assert_ne!(a.samples, datasets::gaussian_sphere(&means, 0.1, 50, 9).unwrap().samples);
    let s = datasets::signals_1d(200, 150, 0.1, 3).unwrap();
    assert_eq!((s.len(), s.samples[0].len()), (400, 150));
    assert_eq!(s, datasets::signals_1d(200, 150, 0.1, 3).unwrap());
    assert_eq!(datasets::random_means(2, 2, 1), datasets::random_means(2, 2, 1));
}

#[test]
fn idx_roundtrip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img");
    let lbl = dir.path().join("lbl");
    let pixels = vec![0u8; 10000 * 28 * 28];
    datasets::write_idx_images(&img, 28, 28, &pixels).unwrap();
    let (count, rows, cols, data) = datasets::read_idx_images(&img).unwrap();
    assert_eq!((count, rows, cols, data.len()), (10000, 28, 28, 10000 * 784));

    let small: Vec<u8> = (0..3 * 4).map(|v| (v * 20) as u8).collect();
    datasets::write_idx_images(&img, 2, 2, &small).unwrap();
    datasets::write_idx_labels(&lbl, &[7, 1, 7]).unwrap();
    let ds = datasets::load_mnist(&img, &lbl, Some(&[1, 7])).unwrap();
    assert_eq!(ds.labels, vec![1, 0, 1]);
    assert!((ds.samples[2].as_slice()[3] - 220.0 / 255.0).abs() < 1e-15);

    let mut bytes = std::fs::read(&img).unwrap();
    bytes[3] = 0x01;
    std::fs::write(&img, &bytes).unwrap();
    assert!(matches!(datasets::read_idx_images(&img), Err(Error::BadMagic { .. })));
    bytes[3] = 0x03;
    bytes.truncate(bytes.len() - 1);
    std::fs::write(&img, &bytes).unwrap();
    assert!(matches!(datasets::read_idx_images(&img), Err(Error::TruncatedFile(_))));
    datasets::write_idx_images(&img, 2, 2, &small).unwrap();
    datasets::write_idx_labels(&lbl, &[7, 1]).unwrap();
    assert!(matches!(datasets::load_mnist(&img, &lbl, None), Err(Error::LabelImageCountMismatch { .. })));
}

#[test]
fn bundled_digits_load() {
    let ds = datasets::load_mnist(
        &repo_data().join("images-idx3-ubyte"),
        &repo_data().join("labels-idx1-ubyte"),
        Some(&[0, 1]),
    )
    .unwrap();
    let p = ds.partition().unwrap();
    assert_eq!((p.count(0), p.count(1)), (1001, 1127));
    assert!(ds.samples.iter().all(|x| x.shape() == (1, 28, 28)));
}

/// Runs only when `REDUNET_MNIST_DIR` points at the public test files.
#[test]
fn public_test_set_digit_counts() {
    let Ok(dir) = std::env::var("REDUNET_MNIST_DIR") else {
        eprintln!("REDUNET_MNIST_DIR not set; skipping");
        return;
    };
    let dir = Path::new(&dir);
    let ds = datasets::load_mnist(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        Some(&[0, 1]),
    )
    .unwrap();
    assert_eq!(ds.len(), 2115);
}

fn toy(samples: Vec<MultiChannel>) -> LabeledDataset<MultiChannel> {
    let n = samples.len();
    LabeledDataset { samples, labels: vec![0; n], classes: 1, seed: None, provenance: "toy".into() }
}

#[test]
fn translation_augmentation_is_a_group_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_signal(1, 28, 28, &mut rng);
    let aug = datasets::shift_augment(&toy(vec![x.clone()]), 7).unwrap();
    assert_eq!(aug.len(), 16);
    assert_eq!(datasets::shift_augment(&toy(vec![x.clone()]), 28).unwrap().len(), 1);
    // Shifting first permutes the orbit.
    let moved = datasets::shift_augment(&toy(vec![x.shifted(7, 14)]), 7).unwrap();
    for s in &moved.samples {
        assert!(aug.samples.contains(s));
    }
    assert_eq!(x.shifted(7, 14).shifted(21, 14), x);
}

#[test]
fn rotation_augmentation_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_signal(5, 1, 200, &mut rng);
    let one = datasets::rotate_augment(&toy(vec![x.clone()]), 1).unwrap();
    assert_eq!(one.samples, vec![x.clone()]);
    let twenty = datasets::rotate_augment(&toy(vec![x.clone()]), 20).unwrap();
    assert_eq!(twenty.len(), 20);
    assert_eq!(twenty.samples[1], x.shifted_1d(10));
    assert_eq!(twenty.samples[3].shifted_1d(40), twenty.samples[7]);
    assert!(matches!(
        datasets::rotate_augment(&toy(vec![x]), 7),
        Err(Error::StepsNotDividingGamma { .. })
    ));
}

#[test]
fn subspace_rank_matches_svd_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..10 {
        let a = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(3, 12, |_, _| rng.random_range(-1.0..1.0));
        let z = a * b;
        let model = fit_subspaces(&z, &Partition::single_class(12).unwrap(), 0.9).unwrap();
        let sv = z.clone().singular_values();
        let mut s2: Vec<f64> = sv.iter().map(|s| s * s).collect();
        s2.sort_by(|x, y| y.total_cmp(x));
        let total: f64 = s2.iter().sum();
        let mut acc = 0.0;
        let expected = s2.iter().position(|v| {
            acc += v;
            acc >= 0.9 * total
        });
        assert_eq!(model.ranks()[0], expected.unwrap() + 1, "trial {trial}");
        let full = fit_subspaces(&z, &Partition::single_class(12).unwrap(), 1.0).unwrap();
        assert_eq!(full.ranks(), vec![3]);
        let basis = &full.bases[0];
        assert!((basis.transpose() * basis - DMatrix::identity(3, 3)).abs().max() < 1e-10);
    }
}

#[test]
fn rank_two_data_at_full_energy() {
    let z = DMatrix::from_column_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
    let m = fit_subspaces(&z, &Partition::single_class(3).unwrap(), 1.0).unwrap();
    assert_eq!(m.ranks(), vec![2]);
    let basis = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
    let other = SubspaceModel { bases: vec![DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]), basis] };
    assert_eq!(classify::predict(&DVector::from_vec(vec![0.0, 0.0, 1.0]), &other), 1);
    assert_eq!(classify::predict(&DVector::from_vec(vec![0.0, 1.0, 0.0]), &other), 0);
}

#[test]
fn spectral_subspaces_equal_svd_of_all_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (c, h, w) = (2, 2, 5);
    let feats: Vec<MultiChannel> = (0..6).map(|_| random_signal(c, h, w, &mut rng)).collect();
    let p = Partition::new(vec![0, 1, 0, 1, 0, 1], 2).unwrap();
    let model = fit_spectral_subspaces(&feats, &p, 0.8).unwrap();
    // Dense reference: SVD of every cyclic translation of every feature.
    let mut columns = Vec::new();
    let mut labels = Vec::new();
    for (x, &l) in feats.iter().zip(p.labels()) {
        for dy in 0..h {
            for dx in 0..w {
                columns.push(DVector::from_column_slice(x.shifted(dy as isize, dx as isize).as_slice()));
                labels.push(l);
            }
        }
    }
    let z = DMatrix::from_columns(&columns);
    let aug = Partition::new(labels, 2).unwrap();
    let full = fit_subspaces(&z, &aug, 1.0).unwrap();
    let ranks = model.ranks();
    let dense = SubspaceModel {
        bases: full.bases.iter().zip(&ranks).map(|(b, &r)| b.columns(0, r).into_owned()).collect(),
    };
    let dft = Dft::new(model.layout);
    for _ in 0..10 {
        let probe = random_signal(c, h, w, &mut rng);
        let a = classify::spectral_residuals(&dft.forward(&probe).unwrap(), &model);
        let b = classify::residuals(&DVector::from_column_slice(probe.as_slice()), &dense);
        assert!(max_diff(&a, &b) < 1e-9, "{a:?} vs {b:?}");
        let pred = classify::predict_spectral(&probe, &model).unwrap();
        for dy in 0..h as isize {
            for dx in 0..w as isize {
                assert_eq!(classify::predict_spectral(&probe.shifted(dy, dx), &model).unwrap(), pred);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sparsify_contracts(v in prop::collection::vec(-2.0f64..2.0, 1..20), t in 0.0f64..1.0) {
        let z = MultiChannel::signal(1, v.len(), v.clone()).unwrap();
        let soft = lifting::sparsify(&z, Sparsify::SoftThreshold(t)).unwrap();
        for (a, b) in soft.as_slice().iter().zip(&v) {
            prop_assert!(a.abs() <= b.abs());
            prop_assert!(a.abs() <= (b.abs() - t).max(0.0) + 1e-15);
        }
        let relu = lifting::sparsify(&z, Sparsify::Relu).unwrap();
        prop_assert!(relu.as_slice().iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn shift_composition(seed in 0u64..1000, a in 0isize..40, b in 0isize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_signal(2, 3, 5, &mut rng);
        prop_assert_eq!(x.shifted(a, b).shifted(b, a), x.shifted(a + b, a + b));
        prop_assert_eq!(x.shifted(a, b).shifted(-a, -b), x);
    }
}
