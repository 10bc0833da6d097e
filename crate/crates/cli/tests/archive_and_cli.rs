use std::process::Command;

use nalgebra::DMatrix;
use redunet::lifting::{random_filters, Lifting, Sparsify};
use redunet::spectral::{construct_spectral, forward_spectral_batch, SpectralConfig};
use redunet::vector::{construct_vector_net, forward_vector_batch, VectorNetConfig};
use redunet::{FeatureMatrix, Partition};
use redunet_cli::archive::{from_bytes, load_model, save_model, to_bytes, ArchiveError, Model, VERSION};
use redunet_cli::config::{ExperimentConfig, Kind};
use redunet_cli::csv::{read_metrics, read_table};
use redunet_cli::experiments::run_experiment;
use redunet_cli::selftest::random_batch;

fn vector_model() -> (Model, DMatrix<f64>) {
    let x = DMatrix::from_fn(4, 8, |i, j| ((i * 5 + j * 3) % 7) as f64 - 2.9);
    let p = Partition::new((0..8).map(|i| i % 2).collect(), 2).unwrap();
    let cfg = VectorNetConfig { layers: 4, ..VectorNetConfig::default() };
    (Model::Vector(construct_vector_net(&FeatureMatrix::new(x.clone()).unwrap(), &p, &cfg).unwrap()), x)
}

fn spectral_model() -> Model {
    let xs = random_batch(4, 2, 3, 4, 9);
    let p = Partition::new(vec![0, 1, 0, 1], 2).unwrap();
    let mut m = construct_spectral(&xs, &p, &SpectralConfig { layers: 3, ..SpectralConfig::default() }).unwrap();
    m.lifting = Some(Lifting { bank: random_filters(2, 2, 2, 3).unwrap(), sparsify: Sparsify::SoftThreshold(0.25) });
    Model::Spectral(m)
}

#[test]
fn roundtrip_is_bit_identical() {
    for model in [vector_model().0, spectral_model()] {
        let bytes = to_bytes(&model);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(to_bytes(&back), bytes);
    }
}

#[test]
fn loaded_model_replays_in_memory_forward() {
    let dir = tempfile::tempdir().unwrap();
    let (model, x) = vector_model();
    save_model(&model, &dir.path().join("v.redunet")).unwrap();
    let (Model::Vector(a), Model::Vector(b)) = (&model, load_model(&dir.path().join("v.redunet")).unwrap()) else {
        panic!("kind changed")
    };
    assert_eq!(forward_vector_batch(a, &x).unwrap(), forward_vector_batch(&b, &x).unwrap());

    let model = spectral_model();
    save_model(&model, &dir.path().join("s.redunet")).unwrap();
    let (Model::Spectral(a), Model::Spectral(b)) = (&model, load_model(&dir.path().join("s.redunet")).unwrap()) else {
        panic!("kind changed")
    };
    let probes = random_batch(3, 2, 3, 4, 10);
    assert_eq!(forward_spectral_batch(a, &probes).unwrap(), forward_spectral_batch(&b, &probes).unwrap());
}

#[test]
fn corrupt_archives_are_rejected() {
    let bytes = to_bytes(&spectral_model());
    for cut in [bytes.len() - 1, bytes.len() / 2, 13] {
        assert!(matches!(from_bytes(&bytes[..cut]), Err(ArchiveError::ChecksumFailure)), "cut at {cut}");
    }
    let mut flipped = bytes.clone();
    flipped[40] ^= 1;
    assert!(matches!(from_bytes(&flipped), Err(ArchiveError::ChecksumFailure)));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(from_bytes(&magic), Err(ArchiveError::BadMagic)));
    let mut version = bytes.clone();
    version[8..12].copy_from_slice(&(VERSION + 1).to_le_bytes());
    assert!(matches!(from_bytes(&version), Err(ArchiveError::VersionMismatch { .. })));
}

#[test]
fn zero_layers_give_single_loss_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::defaults(Kind::Gauss2d);
    c.layers = 0;
    c.per_class = 10;
    c.test_per_class = 5;
    c.out = dir.path().to_path_buf();
    let report = run_experiment(&c).unwrap();
    assert_eq!(report.trace.len(), 1);
    let (header, rows) = read_table(&dir.path().join("loss_curve.csv")).unwrap();
    assert_eq!(header, ["layer", "delta_r", "r", "r_c"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1].to_bits(), report.trace[0].delta_r.to_bits());
    let (_, cos) = read_table(&dir.path().join("cosine_train.csv")).unwrap();
    assert_eq!((cos.len(), cos[0].len()), (20, 20));
    let acc = read_metrics(&dir.path().join("accuracy.csv")).unwrap();
    assert!(acc.iter().any(|(k, _)| k == "cross_class_max_abs_cos"));
}

#[test]
fn custom_vector_reads_labeled_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let mut text = String::from("x,y,z,label\n");
    for i in 0..12 {
        let l = i % 2;
        let t = i as f64 * 0.1;
        if l == 0 {
            text += &format!("{},{},{},0\n", 1.0, t, 0.05 * t);
        } else {
            text += &format!("{},{},{},1\n", 0.05 * t, -t, 1.0);
        }
    }
    std::fs::write(&input, text).unwrap();
    let mut c = ExperimentConfig::defaults(Kind::CustomVector);
    c.layers = 20;
    c.input = Some(input);
    c.out = dir.path().join("out");
    let report = run_experiment(&c).unwrap();
    assert_eq!(report.metric("train_accuracy"), Some(1.0));
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_redunet"))
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| binary().args(args).env("RUST_LOG", "off").status().unwrap().code();
    let bad_cfg = dir.path().join("bad.cfg");
    std::fs::write(&bad_cfg, "[gauss2d]\nbogus = 1\n").unwrap();
    assert_eq!(status(&["construct", "--config", bad_cfg.to_str().unwrap()]), Some(2));
    assert_eq!(status(&["construct", "--kind", "gauss2d", "--eps=-1"]), Some(2));
    let out = dir.path().join("o");
    let missing = [
        "construct",
        "--kind",
        "mnist-rotation",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "images=/nonexistent/images",
    ];
    assert_eq!(status(&missing), Some(3));
    let junk = dir.path().join("junk.redunet");
    std::fs::write(&junk, b"not an archive").unwrap();
    assert_eq!(status(&["export-kernel", "--model", junk.to_str().unwrap()]), Some(3));
}

#[test]
fn cli_construct_eval_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = dir.path().join("signals.cfg");
    std::fs::write(&cfg, "# small run\n[signals1d]\nlayers = 5\nper_class = 10\ntest_per_class = 4\nlength = 24\n")
        .unwrap();
    let run = |args: &[&str]| {
        let o = binary().args(args).env("RUST_LOG", "off").output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let (cfg, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    let printed = run(&["construct", "--config", cfg, "--out", out_s, "--seed", "3"]);
    assert!(printed.contains("invariant_augmented_accuracy"));
    let model = out.join("model.redunet");
    let model = model.to_str().unwrap();
    let acc = read_metrics(&out.join("accuracy.csv")).unwrap();
    let eval = run(&["eval", "--model", model, "--config", cfg, "--out", out_s, "--seed", "3"]);
    let expected = acc.iter().find(|m| m.0 == "invariant_original_accuracy").unwrap().1;
    assert!(eval.contains(&format!("original_accuracy = {expected}")), "{eval}");
    let aug = run(&["augment-eval", "--model", model, "--config", cfg, "--out", out_s, "--seed", "3"]);
    let expected = acc.iter().find(|m| m.0 == "invariant_augmented_accuracy").unwrap().1;
    assert!(aug.contains(&format!("augmented_accuracy = {expected}")), "{aug}");
    run(&["export-kernel", "--model", model, "--layer", "4", "--out", out_s]);
    let (header, rows) = read_table(&out.join("kernel_layer4.csv")).unwrap();
    assert_eq!(header.len(), 6);
    // expansion plus two compression kernels, each 7×7 channels × 24 taps
    assert_eq!(rows.len(), 3 * 7 * 7 * 24);
}
