//! The experiment suite. Every run is a pure function of its config: data
//! come from `seed`, test data from `seed + 1` and random filters from
//! `seed + 2`.

use std::path::Path;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use redunet::classify::{
    evaluate, fit_spectral_subspaces, fit_subspaces, predict_all, predict_spectral, SpectralSubspaceModel,
};
use redunet::datasets::{
    gaussian_sphere, load_mnist, random_means_separated, rotate_augment, shift_augment, signals_1d, LabeledDataset,
};
use redunet::lifting::{default_radii, polar_transform, random_filters, Interpolation, Lifting, Sparsify};
use redunet::spectral::{
    compression_kernel, construct_spectral_with, forward_spectral_batch, kernel_extract, MultiChannel, SpectralConfig,
    SpectralReduNet,
};
use redunet::vector::{apply_layer_batch, construct_vector_net_with, forward_vector_batch, VectorNetConfig, VectorReduNet};
use redunet::{FeatureMatrix, Partition, RateTrace};

use crate::archive::{self, Model};
use crate::config::{ExperimentConfig, Kind};
use crate::metrics;
use crate::{csv, CliError, CliResult};

pub const LOSS_CURVE: &str = "loss_curve.csv";
pub const COSINE_TRAIN: &str = "cosine_train.csv";
pub const COSINE_TEST: &str = "cosine_test.csv";
pub const ACCURACY: &str = "accuracy.csv";
pub const MODEL: &str = "model.redunet";

/// MNIST images are 28 × 28.
const SIDE: usize = 28;
const COS_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Report {
    pub kind: Kind,
    pub trace: Vec<RateTrace>,
    pub metrics: Vec<(String, f64)>,
}

impl Report {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.0 == name).map(|m| m.1)
    }
}

struct Outcome {
    trace: Vec<RateTrace>,
    cos_train: DMatrix<f64>,
    cos_test: DMatrix<f64>,
    metrics: Vec<(String, f64)>,
    model: Model,
}

/// Runs one experiment and writes its CSVs and model archive into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<Report> {
    config.validate()?;
    std::fs::create_dir_all(&config.out)?;
    let start = Instant::now();
    let outcome = match config.kind {
        Kind::Gauss2d => run_vector(config, gauss_data(config, 2)?)?,
        Kind::Gauss3d => run_vector(config, gauss_data(config, 3)?)?,
        Kind::CustomVector => run_vector(config, custom_data(config)?)?,
        Kind::Signals1d | Kind::MnistRotation | Kind::MnistTranslation => run_spectral(config)?,
    };
    info!("{} finished in {:.1?}", config.kind, start.elapsed());
    write_loss_curve(&config.out.join(LOSS_CURVE), &outcome.trace)?;
    csv::write_matrix(&config.out.join(COSINE_TRAIN), &metrics::rows(&outcome.cos_train))?;
    csv::write_matrix(&config.out.join(COSINE_TEST), &metrics::rows(&outcome.cos_test))?;
    csv::write_metrics(&config.out.join(ACCURACY), &outcome.metrics)?;
    archive::save_model(&outcome.model, &config.out.join(MODEL))?;
    Ok(Report { kind: config.kind, trace: outcome.trace, metrics: outcome.metrics })
}

pub fn write_loss_curve(path: &Path, trace: &[RateTrace]) -> CliResult<()> {
    let rows: Vec<Vec<f64>> =
        trace.iter().enumerate().map(|(i, t)| vec![i as f64, t.delta_r, t.r, t.r_c]).collect();
    csv::write_table(path, &["layer", "delta_r", "r", "r_c"], &rows)
}

fn metric(name: &str, v: f64) -> (String, f64) {
    (name.to_string(), v)
}

fn trace_metrics(trace: &[RateTrace]) -> Vec<(String, f64)> {
    let first = trace.first().map_or(0.0, |t| t.delta_r);
    let last = trace.last().map_or(0.0, |t| t.delta_r);
    vec![metric("delta_r_initial", first), metric("delta_r_final", last)]
}

struct VectorData {
    train: DMatrix<f64>,
    partition: Partition,
    test: DMatrix<f64>,
    test_labels: Vec<usize>,
}

fn columns(vs: &[nalgebra::DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_columns(vs)
}

fn gauss_data(config: &ExperimentConfig, dim: usize) -> CliResult<VectorData> {
    let k = config.classes;
    let means = random_means_separated(k, dim, config.min_angle.to_radians(), config.seed)?;
    let train = gaussian_sphere(&means, config.sigma, config.per_class, config.seed)?;
    let test = gaussian_sphere(&means, config.sigma, config.test_per_class, config.seed + 1)?;
    Ok(VectorData {
        train: columns(&train.samples),
        partition: train.partition()?,
        test: columns(&test.samples),
        test_labels: test.labels,
    })
}

/// Rows of `features…, label`.
fn read_labeled_csv(path: &Path) -> CliResult<(DMatrix<f64>, Vec<usize>)> {
    let (header, rows) = csv::read_table(path)?;
    if header.len() < 2 || header.last().map(String::as_str) != Some("label") {
        return Err(CliError::Data(format!("{}: last column must be `label`", path.display())));
    }
    let n = header.len() - 1;
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let l = r[n];
        if r.len() != header.len() || l < 0.0 || l.fract() != 0.0 {
            return Err(CliError::Data(format!("{}: bad row {}", path.display(), i + 2)));
        }
        labels.push(l as usize);
    }
    let x = DMatrix::from_fn(n, rows.len(), |i, j| rows[j][i]);
    Ok((x, labels))
}

fn custom_data(config: &ExperimentConfig) -> CliResult<VectorData> {
    let input = config.input.as_ref().ok_or_else(|| CliError::Config("custom-vector needs `input`".into()))?;
    let (train, labels) = read_labeled_csv(input)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let partition = Partition::new(labels, k)?;
    let (test, test_labels) = match &config.test_input {
        Some(p) => read_labeled_csv(p)?,
        None => (train.clone(), partition.labels().to_vec()),
    };
    if test.nrows() != train.nrows() {
        return Err(CliError::Data("test features differ in dimension from training features".into()));
    }
    Ok(VectorData { train, partition, test, test_labels })
}

fn vector_config(config: &ExperimentConfig, eta: f64, eps: f64, retain: bool) -> VectorNetConfig {
    VectorNetConfig {
        layers: config.layers,
        eta,
        epsilon: eps,
        lambda: config.lambda,
        membership: config.membership,
        retain_layers: retain,
    }
}

fn run_vector(config: &ExperimentConfig, data: VectorData) -> CliResult<Outcome> {
    let cfg = vector_config(config, config.eta, config.eps, true);
    let (model, z) = construct_vector_net_with(&FeatureMatrix::new(data.train)?, &data.partition, &cfg, |i, _| {
        if (i + 1) % 500 == 0 {
            info!("layer {}", i + 1);
        }
        Ok(())
    })?;
    let z_test = forward_vector_batch(&model, &data.test)?;
    let sub = fit_subspaces(z.data(), &data.partition, config.energy)?;
    let labels = data.partition.labels();
    let cos_train = metrics::abs_cosine(z.data(), z.data());
    let cos_test = metrics::abs_cosine(&z_test, &z_test);
    let mut m = trace_metrics(&model.trace);
    m.push(metric("train_accuracy", evaluate(&predict_all(z.data(), &sub), labels)?));
    m.push(metric("test_accuracy", evaluate(&predict_all(&z_test, &sub), &data.test_labels)?));
    m.push(metric("within_class_max_angle_deg", metrics::within_class_max_angle(&cos_train, labels)));
    m.push(metric("cross_class_max_abs_cos", metrics::cross_class_max_cos(&cos_train, labels)));
    m.push(metric("test_within_class_max_angle_deg", metrics::within_class_max_angle(&cos_test, &data.test_labels)));
    m.push(metric("test_cross_class_max_abs_cos", metrics::cross_class_max_cos(&cos_test, &data.test_labels)));
    Ok(Outcome { trace: model.trace.clone(), cos_train, cos_test, metrics: m, model: Model::Vector(model) })
}

/// Raw inputs of a shift- or translation-invariant experiment.
pub struct SpectralData {
    pub train: LabeledDataset<MultiChannel>,
    pub test: LabeledDataset<MultiChannel>,
    /// Test set under the experiment's group action.
    pub augmented: LabeledDataset<MultiChannel>,
    pub lifting: Option<Lifting>,
}

fn check_count<T: Clone>(ds: &LabeledDataset<T>, per_class: usize, what: &str) -> CliResult<()> {
    if ds.len() != per_class * ds.classes {
        return Err(CliError::Data(format!(
            "{what}: wanted {per_class} per class, found {} samples over {} classes",
            ds.len(),
            ds.classes
        )));
    }
    Ok(())
}

fn mnist_split(config: &ExperimentConfig) -> CliResult<(LabeledDataset<MultiChannel>, LabeledDataset<MultiChannel>)> {
    let all = load_mnist(&config.images, &config.labels, Some(&config.digits))?;
    let train = all.take_per_class(config.per_class, 0);
    let test = all.take_per_class(config.test_per_class, config.per_class);
    check_count(&train, config.per_class, "training split")?;
    check_count(&test, config.test_per_class, "test split")?;
    Ok((train, test))
}

fn polar(config: &ExperimentConfig, ds: &LabeledDataset<MultiChannel>) -> CliResult<LabeledDataset<MultiChannel>> {
    let radii = default_radii(config.channels, SIDE, SIDE, config.margin);
    Ok(ds.map(|x| polar_transform(x.as_slice(), SIDE, SIDE, config.angles, &radii, Interpolation::Bilinear))?)
}

/// Every test signal at `steps` evenly spaced cyclic shifts.
fn shift_signals(ds: &LabeledDataset<MultiChannel>, steps: usize) -> LabeledDataset<MultiChannel> {
    let mut samples = Vec::with_capacity(ds.len() * steps);
    let mut labels = Vec::with_capacity(ds.len() * steps);
    for (x, &l) in ds.samples.iter().zip(&ds.labels) {
        for i in 0..steps {
            samples.push(x.shifted_1d((i * x.width() / steps) as isize));
            labels.push(l);
        }
    }
    LabeledDataset {
        samples,
        labels,
        classes: ds.classes,
        seed: ds.seed,
        provenance: format!("{} [{steps} shifts]", ds.provenance),
    }
}

pub fn spectral_data(config: &ExperimentConfig) -> CliResult<SpectralData> {
    let filters = |h: usize, w: usize| -> CliResult<Lifting> {
        Ok(Lifting { bank: random_filters(config.channels, h, w, config.seed + 2)?, sparsify: Sparsify::Relu })
    };
    match config.kind {
        Kind::Signals1d => {
            let as_signal = |ds: LabeledDataset<Vec<f64>>| ds.map(|x| MultiChannel::signal(1, x.len(), x.clone()));
            let train = as_signal(signals_1d(config.per_class, config.length, config.noise, config.seed)?)?;
            let test = as_signal(signals_1d(config.test_per_class, config.length, config.noise, config.seed + 1)?)?;
            let augmented = shift_signals(&test, config.steps);
            Ok(SpectralData { train, test, augmented, lifting: Some(filters(1, config.kernel)?) })
        }
        Kind::MnistRotation => {
            let (train, test) = mnist_split(config)?;
            let (train, test) = (polar(config, &train)?, polar(config, &test)?);
            let augmented = rotate_augment(&test, config.steps)?;
            Ok(SpectralData { train, test, augmented, lifting: None })
        }
        Kind::MnistTranslation => {
            let (train, test) = mnist_split(config)?;
            let augmented = shift_augment(&test, config.stride)?;
            Ok(SpectralData { train, test, augmented, lifting: Some(filters(config.kernel, config.kernel)?) })
        }
        k => Err(CliError::Config(format!("{k} is not a shift-invariant experiment"))),
    }
}

/// Lifting (if the model carries one) followed by the learned layers.
pub fn forward_raw(model: &SpectralReduNet, xs: &[MultiChannel]) -> CliResult<Vec<MultiChannel>> {
    match &model.lifting {
        Some(l) => {
            let lifted: Vec<MultiChannel> = xs.iter().map(|x| l.apply(x)).collect::<redunet::Result<_>>()?;
            Ok(forward_spectral_batch(model, &lifted)?)
        }
        None => Ok(forward_spectral_batch(model, xs)?),
    }
}

fn spectral_predictions(z: &[MultiChannel], sub: &SpectralSubspaceModel) -> CliResult<Vec<usize>> {
    Ok(z.iter().map(|x| predict_spectral(x, sub)).collect::<redunet::Result<_>>()?)
}

fn run_spectral(config: &ExperimentConfig) -> CliResult<Outcome> {
    let data = spectral_data(config)?;
    let partition = data.train.partition()?;
    let lifted: Vec<MultiChannel> = match &data.lifting {
        Some(l) => data.train.samples.iter().map(|x| l.apply(x)).collect::<redunet::Result<_>>()?,
        None => data.train.samples.clone(),
    };
    let cfg = SpectralConfig {
        layers: config.layers,
        eta: config.eta,
        epsilon: config.eps,
        lambda: config.lambda,
        membership: config.membership,
        retain_layers: true,
        half_spectrum: true,
    };
    let start = Instant::now();
    let (mut model, batch) = construct_spectral_with(&lifted, &partition, &cfg, |i, _| {
        if (i + 1) % 100 == 0 {
            info!("layer {} ({:.1?})", i + 1, start.elapsed());
        }
        Ok(())
    })?;
    model.lifting = data.lifting.clone();
    let z_train = batch.to_samples(&model.dft())?;
    let sub = fit_spectral_subspaces(&z_train, &partition, config.energy)?;
    let z_test = forward_raw(&model, &data.test.samples)?;
    let z_aug = forward_raw(&model, &data.augmented.samples)?;
    let pred_test = spectral_predictions(&z_test, &sub)?;
    let pred_aug = spectral_predictions(&z_aug, &sub)?;
    info!("invariant model evaluated ({:.1?})", start.elapsed());

    let flat_train = metrics::flatten(&z_train);
    let flat_test = metrics::flatten(&z_test);
    let cos_train = metrics::abs_cosine(&flat_train, &flat_train);
    let cos_test = metrics::abs_cosine(&flat_test, &flat_test);
    let mut m = trace_metrics(&model.trace);
    m.push(metric("train_accuracy", evaluate(&spectral_predictions(&z_train, &sub)?, partition.labels())?));
    m.push(metric("invariant_original_accuracy", evaluate(&pred_test, &data.test.labels)?));
    m.push(metric("invariant_augmented_accuracy", evaluate(&pred_aug, &data.augmented.labels)?));
    let steps = data.augmented.len() / data.test.len().max(1);
    let repeated: Vec<usize> = pred_test.iter().flat_map(|&p| std::iter::repeat(p).take(steps)).collect();
    m.push(metric("augmented_prediction_agreement", metrics::agreement(&repeated, &pred_aug)));

    match config.kind {
        Kind::Signals1d => {
            let fraction = metrics::shifted_cross_class_fraction(
                &z_test,
                &data.test.labels,
                &z_train,
                partition.labels(),
                COS_THRESHOLD,
            )?;
            m.push(metric("cross_class_shifted_fraction_le_0.1", fraction));
        }
        Kind::MnistRotation => {
            let rotated = rotate_augment(&data.test, config.vector_steps)?;
            m.extend(vector_baseline(config, &data.train, &data.test, &rotated)?);
        }
        Kind::MnistTranslation => {
            m.extend(vector_baseline(config, &data.train, &data.test, &data.augmented)?);
        }
        _ => {}
    }
    Ok(Outcome { trace: model.trace.clone(), cos_train, cos_test, metrics: m, model: Model::Spectral(model) })
}

/// Non-invariant vector model on flattened inputs. Layers are not kept, so
/// the test probes are pushed through each layer as it is built.
fn vector_baseline(
    config: &ExperimentConfig,
    train: &LabeledDataset<MultiChannel>,
    test: &LabeledDataset<MultiChannel>,
    augmented: &LabeledDataset<MultiChannel>,
) -> CliResult<Vec<(String, f64)>> {
    let start = Instant::now();
    let partition = train.partition()?;
    let x = metrics::flatten(&train.samples);
    let mut probe_cols = test.samples.clone();
    probe_cols.extend(augmented.samples.iter().cloned());
    let mut probe = FeatureMatrix::normalized(metrics::flatten(&probe_cols))?.into_inner();
    let cfg = vector_config(config, config.vector_eta, config.vector_eps, false);
    let (model, z) = construct_vector_net_with(&FeatureMatrix::new(x)?, &partition, &cfg, |i, layer| {
        probe = apply_layer_batch(&probe, layer, None)?;
        if (i + 1) % 100 == 0 {
            info!("vector layer {} ({:.1?})", i + 1, start.elapsed());
        }
        Ok(())
    })?;
    let sub = fit_subspaces(z.data(), &partition, config.energy)?;
    let preds = predict_all(&probe, &sub);
    let n = test.len();
    let original = evaluate(&preds[..n], &test.labels)?;
    let shifted = evaluate(&preds[n..], &augmented.labels)?;
    Ok(vec![
        metric("vector_delta_r_initial", model.trace.first().map_or(0.0, |t| t.delta_r)),
        metric("vector_delta_r_final", model.trace.last().map_or(0.0, |t| t.delta_r)),
        metric("vector_original_accuracy", original),
        metric("vector_augmented_accuracy", shifted),
        metric("vector_degradation", original - shifted),
    ])
}

/// Accuracy of an archived model on the experiment's regenerated test data,
/// either as generated (`augmented = false`) or under the group action.
pub fn evaluate_archive(config: &ExperimentConfig, model: &Model, augmented: bool) -> CliResult<Vec<(String, f64)>> {
    config.validate()?;
    match model {
        Model::Vector(m) => {
            if augmented {
                return Err(CliError::Config(format!("{} has no augmented test set", config.kind)));
            }
            let data = match config.kind {
                Kind::Gauss2d => gauss_data(config, 2)?,
                Kind::Gauss3d => gauss_data(config, 3)?,
                Kind::CustomVector => custom_data(config)?,
                k => return Err(CliError::Config(format!("archive holds a vector model, config is {k}"))),
            };
            evaluate_vector(config, m, &data)
        }
        Model::Spectral(m) => {
            let data = spectral_data(config)?;
            let partition = data.train.partition()?;
            let sub = fit_spectral_subspaces(&forward_raw(m, &data.train.samples)?, &partition, config.energy)?;
            let set = if augmented { &data.augmented } else { &data.test };
            let preds = spectral_predictions(&forward_raw(m, &set.samples)?, &sub)?;
            let name = if augmented { "augmented_accuracy" } else { "original_accuracy" };
            Ok(vec![metric(name, evaluate(&preds, &set.labels)?)])
        }
    }
}

fn evaluate_vector(config: &ExperimentConfig, model: &VectorReduNet, data: &VectorData) -> CliResult<Vec<(String, f64)>> {
    if model.layers.len() != model.depth {
        return Err(CliError::Config("archive does not hold the layer operators".into()));
    }
    let z = forward_vector_batch(model, &data.train)?;
    let sub = fit_subspaces(&z, &data.partition, config.energy)?;
    let z_test = forward_vector_batch(model, &data.test)?;
    Ok(vec![metric("original_accuracy", evaluate(&predict_all(&z_test, &sub), &data.test_labels)?)])
}

/// Convolution kernels of one layer as rows `operator, out, in, h, w, value`;
/// operator 0 is the expansion kernel and `j + 1` the compression kernel of
/// class `j`.
pub fn export_kernels(model: &SpectralReduNet, layer: usize, path: &Path) -> CliResult<()> {
    let l = model.layers.get(layer).ok_or_else(|| {
        CliError::Config(format!("layer {layer} out of range, archive holds {}", model.layers.len()))
    })?;
    let mut kernels = vec![kernel_extract(l)?];
    for j in 0..l.classes() {
        kernels.push(compression_kernel(l, j)?);
    }
    let mut rows = Vec::new();
    for (op, k) in kernels.iter().enumerate() {
        for c in 0..k.channels {
            for c2 in 0..k.channels {
                for h in 0..k.height {
                    for w in 0..k.width {
                        rows.push(vec![op as f64, c as f64, c2 as f64, h as f64, w as f64, k.get(c, c2, h, w)]);
                    }
                }
            }
        }
    }
    csv::write_table(path, &["operator", "out", "in", "h", "w", "value"], &rows)
}
