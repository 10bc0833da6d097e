use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{weighted_norm_sqr, Dft, MultiChannel, SpectralBatch, SpectralLayout, Spectrum};
use crate::error::{Error, Result};
use crate::lifting::Lifting;
use crate::linalg;
use crate::rate::{Partition, RateParams, RateTrace};
use crate::vector::{default_lambda, softmax_neg, Membership};

/// Per-frequency operator slices of one layer, each C × C row-major and
/// stored contiguously by frequency: `Ē(f)` at `[f·C² ..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLayer {
    pub layout: SpectralLayout,
    pub channels: usize,
    pub expansion: Vec<Complex64>,
    pub compression: Vec<Vec<Complex64>>,
    pub gamma: Vec<f64>,
    pub alpha: f64,
    pub alpha_class: Vec<f64>,
    pub lambda: f64,
    pub eta: f64,
}

impl SpectralLayer {
    pub fn classes(&self) -> usize {
        self.compression.len()
    }

    pub fn expansion_slice(&self, f: usize) -> &[Complex64] {
        let cc = self.channels * self.channels;
        &self.expansion[f * cc..(f + 1) * cc]
    }

    pub fn compression_slice(&self, j: usize, f: usize) -> &[Complex64] {
        let cc = self.channels * self.channels;
        &self.compression[j][f * cc..(f + 1) * cc]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub layers: usize,
    pub eta: f64,
    pub epsilon: f64,
    /// `None` means `10·k`.
    pub lambda: Option<f64>,
    pub membership: Membership,
    pub retain_layers: bool,
    /// Store only `q ≤ W/2` on the last axis.
    pub half_spectrum: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            eta: 0.5,
            epsilon: 0.1,
            lambda: None,
            membership: Membership::Estimated,
            retain_layers: true,
            half_spectrum: true,
        }
    }
}

/// Shift-invariant (H = 1) or translation-invariant network.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReduNet {
    pub layout: SpectralLayout,
    pub channels: usize,
    pub classes: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub lambda: f64,
    pub depth: usize,
    pub layers: Vec<SpectralLayer>,
    /// Shift-invariant rates of the training features, input first.
    pub trace: Vec<RateTrace>,
    /// Lifting applied to raw inputs before the first layer, if any.
    pub lifting: Option<Lifting>,
}

impl SpectralReduNet {
    pub fn dft(&self) -> Dft {
        Dft::new(self.layout)
    }
}

fn check_batch(batch: &SpectralBatch, p: &Partition) -> Result<()> {
    if batch.samples != p.samples() {
        return Err(Error::LengthMismatch { left: batch.samples, right: p.samples() });
    }
    Ok(())
}

/// Σᵢ vᵢ(f) vᵢ(f)* per class and frequency, as `[j][f·C² ..]`.
fn class_grams(batch: &SpectralBatch, p: &Partition) -> Vec<Vec<Complex64>> {
    let c = batch.channels;
    let nf = batch.layout.frequencies();
    let mut grams = vec![vec![Complex64::default(); nf * c * c]; p.classes()];
    for (i, &label) in p.labels().iter().enumerate() {
        let g = &mut grams[label];
        for (f, v) in batch.sample(i).chunks(c).enumerate() {
            let slot = &mut g[f * c * c..(f + 1) * c * c];
            for r in 0..c {
                for s in 0..c {
                    slot[r * c + s] += v[r] * v[s].conj();
                }
            }
        }
    }
    grams
}

fn to_matrix(slice: &[Complex64], c: usize, scale: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(c, c, |r, s| slice[r * c + s] * scale)
}

/// Per-frequency operators and the shift-invariant rates of `batch`.
///
/// With `N = HW`, `Ē(f) = α[I + α·N·V(f)V(f)*]⁻¹` and
/// `C̄ʲ(f) = α_j[I + α_j·N·V(f)ΠʲV(f)*]⁻¹` for unitary spectra `V`,
/// `α = C/(mε²)`, `α_j = C/(tr Πʲ ε²)`. The rates are
/// `(1/N)·Σ_f ½[log det(I + αN·VV*) − Σ_j γ_j log det(I + α_jN·VΠʲV*)]`,
/// which equals `ΔR(circ(Z̄))/N`.
pub fn spectral_operators(
    batch: &SpectralBatch,
    p: &Partition,
    eps: &RateParams,
    lambda: f64,
    eta: f64,
) -> Result<(SpectralLayer, RateTrace)> {
    check_batch(batch, p)?;
    let c = batch.channels;
    let layout = batch.layout;
    let n = layout.pixels() as f64;
    let alpha = eps.alpha(c, p.samples());
    let alpha_class: Vec<f64> = (0..p.classes()).map(|j| eps.alpha(c, p.count(j))).collect();
    let gamma = p.gammas();
    let grams = class_grams(batch, p);

    type Slices = (Vec<Complex64>, f64, Vec<(Vec<Complex64>, f64)>);
    let per_freq: Vec<Slices> = (0..layout.frequencies())
        .into_par_iter()
        .map(|f| -> Result<Slices> {
            let range = f * c * c..(f + 1) * c * c;
            let mut total = vec![Complex64::default(); c * c];
            let mut classes = Vec::with_capacity(grams.len());
            for (g, &aj) in grams.iter().zip(&alpha_class) {
                let slice = &g[range.clone()];
                total.iter_mut().zip(slice).for_each(|(t, v)| *t += v);
                let (op, ld) = linalg::resolvent(&to_matrix(slice, c, n), aj)?;
                classes.push((flatten(&op), ld));
            }
            let (op, ld) = linalg::resolvent(&to_matrix(&total, c, n), alpha)?;
            Ok((flatten(&op), ld, classes))
        })
        .collect::<Result<_>>()?;

    let nf = layout.frequencies();
    let mut expansion = Vec::with_capacity(nf * c * c);
    let mut compression = vec![Vec::with_capacity(nf * c * c); p.classes()];
    let (mut r, mut r_c) = (0.0, 0.0);
    for (f, (e, ld, classes)) in per_freq.into_iter().enumerate() {
        let w = layout.weight(f);
        r += w * 0.5 * ld;
        expansion.extend(e);
        for (j, (cj, ldj)) in classes.into_iter().enumerate() {
            r_c += w * 0.5 * gamma[j] * ldj;
            compression[j].extend(cj);
        }
    }
    let layer = SpectralLayer {
        layout,
        channels: c,
        expansion,
        compression,
        gamma,
        alpha,
        alpha_class,
        lambda,
        eta,
    };
    Ok((layer, RateTrace::new(r / n, r_c / n)))
}

fn flatten(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let c = m.nrows();
    (0..c * c).map(|k| m[(k / c, k % c)]).collect()
}

/// Shift-invariant rates `R`, `R_c` and `ΔR` (each divided by `N`).
pub fn spectral_rate_trace(batch: &SpectralBatch, p: &Partition, eps: &RateParams) -> Result<RateTrace> {
    Ok(spectral_operators(batch, p, eps, 1.0, 1.0)?.1)
}

fn apply_slices(ops: &[Complex64], v: &[Complex64], c: usize, out: &mut [Complex64]) {
    for (f, (vf, of)) in v.chunks(c).zip(out.chunks_mut(c)).enumerate() {
        let m = &ops[f * c * c..(f + 1) * c * c];
        for r in 0..c {
            let row = &m[r * c..(r + 1) * c];
            of[r] = row.iter().zip(vf).map(|(a, b)| a * b).sum();
        }
    }
}

/// One layer applied to one sample spectrum, in place.
fn update_in_place(v: &mut [Complex64], layer: &SpectralLayer, label: Option<usize>) -> Result<()> {
    let c = layer.channels;
    let layout = &layer.layout;
    let len = v.len();
    let mut expanded = vec![Complex64::default(); len];
    apply_slices(&layer.expansion, v, c, &mut expanded);
    let mut compressed = vec![vec![Complex64::default(); len]; layer.classes()];
    for (ops, out) in layer.compression.iter().zip(compressed.iter_mut()) {
        apply_slices(ops, v, c, out);
    }
    let weights = match label {
        Some(j) => {
            if j >= layer.classes() {
                return Err(Error::InvalidArgument(format!("label {j} outside layer classes")));
            }
            let mut w = vec![0.0; layer.classes()];
            w[j] = 1.0;
            w
        }
        None => {
            let norms: Vec<f64> =
                compressed.iter().map(|w| weighted_norm_sqr(w, layout, c).sqrt()).collect();
            softmax_neg(&norms, layer.lambda)
        }
    };
    let eta = layer.eta;
    for (k, x) in v.iter_mut().enumerate() {
        let mut step = expanded[k];
        for ((w, g), cj) in weights.iter().zip(&layer.gamma).zip(&compressed) {
            step -= cj[k] * (g * w);
        }
        *x += step * eta;
    }
    let norm = weighted_norm_sqr(v, layout, c).sqrt();
    if !(norm > 1e-300) || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

fn check_layer_shape(layout: SpectralLayout, channels: usize, layer: &SpectralLayer) -> Result<()> {
    if layout != layer.layout || channels != layer.channels {
        return Err(Error::ShapeMismatch(format!(
            "feature {}x{}x{} does not match layer {}x{}x{}",
            channels, layout.height, layout.width, layer.channels, layer.layout.height, layer.layout.width
        )));
    }
    Ok(())
}

/// `v ← v + ηĒv − η Σ_j γ_j π̂ʲ C̄ʲv` per frequency, then unit Frobenius norm.
/// Memberships come from `‖C̄ʲv‖` aggregated over all frequencies.
pub fn spectral_layer_update(v: &Spectrum, layer: &SpectralLayer) -> Result<Spectrum> {
    check_layer_shape(v.layout, v.channels, layer)?;
    let mut out = v.clone();
    update_in_place(&mut out.data, layer, None)?;
    Ok(out)
}

/// Applies a layer to every sample of a batch; `labels` switches to
/// true-class memberships.
pub fn update_batch(batch: &mut SpectralBatch, layer: &SpectralLayer, labels: Option<&[usize]>) -> Result<()> {
    check_layer_shape(batch.layout, batch.channels, layer)?;
    if let Some(l) = labels {
        if l.len() != batch.samples {
            return Err(Error::LengthMismatch { left: l.len(), right: batch.samples });
        }
    }
    let n = batch.sample_len();
    batch
        .data
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(i, v)| update_in_place(v, layer, labels.map(|l| l[i])))
}

/// The two terms of the gradient of the shift-invariant rate reduction with
/// respect to each time-domain sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGradient {
    /// `IDFT(Ē(f)vᵢ(f))`.
    pub expansion: Vec<MultiChannel>,
    /// `γ_j·IDFT(C̄ʲ(f)vᵢ(f))` for the class j of sample i.
    pub compression: Vec<MultiChannel>,
}

impl SpectralGradient {
    /// `expansion − compression` per sample.
    pub fn total(&self) -> Vec<MultiChannel> {
        self.expansion
            .iter()
            .zip(&self.compression)
            .map(|(e, c)| {
                let data = e.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a - b).collect();
                MultiChannel::new(e.channels(), e.height(), e.width(), data).expect("same shape")
            })
            .collect()
    }
}

pub fn spectral_gradient(
    dft: &Dft,
    batch: &SpectralBatch,
    p: &Partition,
    eps: &RateParams,
) -> Result<SpectralGradient> {
    let (layer, _) = spectral_operators(batch, p, eps, 1.0, 1.0)?;
    let c = batch.channels;
    let mut expansion = Vec::with_capacity(batch.samples);
    let mut compression = Vec::with_capacity(batch.samples);
    let mut buf = vec![Complex64::default(); batch.sample_len()];
    for (i, &j) in p.labels().iter().enumerate() {
        let v = batch.sample(i);
        apply_slices(&layer.expansion, v, c, &mut buf);
        expansion.push(dft.inverse(&Spectrum { layout: batch.layout, channels: c, data: buf.clone() })?);
        apply_slices(&layer.compression[j], v, c, &mut buf);
        buf.iter_mut().for_each(|x| *x *= layer.gamma[j]);
        compression.push(dft.inverse(&Spectrum { layout: batch.layout, channels: c, data: buf.clone() })?);
    }
    Ok(SpectralGradient { expansion, compression })
}

/// Builds the network from training samples (already lifted).
pub fn construct_spectral(xs: &[MultiChannel], p: &Partition, config: &SpectralConfig) -> Result<SpectralReduNet> {
    Ok(construct_spectral_with(xs, p, config, |_, _| Ok(()))?.0)
}

/// Like [`construct_spectral`], calling `observer(index, layer)` as each
/// layer is built and returning the final training spectra.
pub fn construct_spectral_with<F>(
    xs: &[MultiChannel],
    p: &Partition,
    config: &SpectralConfig,
    mut observer: F,
) -> Result<(SpectralReduNet, SpectralBatch)>
where
    F: FnMut(usize, &SpectralLayer) -> Result<()>,
{
    let first = xs.first().ok_or_else(|| Error::InvalidArgument("no training samples".into()))?;
    if xs.len() != p.samples() {
        return Err(Error::LengthMismatch { left: xs.len(), right: p.samples() });
    }
    if !(config.eta >= 0.0) {
        return Err(Error::InvalidArgument("eta must be non-negative".into()));
    }
    let eps = RateParams::new(config.epsilon)?;
    let lambda = config.lambda.unwrap_or_else(|| default_lambda(p.classes()));
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let layout = SpectralLayout::new(first.height(), first.width(), config.half_spectrum);
    let dft = Dft::new(layout);
    let normalized: Vec<MultiChannel> = xs.iter().map(MultiChannel::normalized).collect::<Result<_>>()?;
    let mut batch = SpectralBatch::from_samples(&dft, &normalized)?;
    let labels = match config.membership {
        Membership::Estimated => None,
        Membership::TrueLabels => Some(p.labels()),
    };
    let mut layers = Vec::new();
    let mut trace = Vec::with_capacity(config.layers + 1);
    for index in 0..config.layers {
        let (layer, rates) = spectral_operators(&batch, p, &eps, lambda, config.eta)?;
        trace.push(rates);
        update_batch(&mut batch, &layer, labels)?;
        observer(index, &layer)?;
        if config.retain_layers {
            layers.push(layer);
        }
    }
    trace.push(spectral_rate_trace(&batch, p, &eps)?);
    let model = SpectralReduNet {
        layout,
        channels: first.channels(),
        classes: p.classes(),
        epsilon: config.epsilon,
        eta: config.eta,
        lambda,
        depth: config.layers,
        layers,
        trace,
        lifting: None,
    };
    Ok((model, batch))
}

fn forward_with(model: &SpectralReduNet, dft: &Dft, x: &MultiChannel) -> Result<MultiChannel> {
    if x.channels() != model.channels || x.height() != model.layout.height || x.width() != model.layout.width {
        return Err(Error::ShapeMismatch(format!(
            "input {:?} does not match model {}x{}x{}",
            x.shape(),
            model.channels,
            model.layout.height,
            model.layout.width
        )));
    }
    let mut s = dft.forward(&x.normalized()?)?;
    for layer in &model.layers {
        update_in_place(&mut s.data, layer, None)?;
    }
    dft.inverse(&s)
}

/// The learned feature map: normalize, transform, apply every layer with
/// estimated memberships, transform back.
pub fn forward_spectral(model: &SpectralReduNet, x: &MultiChannel) -> Result<MultiChannel> {
    forward_with(model, &model.dft(), x)
}

pub fn forward_spectral_batch(model: &SpectralReduNet, xs: &[MultiChannel]) -> Result<Vec<MultiChannel>> {
    let dft = model.dft();
    xs.par_iter().map(|x| forward_with(model, &dft, x)).collect()
}

/// Real multi-channel convolution kernel, indexed `[((c·C + c')·H + h)·W + w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ConvKernel {
    pub fn get(&self, c: usize, c2: usize, h: usize, w: usize) -> f64 {
        self.data[((c * self.channels + c2) * self.height + h) * self.width + w]
    }

    /// `out[c] = Σ_c' k[c, c'] ⊛ z[c']`, circular, evaluated directly.
    pub fn apply(&self, z: &MultiChannel) -> Result<MultiChannel> {
        let (ch, h, w) = (self.channels, self.height, self.width);
        if z.shape() != (ch, h, w) {
            return Err(Error::ShapeMismatch(format!("kernel {ch}x{h}x{w} vs input {:?}", z.shape())));
        }
        let mut out = vec![0.0; ch * h * w];
        for c in 0..ch {
            for c2 in 0..ch {
                for a in 0..h {
                    for b in 0..w {
                        let k = self.get(c, c2, a, b);
                        if k == 0.0 {
                            continue;
                        }
                        for y in 0..h {
                            for x in 0..w {
                                out[(c * h + y) * w + x] += k * z.get(c2, (y + h - a) % h, (x + w - b) % w);
                            }
                        }
                    }
                }
            }
        }
        MultiChannel::new(ch, h, w, out)
    }
}

fn extract(layout: SpectralLayout, channels: usize, slices: &[Complex64]) -> Result<ConvKernel> {
    let dft = Dft::new(layout);
    let c = channels;
    let nf = layout.frequencies();
    let scale = 1.0 / (layout.pixels() as f64).sqrt();
    let mut data = Vec::with_capacity(c * c * layout.pixels());
    for r in 0..c {
        for s in 0..c {
            let entry: Vec<Complex64> = (0..nf).map(|f| slices[f * c * c + r * c + s] * scale).collect();
            let k = dft.inverse(&Spectrum { layout, channels: 1, data: entry })?;
            data.extend_from_slice(k.as_slice());
        }
    }
    Ok(ConvKernel { channels: c, height: layout.height, width: layout.width, data })
}

/// Convolution kernel `ē` of the expansion operator: the entry-wise inverse
/// transform of `Ē(f)` across frequencies.
pub fn kernel_extract(layer: &SpectralLayer) -> Result<ConvKernel> {
    extract(layer.layout, layer.channels, &layer.expansion)
}

/// Convolution kernel of the compression operator of class `j`.
pub fn compression_kernel(layer: &SpectralLayer, j: usize) -> Result<ConvKernel> {
    let slices = layer
        .compression
        .get(j)
        .ok_or_else(|| Error::InvalidArgument(format!("no class {j} in layer")))?;
    extract(layer.layout, layer.channels, slices)
}
