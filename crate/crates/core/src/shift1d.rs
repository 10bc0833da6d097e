//! Shift-invariant network for multi-channel 1D signals (C × T), built per
//! frequency. Thin layer over [`crate::spectral`] with H = 1.

use crate::error::{Error, Result};
use crate::rate::{Partition, RateParams};
use crate::spectral::{
    self, oracle, ConvKernel, Dft, MultiChannelSignal, SpectralBatch, SpectralConfig, SpectralGradient,
    SpectralLayer, SpectralLayout, SpectralReduNet, Spectrum,
};

pub use crate::spectral::{dft_channels, idft_channels, spectral_layer_update};
pub use crate::spectral::oracle::circulant as circulant_oracle;

pub type Shift1DReduNet = SpectralReduNet;

fn check_signals(xs: &[MultiChannelSignal]) -> Result<usize> {
    let first = xs.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    if xs.iter().any(|x| x.height() != 1 || x.shape() != first.shape()) {
        return Err(Error::ShapeMismatch("1D batch needs equally shaped C x T signals".into()));
    }
    Ok(first.width())
}

/// Unitary spectra of a batch, full or half spectrum.
pub fn spectral_batch(xs: &[MultiChannelSignal], half: bool) -> Result<SpectralBatch> {
    let t = check_signals(xs)?;
    SpectralBatch::from_samples(&Dft::new(SpectralLayout::new(1, t, half)), xs)
}

/// `(1/T)·ΔR(circ(Z̄))` through per-frequency log-dets.
pub fn shift_rate_reduction(xs: &[MultiChannelSignal], p: &Partition, eps: &RateParams) -> Result<f64> {
    Ok(spectral::spectral_rate_trace(&spectral_batch(xs, true)?, p, eps)?.delta_r)
}

/// The same value from the dense circulant matrix.
pub fn shift_rate_reduction_dense(xs: &[MultiChannelSignal], p: &Partition, eps: &RateParams) -> Result<f64> {
    check_signals(xs)?;
    Ok(oracle::dense_rate_trace(xs, p, eps)?.delta_r)
}

pub fn spectral_operators(
    xs: &[MultiChannelSignal],
    p: &Partition,
    eps: &RateParams,
    lambda: f64,
    eta: f64,
) -> Result<SpectralLayer> {
    Ok(spectral::spectral_operators(&spectral_batch(xs, true)?, p, eps, lambda, eta)?.0)
}

pub fn spectral_gradient(xs: &[MultiChannelSignal], p: &Partition, eps: &RateParams) -> Result<SpectralGradient> {
    let batch = spectral_batch(xs, true)?;
    spectral::spectral_gradient(&Dft::new(batch.layout), &batch, p, eps)
}

pub fn construct_shift1d(xs: &[MultiChannelSignal], p: &Partition, config: &SpectralConfig) -> Result<Shift1DReduNet> {
    check_signals(xs)?;
    spectral::construct_spectral(xs, p, config)
}

pub fn forward_shift1d(model: &Shift1DReduNet, x: &MultiChannelSignal) -> Result<MultiChannelSignal> {
    spectral::forward_spectral(model, x)
}

pub fn kernel_extract(layer: &SpectralLayer) -> Result<ConvKernel> {
    spectral::kernel_extract(layer)
}

/// Applies a layer to a spectrum computed in any layout matching the layer.
pub fn layer_update(v: &Spectrum, layer: &SpectralLayer) -> Result<Spectrum> {
    spectral::spectral_layer_update(v, layer)
}
