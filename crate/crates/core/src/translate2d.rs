//! Translation-invariant network for multi-channel images (C × H × W), built
//! per frequency pair `(p, q)`. The real-input half spectrum is used on the
//! W axis only.

use crate::error::{Error, Result};
use crate::rate::{Partition, RateParams};
use crate::spectral::{
    self, oracle, Dft, MultiChannel, MultiChannelImage, SpectralBatch, SpectralConfig, SpectralGradient,
    SpectralLayer, SpectralLayout, SpectralReduNet, Spectrum,
};

pub use crate::spectral::oracle::doubly_circulant as doubly_circulant_oracle;

pub type Translation2DReduNet = SpectralReduNet;

fn check_images(xs: &[MultiChannelImage]) -> Result<(usize, usize)> {
    let first = xs.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    if xs.iter().any(|x| x.shape() != first.shape()) {
        return Err(Error::ShapeMismatch("2D batch needs equally shaped C x H x W images".into()));
    }
    Ok((first.height(), first.width()))
}

/// Full-spectrum unitary 2D DFT (`1/√(HW)`) of every channel.
pub fn dft2_channels(x: &MultiChannel) -> Spectrum {
    spectral::dft_channels(x)
}

pub fn idft2_channels(s: &Spectrum) -> Result<MultiChannel> {
    spectral::idft_channels(s)
}

pub fn spectral_batch_2d(xs: &[MultiChannelImage], half: bool) -> Result<SpectralBatch> {
    let (h, w) = check_images(xs)?;
    SpectralBatch::from_samples(&Dft::new(SpectralLayout::new(h, w, half)), xs)
}

/// `(1/HW)·ΔR` of the doubly block circulant features.
pub fn translation_rate_reduction(xs: &[MultiChannelImage], p: &Partition, eps: &RateParams) -> Result<f64> {
    Ok(spectral::spectral_rate_trace(&spectral_batch_2d(xs, true)?, p, eps)?.delta_r)
}

pub fn translation_rate_reduction_dense(xs: &[MultiChannelImage], p: &Partition, eps: &RateParams) -> Result<f64> {
    check_images(xs)?;
    Ok(oracle::dense_rate_trace(xs, p, eps)?.delta_r)
}

pub fn spectral_operators_2d(
    xs: &[MultiChannelImage],
    p: &Partition,
    eps: &RateParams,
    lambda: f64,
    eta: f64,
) -> Result<SpectralLayer> {
    Ok(spectral::spectral_operators(&spectral_batch_2d(xs, true)?, p, eps, lambda, eta)?.0)
}

pub fn spectral_gradient_2d(xs: &[MultiChannelImage], p: &Partition, eps: &RateParams) -> Result<SpectralGradient> {
    let batch = spectral_batch_2d(xs, true)?;
    spectral::spectral_gradient(&Dft::new(batch.layout), &batch, p, eps)
}

pub fn construct_translation2d(
    xs: &[MultiChannelImage],
    p: &Partition,
    config: &SpectralConfig,
) -> Result<Translation2DReduNet> {
    check_images(xs)?;
    spectral::construct_spectral(xs, p, config)
}

pub fn forward_translation2d(model: &Translation2DReduNet, x: &MultiChannelImage) -> Result<MultiChannelImage> {
    spectral::forward_spectral(model, x)
}
