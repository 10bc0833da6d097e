//! Multi-channel lifting by random filter banks, the sparsifying threshold,
//! and polar resampling for the rotation experiments.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::{Dft, MultiChannel, SpectralLayout, Spectrum};

/// C kernels of size h × w (h = 1 for signals), each with unit ℓ2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub filters: Vec<Vec<f64>>,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl FilterBank {
    pub fn channels(&self) -> usize {
        self.filters.len()
    }
}

/// Gaussian kernels drawn from ChaCha8 seeded with `seed`, then normalized.
pub fn random_filters(channels: usize, height: usize, width: usize, seed: u64) -> Result<FilterBank> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::InvalidArgument("filter bank needs C >= 1 and a non-empty kernel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut filters = Vec::with_capacity(channels);
    while filters.len() < channels {
        let k: Vec<f64> = (0..height * width).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            filters.push(k.into_iter().map(|v| v / norm).collect());
        }
    }
    Ok(FilterBank { filters, height, width, seed })
}

/// Elementwise sparsifying nonlinearity applied after lifting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Sparsify {
    /// Leave responses as they are.
    Identity,
    /// `max(v, 0)`.
    #[default]
    Relu,
    /// `sign(v)·max(|v| − ε_s, 0)`.
    SoftThreshold(f64),
}

impl Sparsify {
    pub fn apply_value(self, v: f64) -> f64 {
        match self {
            Sparsify::Identity => v,
            Sparsify::Relu => v.max(0.0),
            Sparsify::SoftThreshold(t) => v.signum() * (v.abs() - t).max(0.0),
        }
    }
}

pub fn sparsify(z: &MultiChannel, mode: Sparsify) -> Result<MultiChannel> {
    if let Sparsify::SoftThreshold(t) = mode {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument("soft threshold must be non-negative".into()));
        }
    }
    let data = z.as_slice().iter().map(|&v| mode.apply_value(v)).collect();
    MultiChannel::new(z.channels(), z.height(), z.width(), data)
}

/// A filter bank together with the threshold applied to its responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifting {
    pub bank: FilterBank,
    pub sparsify: Sparsify,
}

impl Lifting {
    /// Lifts a single-channel H × W input (H = 1 for signals).
    pub fn apply(&self, x: &MultiChannel) -> Result<MultiChannel> {
        if x.channels() != 1 {
            return Err(Error::ShapeMismatch("lifting expects a single-channel input".into()));
        }
        let z = lift(x.as_slice(), x.height(), x.width(), &self.bank)?;
        sparsify(&z, self.sparsify)
    }
}

fn check_fit(h: usize, w: usize, bank: &FilterBank, len: usize) -> Result<()> {
    if len != h * w {
        return Err(Error::LengthMismatch { left: len, right: h * w });
    }
    if bank.height > h || bank.width > w {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} kernel does not fit a {h}x{w} input",
            bank.height, bank.width
        )));
    }
    Ok(())
}

fn embed(kernel: &[f64], kh: usize, kw: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for a in 0..kh {
        for b in 0..kw {
            out[a * w + b] = kernel[a * kw + b];
        }
    }
    out
}

/// Channel c is the circular convolution of `x` (H × W, row-major) with
/// kernel c zero-embedded at the origin, computed through the DFT.
pub fn lift(x: &[f64], h: usize, w: usize, bank: &FilterBank) -> Result<MultiChannel> {
    check_fit(h, w, bank, x.len())?;
    let layout = SpectralLayout::new(h, w, true);
    let dft = Dft::new(layout);
    let xs = dft.forward(&MultiChannel::new(1, h, w, x.to_vec())?)?;
    let scale = ((h * w) as f64).sqrt();
    let mut out = Vec::with_capacity(bank.channels() * h * w);
    for k in &bank.filters {
        let ks = dft.forward(&MultiChannel::new(1, h, w, embed(k, bank.height, bank.width, h, w))?)?;
        let data: Vec<Complex64> = xs.data.iter().zip(&ks.data).map(|(a, b)| a * b * scale).collect();
        out.extend(dft.inverse(&Spectrum { layout, channels: 1, data })?.into_vec());
    }
    MultiChannel::new(bank.channels(), h, w, out)
}

pub fn lift_1d(x: &[f64], bank: &FilterBank) -> Result<MultiChannel> {
    lift(x, 1, x.len(), bank)
}

pub fn lift_2d(img: &[f64], h: usize, w: usize, bank: &FilterBank) -> Result<MultiChannel> {
    lift(img, h, w, bank)
}

/// Direct-sum circular convolution; reference for [`lift`].
pub fn lift_dense(x: &[f64], h: usize, w: usize, bank: &FilterBank) -> Result<MultiChannel> {
    check_fit(h, w, bank, x.len())?;
    let mut out = Vec::with_capacity(bank.channels() * h * w);
    for k in &bank.filters {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for a in 0..bank.height {
                    for b in 0..bank.width {
                        acc += k[a * bank.width + b] * x[((y + h - a) % h) * w + (xx + w - b) % w];
                    }
                }
                out.push(acc);
            }
        }
    }
    MultiChannel::new(bank.channels(), h, w, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Largest radius whose samples stay inside the pixel grid.
pub fn max_radius(h: usize, w: usize) -> f64 {
    (h.min(w) as f64 - 1.0) / 2.0
}

/// `radii.len()` evenly spaced radii ending `margin` pixels inside the
/// inscribed circle.
pub fn default_radii(count: usize, h: usize, w: usize, margin: f64) -> Vec<f64> {
    let top = max_radius(h, w) - margin;
    (1..=count).map(|i| top * i as f64 / count as f64).collect()
}

/// Samples an H × W image on a polar grid centred at `((W−1)/2, (H−1)/2)`:
/// channel i, position l holds the intensity at radius `radii[i]` and angle
/// `2πl/Γ`. Rotating the image by `2πs/Γ` shifts every channel by `s`.
pub fn polar_transform(
    img: &[f64],
    h: usize,
    w: usize,
    gamma: usize,
    radii: &[f64],
    interp: Interpolation,
) -> Result<MultiChannel> {
    if img.len() != h * w {
        return Err(Error::LengthMismatch { left: img.len(), right: h * w });
    }
    if gamma == 0 || radii.is_empty() {
        return Err(Error::InvalidArgument("polar grid needs at least one angle and one radius".into()));
    }
    let max = max_radius(h, w);
    for &r in radii {
        if !(0.0..=max + 1e-12).contains(&r) {
            return Err(Error::RadiusOutOfBounds { radius: r, max });
        }
    }
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let pixel = |y: usize, x: usize| img[y.min(h - 1) * w + x.min(w - 1)];
    let mut out = Vec::with_capacity(gamma * radii.len());
    for &r in radii {
        for l in 0..gamma {
            let theta = 2.0 * std::f64::consts::PI * l as f64 / gamma as f64;
            let x = (cx + r * theta.cos()).clamp(0.0, w as f64 - 1.0);
            let y = (cy + r * theta.sin()).clamp(0.0, h as f64 - 1.0);
            let v = match interp {
                Interpolation::Nearest => pixel(y.round() as usize, x.round() as usize),
                Interpolation::Bilinear => {
                    let (y0, x0) = (y.floor(), x.floor());
                    let (dy, dx) = (y - y0, x - x0);
                    let (y0, x0) = (y0 as usize, x0 as usize);
                    pixel(y0, x0) * (1.0 - dy) * (1.0 - dx)
                        + pixel(y0, x0 + 1) * (1.0 - dy) * dx
                        + pixel(y0 + 1, x0) * dy * (1.0 - dx)
                        + pixel(y0 + 1, x0 + 1) * dy * dx
                }
            };
            out.push(v);
        }
    }
    MultiChannel::signal(radii.len(), gamma, out)
}
