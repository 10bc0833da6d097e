//! Multi-channel signals and images, their unitary DFTs, and the
//! per-frequency network shared by the 1D (H = 1) and 2D cases.
//!
//! The DFT is unitary: `1/√(HW)` on both transforms. A block-circulant
//! operator built from signals `z` acts on the unitary spectrum through the
//! unnormalized spectrum of `z`, so per-frequency operators carry a factor
//! `N = HW` in front of the Gram matrix (see [`layer::spectral_operators`]).

mod layer;
pub mod oracle;

pub use layer::{
    compression_kernel, construct_spectral, construct_spectral_with, forward_spectral,
    forward_spectral_batch, kernel_extract, spectral_gradient, spectral_layer_update,
    spectral_operators, spectral_rate_trace, update_batch, ConvKernel, SpectralConfig,
    SpectralGradient, SpectralLayer, SpectralReduNet,
};

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Largest tolerated imaginary part after an inverse transform of a
/// spectrum that should be conjugate-symmetric.
pub const IMAGINARY_TOLERANCE: f64 = 1e-6;

/// Real tensor of shape C × H × W, stored channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannel {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// A C × T signal is a `MultiChannel` with height 1.
pub type MultiChannelSignal = MultiChannel;
pub type MultiChannelImage = MultiChannel;

impl MultiChannel {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch("multi-channel tensor with an empty axis".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::LengthMismatch { left: data.len(), right: channels * height * width });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("multi-channel tensor"));
        }
        Ok(Self { channels, height, width, data })
    }

    /// C × T signal from channel-major data.
    pub fn signal(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(channels, 1, len, data)
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Pixels per channel, `H·W` (or `T`).
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scaled to unit Frobenius norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 1e-300) {
            return Err(Error::ZeroVector);
        }
        Ok(Self { data: self.data.iter().map(|v| v / n).collect(), ..*self })
    }

    /// Cyclic translation: `out[c, h, w] = self[c, h − dy, w − dx]`.
    pub fn shifted(&self, dy: isize, dx: isize) -> Self {
        let (h, w) = (self.height, self.width);
        let sy = dy.rem_euclid(h as isize) as usize;
        let sx = dx.rem_euclid(w as isize) as usize;
        let mut out = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            for y in 0..h {
                let src_row = ((y + h - sy) % h + c * h) * w;
                let dst_row = (y + c * h) * w;
                for x in 0..w {
                    out[dst_row + x] = self.data[src_row + (x + w - sx) % w];
                }
            }
        }
        Self { data: out, ..*self }
    }

    /// 1D cyclic shift along the last axis.
    pub fn shifted_1d(&self, s: isize) -> Self {
        self.shifted(0, s)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Which frequencies are stored. In half mode only `q ∈ 0..=W/2` is kept on
/// the last axis; the rest follow from conjugate symmetry of real data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralLayout {
    pub height: usize,
    pub width: usize,
    pub half: bool,
}

impl SpectralLayout {
    pub fn new(height: usize, width: usize, half: bool) -> Self {
        Self { height, width, half }
    }

    /// Stored frequencies along the last axis.
    pub fn stored_width(&self) -> usize {
        if self.half {
            self.width / 2 + 1
        } else {
            self.width
        }
    }

    pub fn frequencies(&self) -> usize {
        self.height * self.stored_width()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// `(p, q)` of stored frequency index `f`.
    pub fn frequency(&self, f: usize) -> (usize, usize) {
        (f / self.stored_width(), f % self.stored_width())
    }

    /// How many full-spectrum frequencies stored frequency `f` stands for.
    pub fn weight(&self, f: usize) -> f64 {
        if !self.half {
            return 1.0;
        }
        let q = f % self.stored_width();
        if q == 0 || (self.width % 2 == 0 && q == self.width / 2) {
            1.0
        } else {
            2.0
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.frequencies()).map(|f| self.weight(f)).collect()
    }
}

/// Unitary spectrum of one multi-channel sample, indexed `[f·C + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub layout: SpectralLayout,
    pub channels: usize,
    pub data: Vec<Complex64>,
}

/// Alias matching the per-sample spectral feature of a 1D signal.
pub type SpectralFeature = Spectrum;

impl Spectrum {
    pub fn at(&self, f: usize, c: usize) -> Complex64 {
        self.data[f * self.channels + c]
    }

    /// Frobenius norm of the full spectrum (equal to the time-domain norm).
    pub fn norm(&self) -> f64 {
        weighted_norm_sqr(&self.data, &self.layout, self.channels).sqrt()
    }
}

pub(crate) fn weighted_norm_sqr(data: &[Complex64], layout: &SpectralLayout, channels: usize) -> f64 {
    data.chunks(channels)
        .enumerate()
        .map(|(f, v)| layout.weight(f) * v.iter().map(|x| x.norm_sqr()).sum::<f64>())
        .sum()
}

/// Planned unitary 2D DFT for one grid size.
#[derive(Clone)]
pub struct Dft {
    layout: SpectralLayout,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("layout", &self.layout).finish()
    }
}

impl Dft {
    pub fn new(layout: SpectralLayout) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            layout,
            rows: planner.plan_fft_forward(layout.width),
            cols: planner.plan_fft_forward(layout.height),
            rows_inv: planner.plan_fft_inverse(layout.width),
            cols_inv: planner.plan_fft_inverse(layout.height),
        }
    }

    pub fn layout(&self) -> SpectralLayout {
        self.layout
    }

    /// Full H × W unitary DFT of one real channel into `out` (row-major).
    fn forward_full(&self, x: &[f64], out: &mut [Complex64]) {
        let (h, w) = (self.layout.height, self.layout.width);
        for (o, &v) in out.iter_mut().zip(x) {
            *o = Complex64::new(v, 0.0);
        }
        self.rows.process(out);
        if h > 1 {
            let mut col = vec![Complex64::default(); h];
            for q in 0..w {
                for p in 0..h {
                    col[p] = out[p * w + q];
                }
                self.cols.process(&mut col);
                for p in 0..h {
                    out[p * w + q] = col[p];
                }
            }
        }
        let scale = 1.0 / ((h * w) as f64).sqrt();
        out.iter_mut().for_each(|v| *v *= scale);
    }

    /// In-place full inverse unitary DFT.
    fn inverse_full(&self, buf: &mut [Complex64]) {
        let (h, w) = (self.layout.height, self.layout.width);
        if h > 1 {
            let mut col = vec![Complex64::default(); h];
            for q in 0..w {
                for p in 0..h {
                    col[p] = buf[p * w + q];
                }
                self.cols_inv.process(&mut col);
                for p in 0..h {
                    buf[p * w + q] = col[p];
                }
            }
        }
        self.rows_inv.process(buf);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    /// Unitary spectrum of a sample, per channel.
    pub fn forward(&self, x: &MultiChannel) -> Result<Spectrum> {
        let l = self.layout;
        if x.height() != l.height || x.width() != l.width {
            return Err(Error::ShapeMismatch(format!(
                "sample is {}x{}, transform expects {}x{}",
                x.height(),
                x.width(),
                l.height,
                l.width
            )));
        }
        let c_count = x.channels();
        let wq = l.stored_width();
        let mut data = vec![Complex64::default(); l.frequencies() * c_count];
        let mut buf = vec![Complex64::default(); l.pixels()];
        for c in 0..c_count {
            self.forward_full(x.channel(c), &mut buf);
            for p in 0..l.height {
                for q in 0..wq {
                    data[(p * wq + q) * c_count + c] = buf[p * l.width + q];
                }
            }
        }
        Ok(Spectrum { layout: l, channels: c_count, data })
    }

    /// Real signal from a spectrum. Fails if the result is not real to
    /// within [`IMAGINARY_TOLERANCE`].
    pub fn inverse(&self, s: &Spectrum) -> Result<MultiChannel> {
        let l = self.layout;
        if s.layout != l {
            return Err(Error::ShapeMismatch("spectrum layout does not match transform".into()));
        }
        let c_count = s.channels;
        let (h, w, wq) = (l.height, l.width, l.stored_width());
        let mut out = Vec::with_capacity(c_count * l.pixels());
        let mut buf = vec![Complex64::default(); l.pixels()];
        let mut residue = 0.0f64;
        for c in 0..c_count {
            for p in 0..h {
                for q in 0..w {
                    buf[p * w + q] = if q < wq {
                        s.data[(p * wq + q) * c_count + c]
                    } else {
                        let (mp, mq) = ((h - p) % h, w - q);
                        s.data[(mp * wq + mq) * c_count + c].conj()
                    };
                }
            }
            self.inverse_full(&mut buf);
            for v in &buf {
                residue = residue.max(v.im.abs());
                out.push(v.re);
            }
        }
        if residue > IMAGINARY_TOLERANCE || !residue.is_finite() {
            return Err(Error::ImaginaryResidue(residue));
        }
        MultiChannel::new(c_count, h, w, out)
    }
}

/// Full-spectrum unitary DFT of every channel.
pub fn dft_channels(x: &MultiChannel) -> Spectrum {
    let dft = Dft::new(SpectralLayout::new(x.height(), x.width(), false));
    dft.forward(x).expect("layout built from the sample")
}

/// Inverse of [`dft_channels`]; any stored layout is accepted.
pub fn idft_channels(s: &Spectrum) -> Result<MultiChannel> {
    Dft::new(s.layout).inverse(s)
}

/// Spectra of a batch of equally shaped samples, stored sample-major:
/// `[(i·F + f)·C + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBatch {
    pub layout: SpectralLayout,
    pub channels: usize,
    pub samples: usize,
    pub data: Vec<Complex64>,
}

impl SpectralBatch {
    pub fn from_samples(dft: &Dft, xs: &[MultiChannel]) -> Result<Self> {
        let first = xs.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let channels = first.channels();
        let mut data = Vec::with_capacity(xs.len() * dft.layout().frequencies() * channels);
        for x in xs {
            if x.channels() != channels {
                return Err(Error::ShapeMismatch("samples with different channel counts".into()));
            }
            data.extend(dft.forward(x)?.data);
        }
        Ok(Self { layout: dft.layout(), channels, samples: xs.len(), data })
    }

    pub fn sample_len(&self) -> usize {
        self.layout.frequencies() * self.channels
    }

    pub fn sample(&self, i: usize) -> &[Complex64] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn spectrum(&self, i: usize) -> Spectrum {
        Spectrum { layout: self.layout, channels: self.channels, data: self.sample(i).to_vec() }
    }

    pub fn to_samples(&self, dft: &Dft) -> Result<Vec<MultiChannel>> {
        (0..self.samples).map(|i| dft.inverse(&self.spectrum(i))).collect()
    }
}
