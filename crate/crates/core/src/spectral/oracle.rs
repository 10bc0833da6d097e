//! Dense time-domain counterparts of the spectral computations.
//!
//! These build the full circulant (or doubly block circulant) matrices and
//! run the plain vector-case code on them. Cost grows like (C·H·W)³, so they
//! are meant for small grids: tests and the `selftest` command.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{Dft, MultiChannel, SpectralLayout, Spectrum};
use crate::error::{Error, Result};
use crate::rate::{FeatureMatrix, Partition, RateParams, RateTrace};
use crate::vector::{self, LayerParams, Membership};

/// Column `t` is `z` cyclically shifted down by `t`.
pub fn circulant(z: &[f64]) -> DMatrix<f64> {
    let t = z.len();
    DMatrix::from_fn(t, t, |i, s| z[(i + t - s) % t])
}

/// Columns are the row-major vectorizations of every cyclic translation of
/// the H × W image `z`; column `p·W + q` holds `trans_{p,q}(z)`.
pub fn doubly_circulant(z: &[f64], height: usize, width: usize) -> DMatrix<f64> {
    let n = height * width;
    assert_eq!(z.len(), n, "image size");
    DMatrix::from_fn(n, n, |row, col| {
        let (y, x) = (row / width, row % width);
        let (p, q) = (col / width, col % width);
        z[((y + height - p) % height) * width + (x + width - q) % width]
    })
}

/// `(C·N) × N` stack of per-channel (doubly) circulant matrices: column `s`
/// is the flattened translation of the sample by `s`.
pub fn multichannel_circulant(x: &MultiChannel) -> DMatrix<f64> {
    let n = x.pixels();
    let mut out = DMatrix::zeros(x.channels() * n, n);
    for c in 0..x.channels() {
        let block = doubly_circulant(x.channel(c), x.height(), x.width());
        out.view_mut((c * n, 0), (n, n)).copy_from(&block);
    }
    out
}

/// `circ(Z̄) = [circ(z̄¹), …, circ(z̄ᵐ)]`, of size `(C·N) × (m·N)`.
pub fn circulant_features(xs: &[MultiChannel]) -> DMatrix<f64> {
    let n = xs[0].pixels();
    let mut out = DMatrix::zeros(xs[0].channels() * n, xs.len() * n);
    for (i, x) in xs.iter().enumerate() {
        out.view_mut((0, i * n), (x.channels() * n, n)).copy_from(&multichannel_circulant(x));
    }
    out
}

/// Every label repeated once per translation.
pub fn expand_partition(p: &Partition, copies: usize) -> Result<Partition> {
    let labels = p.labels().iter().flat_map(|&l| std::iter::repeat_n(l, copies)).collect();
    Partition::new(labels, p.classes())
}

fn flat(x: &MultiChannel) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

fn unflat(like: &MultiChannel, v: &DVector<f64>) -> MultiChannel {
    MultiChannel::new(like.channels(), like.height(), like.width(), v.as_slice().to_vec()).expect("same shape")
}

/// `ΔR(circ(Z̄))/N` with `R` and `R_c` scaled the same way.
pub fn dense_rate_trace(xs: &[MultiChannel], p: &Partition, eps: &RateParams) -> Result<RateTrace> {
    let n = xs[0].pixels();
    let z = FeatureMatrix::new(circulant_features(xs))?;
    let t = crate::rate::rate_trace(&z, &expand_partition(p, n)?, eps)?;
    Ok(RateTrace::new(t.r / n as f64, t.r_c / n as f64))
}

/// Dense layer operators built from `circ(Z̄)`.
pub fn dense_layer(xs: &[MultiChannel], p: &Partition, eps: &RateParams, lambda: f64, eta: f64) -> Result<LayerParams> {
    let n = xs[0].pixels();
    let z = FeatureMatrix::new(circulant_features(xs))?;
    Ok(vector::build_layer(&z, &expand_partition(p, n)?, eps, lambda, eta)?.0)
}

/// `∂(ΔR(circ(Z̄))/N)/∂z̄ᵢ = E z̄ᵢ − γ_j Cʲ z̄ᵢ` with dense operators.
pub fn dense_gradient(xs: &[MultiChannel], p: &Partition, eps: &RateParams) -> Result<Vec<MultiChannel>> {
    let layer = dense_layer(xs, p, eps, 1.0, 1.0)?;
    Ok(xs
        .iter()
        .zip(p.labels())
        .map(|(x, &j)| {
            let z = flat(x);
            let g = &layer.expansion * &z - (&layer.compression[j] * &z) * layer.gamma[j];
            unflat(x, &g)
        })
        .collect())
}

/// Dense `(C·N) × (C·N)` matrix of a block-diagonal spectral operator,
/// assembled column by column as `F* · diag(slices) · F`.
pub fn assemble_dense(layout: SpectralLayout, channels: usize, slices: &[Complex64]) -> Result<DMatrix<f64>> {
    let dft = Dft::new(layout);
    let n = layout.pixels();
    let dim = channels * n;
    let mut out = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut e = vec![0.0; dim];
        e[col] = 1.0;
        let x = MultiChannel::new(channels, layout.height, layout.width, e)?;
        let s = dft.forward(&x)?;
        let mut y = vec![Complex64::default(); s.data.len()];
        for (f, (vf, yf)) in s.data.chunks(channels).zip(y.chunks_mut(channels)).enumerate() {
            let m = &slices[f * channels * channels..(f + 1) * channels * channels];
            for r in 0..channels {
                yf[r] = (0..channels).map(|c| m[r * channels + c] * vf[c]).sum();
            }
        }
        let back = dft.inverse(&Spectrum { layout, channels, data: y })?;
        out.column_mut(col).copy_from_slice(back.as_slice());
    }
    Ok(out)
}

/// Result of [`dense_construct`].
#[derive(Debug, Clone)]
pub struct DenseRun {
    /// Features after each layer (entry 0 is the normalized input).
    pub features: Vec<Vec<MultiChannel>>,
    pub trace: Vec<RateTrace>,
}

/// Time-domain construction with dense circulant operators; the reference
/// for the per-frequency construction.
pub fn dense_construct(
    xs: &[MultiChannel],
    p: &Partition,
    layers: usize,
    eta: f64,
    eps: &RateParams,
    lambda: f64,
    membership: Membership,
) -> Result<DenseRun> {
    if xs.len() != p.samples() {
        return Err(Error::LengthMismatch { left: xs.len(), right: p.samples() });
    }
    let mut current: Vec<MultiChannel> = xs.iter().map(MultiChannel::normalized).collect::<Result<_>>()?;
    let mut features = vec![current.clone()];
    let mut trace = Vec::new();
    for _ in 0..layers {
        trace.push(dense_rate_trace(&current, p, eps)?);
        let layer = dense_layer(&current, p, eps, lambda, eta)?;
        current = current
            .iter()
            .zip(p.labels())
            .map(|(x, &j)| {
                let label = (membership == Membership::TrueLabels).then_some(j);
                Ok(unflat(x, &vector::apply_layer(&flat(x), &layer, label)?))
            })
            .collect::<Result<_>>()?;
        features.push(current.clone());
    }
    trace.push(dense_rate_trace(&current, p, eps)?);
    Ok(DenseRun { features, trace })
}
