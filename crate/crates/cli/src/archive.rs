//! Binary model archive.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "REDUNET1" | version u32 | kind u8 (0 vector, 1 spectral)
//! vector:   n u64 | k u64 | depth u64 | stored layers u64
//! spectral: C u64 | H u64 | W u64 | half u8 | k u64 | depth u64 | stored layers u64
//! epsilon f64 | eta f64 | lambda f64
//! trace count u64 | (ΔR, R, R_c) f64 × count
//! spectral only: lifting flag u8, then C, kh, kw, seed u64,
//!                sparsify tag u8, threshold f64, filters f64 × C·kh·kw
//! per layer: γ f64 × k | α f64 | α_j f64 × k | λ f64 | η f64 |
//!            E, then C¹ … Cᵏ (real n×n column-major, or complex
//!            F·C² slices as interleaved re, im)
//! SHA-256 of every preceding byte
//! ```

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use redunet::lifting::{FilterBank, Lifting, Sparsify};
use redunet::spectral::{SpectralLayer, SpectralLayout, SpectralReduNet};
use redunet::vector::{LayerParams, VectorReduNet};
use redunet::RateTrace;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"REDUNET1";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("not a model archive (bad magic)")]
    BadMagic,
    #[error("archive version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("archive checksum does not match its contents")]
    ChecksumFailure,
    #[error("malformed archive: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Vector(VectorReduNet),
    Spectral(SpectralReduNet),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn reals(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
    fn complex(&mut self, vs: &[Complex64]) {
        for v in vs {
            self.f64(v.re);
            self.f64(v.im);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ArchiveError::Malformed("payload shorter than declared shapes".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ArchiveError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<usize, ArchiveError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| ArchiveError::Malformed(format!("size {v} out of range")))
    }
    fn f64(&mut self) -> Result<f64, ArchiveError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn reals(&mut self, n: usize) -> Result<Vec<f64>, ArchiveError> {
        self.check_room(n, 8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn complex(&mut self, n: usize) -> Result<Vec<Complex64>, ArchiveError> {
        self.check_room(n, 16)?;
        (0..n).map(|_| Ok(Complex64::new(self.f64()?, self.f64()?))).collect()
    }
    /// Rejects absurd declared sizes before allocating.
    fn check_room(&self, n: usize, width: usize) -> Result<(), ArchiveError> {
        match n.checked_mul(width) {
            Some(b) if b <= self.buf.len() - self.at => Ok(()),
            _ => Err(ArchiveError::Malformed("payload shorter than declared shapes".into())),
        }
    }
}

fn write_trace(w: &mut Writer, trace: &[RateTrace]) {
    w.u64(trace.len());
    for t in trace {
        w.reals(&[t.delta_r, t.r, t.r_c]);
    }
}

fn read_trace(r: &mut Reader) -> Result<Vec<RateTrace>, ArchiveError> {
    let n = r.u64()?;
    r.check_room(n, 24)?;
    (0..n)
        .map(|_| {
            let (d, rr, rc) = (r.f64()?, r.f64()?, r.f64()?);
            Ok(RateTrace { delta_r: d, r: rr, r_c: rc })
        })
        .collect()
}

fn write_common(w: &mut Writer, gamma: &[f64], alpha: f64, alpha_class: &[f64], lambda: f64, eta: f64) {
    w.reals(gamma);
    w.f64(alpha);
    w.reals(alpha_class);
    w.f64(lambda);
    w.f64(eta);
}

type Common = (Vec<f64>, f64, Vec<f64>, f64, f64);

fn read_common(r: &mut Reader, k: usize) -> Result<Common, ArchiveError> {
    Ok((r.reals(k)?, r.f64()?, r.reals(k)?, r.f64()?, r.f64()?))
}

fn encode(model: &Model) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    match model {
        Model::Vector(m) => {
            w.u8(0);
            w.u64(m.dim);
            w.u64(m.classes);
            w.u64(m.depth);
            w.u64(m.layers.len());
            w.reals(&[m.epsilon, m.eta, m.lambda]);
            write_trace(&mut w, &m.trace);
            for l in &m.layers {
                write_common(&mut w, &l.gamma, l.alpha, &l.alpha_class, l.lambda, l.eta);
                w.reals(l.expansion.as_slice());
                for c in &l.compression {
                    w.reals(c.as_slice());
                }
            }
        }
        Model::Spectral(m) => {
            w.u8(1);
            w.u64(m.channels);
            w.u64(m.layout.height);
            w.u64(m.layout.width);
            w.u8(m.layout.half as u8);
            w.u64(m.classes);
            w.u64(m.depth);
            w.u64(m.layers.len());
            w.reals(&[m.epsilon, m.eta, m.lambda]);
            write_trace(&mut w, &m.trace);
            match &m.lifting {
                None => w.u8(0),
                Some(lift) => {
                    w.u8(1);
                    let b = &lift.bank;
                    w.u64(b.channels());
                    w.u64(b.height);
                    w.u64(b.width);
                    w.0.extend_from_slice(&b.seed.to_le_bytes());
                    let (tag, t) = match lift.sparsify {
                        Sparsify::Identity => (0, 0.0),
                        Sparsify::Relu => (1, 0.0),
                        Sparsify::SoftThreshold(t) => (2, t),
                    };
                    w.u8(tag);
                    w.f64(t);
                    for f in &b.filters {
                        w.reals(f);
                    }
                }
            }
            for l in &m.layers {
                write_common(&mut w, &l.gamma, l.alpha, &l.alpha_class, l.lambda, l.eta);
                w.complex(&l.expansion);
                for c in &l.compression {
                    w.complex(c);
                }
            }
        }
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

fn decode_vector(r: &mut Reader) -> Result<VectorReduNet, ArchiveError> {
    let (n, k, depth, stored) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?);
    let (epsilon, eta, lambda) = (r.f64()?, r.f64()?, r.f64()?);
    let trace = read_trace(r)?;
    let nn = n.checked_mul(n).ok_or_else(|| ArchiveError::Malformed("dimension overflow".into()))?;
    let mut layers = Vec::with_capacity(stored.min(1 << 16));
    for _ in 0..stored {
        let (gamma, alpha, alpha_class, l_lambda, l_eta) = read_common(r, k)?;
        let expansion = DMatrix::from_vec(n, n, r.reals(nn)?);
        let compression = (0..k).map(|_| Ok(DMatrix::from_vec(n, n, r.reals(nn)?))).collect::<Result<_, ArchiveError>>()?;
        layers.push(LayerParams { expansion, compression, gamma, alpha, alpha_class, lambda: l_lambda, eta: l_eta });
    }
    Ok(VectorReduNet { dim: n, classes: k, epsilon, eta, lambda, depth, layers, trace })
}

fn decode_spectral(r: &mut Reader) -> Result<SpectralReduNet, ArchiveError> {
    let (channels, height, width) = (r.u64()?, r.u64()?, r.u64()?);
    let half = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(ArchiveError::Malformed(format!("half-spectrum flag {v}"))),
    };
    let (k, depth, stored) = (r.u64()?, r.u64()?, r.u64()?);
    let (epsilon, eta, lambda) = (r.f64()?, r.f64()?, r.f64()?);
    let trace = read_trace(r)?;
    let lifting = match r.u8()? {
        0 => None,
        1 => {
            let (c, kh, kw) = (r.u64()?, r.u64()?, r.u64()?);
            let seed = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            let tag = r.u8()?;
            let t = r.f64()?;
            let sparsify = match tag {
                0 => Sparsify::Identity,
                1 => Sparsify::Relu,
                2 => Sparsify::SoftThreshold(t),
                v => return Err(ArchiveError::Malformed(format!("sparsify tag {v}"))),
            };
            let size = kh.checked_mul(kw).ok_or_else(|| ArchiveError::Malformed("kernel overflow".into()))?;
            let filters = (0..c).map(|_| r.reals(size)).collect::<Result<_, _>>()?;
            Some(Lifting { bank: FilterBank { filters, height: kh, width: kw, seed }, sparsify })
        }
        v => return Err(ArchiveError::Malformed(format!("lifting flag {v}"))),
    };
    let layout = SpectralLayout::new(height, width, half);
    let slices = layout
        .frequencies()
        .checked_mul(channels * channels)
        .ok_or_else(|| ArchiveError::Malformed("shape overflow".into()))?;
    let mut layers = Vec::with_capacity(stored.min(1 << 16));
    for _ in 0..stored {
        let (gamma, alpha, alpha_class, l_lambda, l_eta) = read_common(r, k)?;
        let expansion = r.complex(slices)?;
        let compression = (0..k).map(|_| r.complex(slices)).collect::<Result<_, _>>()?;
        layers.push(SpectralLayer {
            layout,
            channels,
            expansion,
            compression,
            gamma,
            alpha,
            alpha_class,
            lambda: l_lambda,
            eta: l_eta,
        });
    }
    Ok(SpectralReduNet { layout, channels, classes: k, epsilon, eta, lambda, depth, layers, trace, lifting })
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    encode(model)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model, ArchiveError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(ArchiveError::ChecksumFailure);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(ArchiveError::VersionMismatch { found: version, expected: VERSION });
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(ArchiveError::ChecksumFailure);
    }
    let mut r = Reader { buf: body, at: 12 };
    let model = match r.u8()? {
        0 => Model::Vector(decode_vector(&mut r)?),
        1 => Model::Spectral(decode_spectral(&mut r)?),
        v => return Err(ArchiveError::Malformed(format!("model kind {v}"))),
    };
    if r.at != body.len() {
        return Err(ArchiveError::Malformed(format!("{} trailing payload bytes", body.len() - r.at)));
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ArchiveError> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ArchiveError> {
    from_bytes(&std::fs::read(path)?)
}
