//! Deterministic generators, IDX loading and cyclic augmentation.
//!
//! Every generator draws from a single ChaCha8 stream seeded by the caller,
//! so a `(generator, seed)` pair reproduces bit-identically on any machine.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rate::Partition;
use crate::spectral::MultiChannel;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    pub samples: Vec<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub seed: Option<u64>,
    pub provenance: String,
}

impl<T: Clone> LabeledDataset<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn partition(&self) -> Result<Partition> {
        Partition::new(self.labels.clone(), self.classes)
    }

    /// Up to `per_class` samples of every class, skipping the first `skip`
    /// of each class, in original order.
    pub fn take_per_class(&self, per_class: usize, skip: usize) -> Self {
        let mut seen = vec![0usize; self.classes];
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for (x, &l) in self.samples.iter().zip(&self.labels) {
            let k = seen[l];
            seen[l] += 1;
            if k >= skip && k < skip + per_class {
                samples.push(x.clone());
                labels.push(l);
            }
        }
        Self {
            samples,
            labels,
            classes: self.classes,
            seed: self.seed,
            provenance: format!("{} [per-class {per_class} after {skip}]", self.provenance),
        }
    }

    pub fn map<U, F: FnMut(&T) -> Result<U>>(&self, f: F) -> Result<LabeledDataset<U>> {
        Ok(LabeledDataset {
            samples: self.samples.iter().map(f).collect::<Result<_>>()?,
            labels: self.labels.clone(),
            classes: self.classes,
            seed: self.seed,
            provenance: self.provenance.clone(),
        })
    }
}

/// `k` means drawn uniformly on the unit sphere in `dim` dimensions.
pub fn random_means(k: usize, dim: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| loop {
            let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let n = v.norm();
            if n > 1e-8 {
                break v / n;
            }
        })
        .collect()
}

const MAX_RESAMPLES: usize = 1000;

/// Like [`random_means`], redrawn from the same stream until every pair of
/// mean lines is at least `min_angle` radians apart (`arccos|⟨μ_a, μ_b⟩|`).
pub fn random_means_separated(k: usize, dim: usize, min_angle: f64, seed: u64) -> Result<Vec<DVector<f64>>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let max_cos = min_angle.cos();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESAMPLES {
        let means: Vec<DVector<f64>> = (0..k)
            .map(|_| loop {
                let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let n = v.norm();
                if n > 1e-8 {
                    break v / n;
                }
            })
            .collect();
        let ok = (0..k).all(|a| (a + 1..k).all(|b| means[a].dot(&means[b]).abs() <= max_cos));
        if ok {
            return Ok(means);
        }
    }
    Err(Error::InvalidArgument(format!("no {k} means in {dim}D separated by {min_angle} rad")))
}

/// `m_per_class` draws from `N(μ_j, σ²I)` per class, each projected onto the
/// unit sphere. Classes are stored in contiguous blocks.
pub fn gaussian_sphere(
    means: &[DVector<f64>],
    sigma: f64,
    m_per_class: usize,
    seed: u64,
) -> Result<LabeledDataset<DVector<f64>>> {
    let dim = means.first().ok_or_else(|| Error::InvalidArgument("no class means".into()))?.len();
    if dim < 2 || means.iter().any(|m| m.len() != dim || (m.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::InvalidArgument("means must be unit vectors of one dimension >= 2".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("sigma must be non-negative".into()));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(means.len() * m_per_class);
    let mut labels = Vec::with_capacity(means.len() * m_per_class);
    for (j, mu) in means.iter().enumerate() {
        for _ in 0..m_per_class {
            let mut tries = 0;
            let v = loop {
                let v = mu + DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
                let n = v.norm();
                if n > 1e-12 {
                    break v / n;
                }
                tries += 1;
                if tries >= MAX_RESAMPLES {
                    return Err(Error::ZeroVector);
                }
            };
            samples.push(v);
            labels.push(j);
        }
    }
    Ok(LabeledDataset {
        samples,
        labels,
        classes: means.len(),
        seed: Some(seed),
        provenance: format!("gaussian-sphere dim={dim} k={} sigma={sigma}", means.len()),
    })
}

/// `sign` with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Noise-free class function: `sin t` for class 0, `sign(sin t)` for class 1.
pub fn signal_function(class: usize, t: f64) -> f64 {
    match class {
        0 => t.sin(),
        _ => sign(t.sin()),
    }
}

/// `n` points `t₀ + 2πk/n`, `k = 0..n`, of the class function.
pub fn signal_grid(class: usize, t0: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| signal_function(class, t0 + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

/// Two classes of 1D signals: sinusoids and square waves with random phase
/// `t₀ ~ U[0, 10π]` per sample and additive `N(0, noise²)` noise.
pub fn signals_1d(m_per_class: usize, n: usize, noise: f64, seed: u64) -> Result<LabeledDataset<Vec<f64>>> {
    if n < 2 {
        return Err(Error::InvalidArgument("signals need at least 2 points".into()));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(2 * m_per_class);
    let mut labels = Vec::with_capacity(2 * m_per_class);
    for j in 0..2 {
        for _ in 0..m_per_class {
            let t0 = rng.random_range(0.0..10.0 * std::f64::consts::PI);
            let mut x = signal_grid(j, t0, n);
            x.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
            samples.push(x);
            labels.push(j);
        }
    }
    Ok(LabeledDataset {
        samples,
        labels,
        classes: 2,
        seed: Some(seed),
        provenance: format!("signals-1d n={n} noise={noise}"),
    })
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

fn be_u32(buf: &[u8], at: usize, path: &Path) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{}: header ends early", path.display())))
}

/// Raw IDX image file: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let buf = read_all(path)?;
    let magic = be_u32(&buf, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic { found: magic, expected: IDX_IMAGES_MAGIC });
    }
    let count = be_u32(&buf, 4, path)? as usize;
    let rows = be_u32(&buf, 8, path)? as usize;
    let cols = be_u32(&buf, 12, path)? as usize;
    let need = count * rows * cols;
    let body = &buf[16..];
    if body.len() < need {
        return Err(Error::TruncatedFile(format!(
            "{}: header declares {need} pixel bytes, found {}",
            path.display(),
            body.len()
        )));
    }
    Ok((count, rows, cols, body[..need].to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let buf = read_all(path)?;
    let magic = be_u32(&buf, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic { found: magic, expected: IDX_LABELS_MAGIC });
    }
    let count = be_u32(&buf, 4, path)? as usize;
    let body = &buf[8..];
    if body.len() < count {
        return Err(Error::TruncatedFile(format!(
            "{}: header declares {count} labels, found {}",
            path.display(),
            body.len()
        )));
    }
    Ok(body[..count].to_vec())
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    if rows == 0 || cols == 0 || pixels.len() % (rows * cols) != 0 {
        return Err(Error::ShapeMismatch("pixel buffer is not a whole number of images".into()));
    }
    let mut f = BufWriter::new(File::create(path)?);
    for v in [IDX_IMAGES_MAGIC, (pixels.len() / (rows * cols)) as u32, rows as u32, cols as u32] {
        f.write_all(&v.to_be_bytes())?;
    }
    f.write_all(pixels)?;
    f.flush()?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    f.flush()?;
    Ok(())
}

/// Images scaled to `[0, 1]` as single-channel `MultiChannel`s.
///
/// With a digit filter only those digits are kept and labels become the
/// position of the digit in the filter; otherwise labels are the digits.
pub fn load_mnist(image_path: &Path, label_path: &Path, digits: Option<&[u8]>) -> Result<LabeledDataset<MultiChannel>> {
    let (count, rows, cols, pixels) = read_idx_images(image_path)?;
    let raw_labels = read_idx_labels(label_path)?;
    if raw_labels.len() != count {
        return Err(Error::LabelImageCountMismatch { labels: raw_labels.len(), images: count });
    }
    let size = rows * cols;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (i, &d) in raw_labels.iter().enumerate() {
        let label = match digits {
            Some(keep) => match keep.iter().position(|&k| k == d) {
                Some(pos) => pos,
                None => continue,
            },
            None => d as usize,
        };
        let img = pixels[i * size..(i + 1) * size].iter().map(|&p| p as f64 / 255.0).collect();
        samples.push(MultiChannel::new(1, rows, cols, img)?);
        labels.push(label);
    }
    let classes = match digits {
        Some(keep) => keep.len(),
        None => 10,
    };
    Ok(LabeledDataset {
        samples,
        labels,
        classes,
        seed: None,
        provenance: format!("idx {}", image_path.display()),
    })
}

/// Replaces every sample by its cyclic translations at multiples of
/// `stride` on each axis (`⌊len/stride⌋` offsets per axis). Sample-major.
pub fn shift_augment(ds: &LabeledDataset<MultiChannel>, stride: usize) -> Result<LabeledDataset<MultiChannel>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (x, &l) in ds.samples.iter().zip(&ds.labels) {
        let ny = (x.height() / stride).max(1);
        let nx = (x.width() / stride).max(1);
        for a in 0..ny {
            for b in 0..nx {
                samples.push(x.shifted((a * stride) as isize, (b * stride) as isize));
                labels.push(l);
            }
        }
    }
    Ok(LabeledDataset {
        samples,
        labels,
        classes: ds.classes,
        seed: ds.seed,
        provenance: format!("{} [shift stride {stride}]", ds.provenance),
    })
}

/// Rotations of polar grids (C × Γ signals) in `steps` equal increments,
/// realized as angle-axis shifts by `Γ/steps`.
pub fn rotate_augment(ds: &LabeledDataset<MultiChannel>, steps: usize) -> Result<LabeledDataset<MultiChannel>> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (x, &l) in ds.samples.iter().zip(&ds.labels) {
        let gamma = x.width();
        if steps == 0 || gamma % steps != 0 || x.height() != 1 {
            return Err(Error::StepsNotDividingGamma { steps, gamma });
        }
        let inc = gamma / steps;
        for s in 0..steps {
            samples.push(x.shifted_1d((s * inc) as isize));
            labels.push(l);
        }
    }
    Ok(LabeledDataset {
        samples,
        labels,
        classes: ds.classes,
        seed: ds.seed,
        provenance: format!("{} [rotate {steps} steps]", ds.provenance),
    })
}
