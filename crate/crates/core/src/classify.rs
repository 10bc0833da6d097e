//! Nearest-subspace classification of learned features.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rate::Partition;
use crate::spectral::{Dft, MultiChannel, SpectralLayout, Spectrum};

pub const DEFAULT_ENERGY: f64 = 0.95;

/// Orthonormal basis `U_j` (n × r_j) per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    pub bases: Vec<DMatrix<f64>>,
}

impl SubspaceModel {
    pub fn ranks(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }
}

fn check_energy(energy: f64) -> Result<()> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::InvalidArgument(format!("energy must lie in (0, 1], got {energy}")));
    }
    Ok(())
}

/// Smallest prefix of the (descending) spectrum holding `energy` of the total.
fn rank_for(values: &[f64], energy: f64) -> usize {
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return 1;
    }
    let target = energy * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if acc >= target {
            return i + 1;
        }
    }
    values.len().max(1)
}

fn class_basis(z: &DMatrix<f64>, energy: f64) -> DMatrix<f64> {
    let (n, m) = z.shape();
    // Left singular vectors and squared singular values, through whichever
    // Gram matrix is smaller.
    let (vectors, values) = if m <= n {
        let eig = SymmetricEigen::new(z.tr_mul(z));
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let top = values.first().copied().unwrap_or(0.0);
        let keep: Vec<usize> = order.iter().copied().filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
        let mut u = DMatrix::zeros(n, keep.len());
        for (col, &i) in keep.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            u.set_column(col, &((z * eig.eigenvectors.column(i)) / s));
        }
        (u, values[..keep.len()].to_vec())
    } else {
        let eig = SymmetricEigen::new(z * z.transpose());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        (u, order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect())
    };
    if values.is_empty() {
        let mut e = DMatrix::zeros(n, 1);
        e[(0, 0)] = 1.0;
        return e;
    }
    let r = rank_for(&values, energy).min(vectors.ncols());
    // Re-orthonormalize against round-off in the Gram route.
    vectors.columns(0, r).into_owned().qr().q()
}

/// Per-class top singular subspaces retaining at least `energy` of the
/// squared singular values.
pub fn fit_subspaces(z: &DMatrix<f64>, p: &Partition, energy: f64) -> Result<SubspaceModel> {
    check_energy(energy)?;
    if z.ncols() != p.samples() {
        return Err(Error::LengthMismatch { left: z.ncols(), right: p.samples() });
    }
    let bases = (0..p.classes())
        .map(|j| class_basis(&z.select_columns(p.members(j).iter()), energy))
        .collect();
    Ok(SubspaceModel { bases })
}

/// Squared residuals `‖z − U_jU_jᵀz‖²`.
pub fn residuals(z: &DVector<f64>, model: &SubspaceModel) -> Vec<f64> {
    let total = z.norm_squared();
    model.bases.iter().map(|u| total - (u.transpose() * z).norm_squared()).collect()
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = j;
        }
    }
    best
}

/// Class with the smallest residual; ties go to the lowest index.
pub fn predict(z: &DVector<f64>, model: &SubspaceModel) -> usize {
    argmin(&residuals(z, model))
}

pub fn predict_all(z: &DMatrix<f64>, model: &SubspaceModel) -> Vec<usize> {
    z.column_iter().map(|c| predict(&c.into_owned(), model)).collect()
}

pub fn evaluate(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: labels.len() });
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Nearest-subspace model for multi-channel features, fit as if on every
/// cyclic translation of every training feature.
///
/// The covariance of the translation-augmented features is block circulant,
/// so its eigenvectors are Fourier modes times eigenvectors of the C × C
/// matrices `Σᵢ vᵢ(f)vᵢ(f)*`. A mode at a stored frequency with weight 2
/// stands for itself and its mirror, which together span a real 2D
/// subspace, so it is counted twice. Residuals are invariant to cyclic
/// translations of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSubspaceModel {
    pub layout: SpectralLayout,
    pub channels: usize,
    /// Per class, the selected `(frequency, unit eigenvector)` modes.
    pub modes: Vec<Vec<(usize, Vec<Complex64>)>>,
}

impl SpectralSubspaceModel {
    /// Real dimension of each class subspace.
    pub fn ranks(&self) -> Vec<usize> {
        self.modes
            .iter()
            .map(|m| m.iter().map(|(f, _)| self.layout.weight(*f) as usize).sum())
            .collect()
    }
}

pub fn fit_spectral_subspaces(
    features: &[MultiChannel],
    p: &Partition,
    energy: f64,
) -> Result<SpectralSubspaceModel> {
    check_energy(energy)?;
    if features.len() != p.samples() {
        return Err(Error::LengthMismatch { left: features.len(), right: p.samples() });
    }
    let first = features.first().ok_or_else(|| Error::InvalidArgument("no features".into()))?;
    let layout = SpectralLayout::new(first.height(), first.width(), true);
    let dft = Dft::new(layout);
    let c = first.channels();
    let nf = layout.frequencies();
    let spectra: Vec<Spectrum> = features.iter().map(|x| dft.forward(x)).collect::<Result<_>>()?;
    let mut modes = Vec::with_capacity(p.classes());
    for j in 0..p.classes() {
        let mut grams = vec![DMatrix::<Complex64>::zeros(c, c); nf];
        for i in p.members(j) {
            for (f, g) in grams.iter_mut().enumerate() {
                let v = &spectra[i].data[f * c..(f + 1) * c];
                for r in 0..c {
                    for s in 0..c {
                        g[(r, s)] += v[r] * v[s].conj();
                    }
                }
            }
        }
        // (eigenvalue, frequency, eigenvector)
        let mut candidates: Vec<(f64, usize, Vec<Complex64>)> = Vec::with_capacity(nf * c);
        for (f, g) in grams.into_iter().enumerate() {
            let eig = SymmetricEigen::new(g);
            for r in 0..c {
                let u = eig.eigenvectors.column(r).iter().copied().collect();
                candidates.push((eig.eigenvalues[r].max(0.0), f, u));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let weighted: Vec<f64> = candidates.iter().map(|(v, f, _)| v * layout.weight(*f)).collect();
        let r = rank_for(&weighted, energy);
        modes.push(candidates.into_iter().take(r).map(|(_, f, u)| (f, u)).collect());
    }
    Ok(SpectralSubspaceModel { layout, channels: c, modes })
}

pub fn spectral_residuals(s: &Spectrum, model: &SpectralSubspaceModel) -> Vec<f64> {
    let c = model.channels;
    let total = s.norm().powi(2);
    model
        .modes
        .iter()
        .map(|modes| {
            let captured: f64 = modes
                .iter()
                .map(|(f, u)| {
                    let v = &s.data[f * c..(f + 1) * c];
                    let dot: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                    model.layout.weight(*f) * dot.norm_sqr()
                })
                .sum();
            total - captured
        })
        .collect()
}

pub fn predict_spectral(x: &MultiChannel, model: &SpectralSubspaceModel) -> Result<usize> {
    let s = Dft::new(model.layout).forward(x)?;
    if s.channels != model.channels {
        return Err(Error::ShapeMismatch("feature channels differ from the subspace model".into()));
    }
    Ok(argmin(&spectral_residuals(&s, model)))
}
