//! Feature-geometry and accuracy metrics reported by the experiments.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use redunet::spectral::{Dft, MultiChannel, SpectralLayout, Spectrum};

use crate::CliResult;

/// Samples as the columns of a matrix.
pub fn flatten(features: &[MultiChannel]) -> DMatrix<f64> {
    let n = features.first().map_or(0, |x| x.as_slice().len());
    DMatrix::from_fn(n, features.len(), |i, j| features[j].as_slice()[i])
}

/// `|cos|` between every pair of columns of `a` and `b`.
pub fn abs_cosine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let unit = |m: &DMatrix<f64>| {
        let mut m = m.clone();
        for mut c in m.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
        m
    };
    let (a, b) = (unit(a), unit(b));
    a.tr_mul(&b).map(|v| v.abs().min(1.0))
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Largest line angle `arccos|cos|` between two samples of one class, in degrees.
pub fn within_class_max_angle(cos: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let mut worst: f64 = 1.0;
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                worst = worst.min(cos[(i, j)]);
            }
        }
    }
    worst.acos().to_degrees()
}

/// Largest `|cos|` between samples of different classes.
pub fn cross_class_max_cos(cos: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] != labels[j] {
                worst = worst.max(cos[(i, j)]);
            }
        }
    }
    worst
}

/// Fraction of cross-class `(query shifted by s, reference)` pairs, over
/// every cyclic shift `s`, whose `|cos|` is at most `threshold`.
///
/// All shifts of a pair come from one inverse transform of the
/// channel-summed cross spectrum.
pub fn shifted_cross_class_fraction(
    queries: &[MultiChannel],
    query_labels: &[usize],
    refs: &[MultiChannel],
    ref_labels: &[usize],
    threshold: f64,
) -> CliResult<f64> {
    let Some(first) = queries.first() else { return Ok(1.0) };
    let layout = SpectralLayout::new(first.height(), first.width(), false);
    let dft = Dft::new(layout);
    let scale = (layout.pixels() as f64).sqrt();
    let spectra = |xs: &[MultiChannel]| -> CliResult<Vec<(Spectrum, f64)>> {
        xs.par_iter().map(|x| Ok((dft.forward(x)?, x.norm()))).collect()
    };
    let qs = spectra(queries)?;
    let rs = spectra(refs)?;
    let counts: Vec<(usize, usize)> = qs
        .par_iter()
        .zip(query_labels)
        .map(|((a, na), &la)| -> CliResult<(usize, usize)> {
            let c = a.channels;
            let (mut total, mut within) = (0, 0);
            for ((b, nb), &lb) in rs.iter().zip(ref_labels) {
                if la == lb {
                    continue;
                }
                let cross: Vec<Complex64> = (0..layout.frequencies())
                    .map(|f| (0..c).map(|k| a.data[f * c + k].conj() * b.data[f * c + k]).sum())
                    .collect();
                let corr = dft.inverse(&Spectrum { layout, channels: 1, data: cross })?;
                for v in corr.as_slice() {
                    total += 1;
                    if (v * scale / (na * nb)).abs() <= threshold {
                        within += 1;
                    }
                }
            }
            Ok((total, within))
        })
        .collect::<CliResult<_>>()?;
    let (total, within) = counts.iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
    Ok(if total == 0 { 1.0 } else { within as f64 / total as f64 })
}

/// Fraction of positions where two prediction lists agree.
pub fn agreement(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}
