//! Dense positive-definite kernels shared by the vector and spectral networks.
//!
//! Every coding-rate term has the form `log det(I + a·G)` for a Gram-type
//! matrix `G`, and every operator has the form `a·(I + a·G)⁻¹`. Both come out
//! of one Cholesky factorization.

use nalgebra::{Cholesky, ComplexField, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Largest `|M[i,j] - conj(M[j,i])|` over all entries.
pub fn hermitian_asymmetry<T>(m: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in j..n {
            let d = (m[(i, j)].clone() - m[(j, i)].clone().conjugate()).modulus();
            worst = worst.max(d);
        }
    }
    worst
}

fn factor<T>(m: DMatrix<T>) -> Result<Cholesky<T, Dyn>>
where
    T: ComplexField<RealField = f64>,
{
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite)
}

fn logdet_of<T>(chol: &Cholesky<T, Dyn>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| 2.0 * l[(i, i)].clone().real().ln()).sum()
}

/// Natural log-determinant of a symmetric (or Hermitian) positive-definite matrix.
pub fn logdet_psd<T>(m: &DMatrix<T>) -> Result<f64>
where
    T: ComplexField<RealField = f64>,
{
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "log-det needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.clone().modulus().is_finite()) {
        return Err(Error::NonFinite("log-det input"));
    }
    let scale = m.iter().map(|v| v.clone().modulus()).fold(1.0f64, f64::max);
    let asym = hermitian_asymmetry(m);
    if asym > 1e-10 * scale {
        return Err(Error::NotHermitian(asym));
    }
    Ok(logdet_of(&factor(m.clone())?))
}

/// Returns `(a·(I + a·G)⁻¹, log det(I + a·G))` for a Hermitian PSD `G`.
///
/// The returned operator is re-symmetrized so it is Hermitian to the last bit.
pub fn resolvent<T>(gram: &DMatrix<T>, a: f64) -> Result<(DMatrix<T>, f64)>
where
    T: ComplexField<RealField = f64>,
{
    let n = gram.nrows();
    let scale = T::from_real(a);
    let mut k = gram * scale.clone();
    for i in 0..n {
        k[(i, i)] += T::one();
    }
    let chol = factor(k)?;
    let logdet = logdet_of(&chol);
    let inv = chol.inverse() * scale;
    Ok((hermitize(inv), logdet))
}

/// `(M + M*)/2`.
pub fn hermitize<T>(m: DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let half = T::from_real(0.5);
    let adj = m.adjoint();
    (m + adj) * half
}

/// `log det(I + a·Z·Zᵀ)` for real column features `Z` (n×m).
///
/// Evaluated through the m×m dual `I + a·ZᵀZ` whenever m < n; the two
/// determinants agree by Sylvester's identity.
pub fn logdet_gram(z: &DMatrix<f64>, a: f64) -> Result<f64> {
    let (n, m) = z.shape();
    let gram = if m < n { z.tr_mul(z) } else { z * z.transpose() };
    let dim = gram.nrows();
    let mut k = gram * a;
    for i in 0..dim {
        k[(i, i)] += 1.0;
    }
    Ok(logdet_of(&factor(k)?))
}

/// Returns `(a·(I + a·Z·Zᵀ)⁻¹, log det(I + a·Z·Zᵀ))` as an n×n operator.
///
/// When m < n the inverse is formed from the dual factorization:
/// `a·(I + a·ZZᵀ)⁻¹ = a·(I − a·Z·(I + a·ZᵀZ)⁻¹·Zᵀ)`.
pub fn regularized_inverse(z: &DMatrix<f64>, a: f64) -> Result<(DMatrix<f64>, f64)> {
    let (n, m) = z.shape();
    if m >= n {
        return resolvent(&(z * z.transpose()), a);
    }
    let mut k = z.tr_mul(z) * a;
    for i in 0..m {
        k[(i, i)] += 1.0;
    }
    let chol = factor(k)?;
    let logdet = logdet_of(&chol);
    // s = (I + a ZᵀZ)⁻¹ Zᵀ, m×n
    let s = chol.solve(&z.transpose());
    let mut op = (z * s) * (-a * a);
    for i in 0..n {
        op[(i, i)] += a;
    }
    Ok((hermitize(op), logdet))
}
