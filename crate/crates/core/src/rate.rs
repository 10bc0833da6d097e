//! Coding rates, rate reduction and its exact gradient for vector features.
//!
//! All rates are in nats. Features are stored column-wise: `Z` is n×m with
//! one sample per column.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Column features `Z` (n×m), optionally with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    normalized: bool,
}

impl FeatureMatrix {
    /// Wraps raw features. Entries must be finite.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { data, normalized: false })
    }

    /// Wraps features after projecting every column onto the unit sphere.
    pub fn normalized(mut data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        for mut col in data.column_iter_mut() {
            let norm = col.norm();
            if norm <= f64::MIN_POSITIVE {
                return Err(Error::ZeroVector);
            }
            col /= norm;
        }
        Ok(Self { data, normalized: true })
    }

    /// Stacks equally sized vectors as columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::ShapeMismatch("columns of unequal length".into()));
        }
        let data = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Self::new(data)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

/// Class assignment of m samples into k classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    counts: Vec<usize>,
}

impl Partition {
    /// Every label must lie in `[0, k)` and every class must be non-empty.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("partition needs at least one class".into()));
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InvalidArgument(format!("label {l} outside [0, {k})")));
            }
            counts[l] += 1;
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(j));
        }
        Ok(Self { labels, counts })
    }

    /// All m samples in one class.
    pub fn single_class(m: usize) -> Result<Self> {
        Self::new(vec![0; m], 1)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    /// `tr(Πʲ)`.
    pub fn count(&self, j: usize) -> usize {
        self.counts[j]
    }

    /// `γ_j = tr(Πʲ)/m`.
    pub fn gamma(&self, j: usize) -> f64 {
        self.counts[j] as f64 / self.labels.len() as f64
    }

    pub fn gammas(&self) -> Vec<f64> {
        (0..self.classes()).map(|j| self.gamma(j)).collect()
    }

    /// Sample indices belonging to class `j`, in ascending order.
    pub fn members(&self, j: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == j).then_some(i))
            .collect()
    }
}

/// Quantization precision ε and the derived scale coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    epsilon: f64,
}

impl RateParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `dim / (count·ε²)`: α for `count = m`, α_j for `count = tr(Πʲ)`.
    pub fn alpha(&self, dim: usize, count: usize) -> f64 {
        dim as f64 / (count as f64 * self.epsilon * self.epsilon)
    }
}

/// The three quantities tracked per layer: `ΔR = R − R_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTrace {
    pub delta_r: f64,
    pub r: f64,
    pub r_c: f64,
}

impl RateTrace {
    pub fn new(r: f64, r_c: f64) -> Self {
        Self { delta_r: r - r_c, r, r_c }
    }
}

fn check_partition(z: &FeatureMatrix, p: &Partition) -> Result<()> {
    if p.samples() != z.samples() {
        return Err(Error::LengthMismatch { left: p.samples(), right: z.samples() });
    }
    Ok(())
}

fn nonempty(z: &FeatureMatrix) -> Result<()> {
    if z.samples() == 0 || z.dim() == 0 {
        return Err(Error::InvalidArgument("empty feature matrix".into()));
    }
    Ok(())
}

/// Copies the columns of class `j` into their own matrix (`Z·Πʲ` without the zeros).
pub(crate) fn class_columns(z: &DMatrix<f64>, p: &Partition, j: usize) -> DMatrix<f64> {
    let idx = p.members(j);
    z.select_columns(idx.iter())
}

/// `R(Z) = ½ log det(I + α Z Zᵀ)` with `α = n/(m ε²)`.
pub fn coding_rate(z: &FeatureMatrix, eps: &RateParams) -> Result<f64> {
    nonempty(z)?;
    let alpha = eps.alpha(z.dim(), z.samples());
    Ok(0.5 * linalg::logdet_gram(z.data(), alpha)?)
}

/// `R_c(Z, Π) = Σ_j (γ_j/2) log det(I + α_j Z Πʲ Zᵀ)`.
pub fn class_rate(z: &FeatureMatrix, p: &Partition, eps: &RateParams) -> Result<f64> {
    nonempty(z)?;
    check_partition(z, p)?;
    let mut total = 0.0;
    for j in 0..p.classes() {
        let zj = class_columns(z.data(), p, j);
        let alpha_j = eps.alpha(z.dim(), p.count(j));
        total += 0.5 * p.gamma(j) * linalg::logdet_gram(&zj, alpha_j)?;
    }
    Ok(total)
}

/// `ΔR = R − R_c`, returned together with both terms.
pub fn rate_trace(z: &FeatureMatrix, p: &Partition, eps: &RateParams) -> Result<RateTrace> {
    Ok(RateTrace::new(coding_rate(z, eps)?, class_rate(z, p, eps)?))
}

/// The rate reduction `ΔR(Z, Π) = R(Z) − R_c(Z, Π)`.
pub fn rate_reduction(z: &FeatureMatrix, p: &Partition, eps: &RateParams) -> Result<f64> {
    Ok(rate_trace(z, p, eps)?.delta_r)
}

/// `α(I + α ZZᵀ)⁻¹ Z`, using `αZ(I + α ZᵀZ)⁻¹` when m < n.
fn expansion_direction(z: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    let (n, m) = z.shape();
    if m < n {
        let mut k = z.tr_mul(z) * alpha;
        for i in 0..m {
            k[(i, i)] += 1.0;
        }
        let chol = nalgebra::Cholesky::new(k).ok_or(Error::NotPositiveDefinite)?;
        // Z K⁻¹ = (K⁻¹ Zᵀ)ᵀ since K is symmetric.
        Ok(chol.solve(&z.transpose()).transpose() * alpha)
    } else {
        let mut k = z * z.transpose() * alpha;
        for i in 0..n {
            k[(i, i)] += 1.0;
        }
        let chol = nalgebra::Cholesky::new(k).ok_or(Error::NotPositiveDefinite)?;
        Ok(chol.solve(z) * alpha)
    }
}

/// Exact gradient `∂ΔR/∂Z = E Z − Σ_j γ_j Cʲ Z Πʲ`.
pub fn rate_gradient(z: &FeatureMatrix, p: &Partition, eps: &RateParams) -> Result<DMatrix<f64>> {
    nonempty(z)?;
    check_partition(z, p)?;
    let (n, m) = z.data().shape();
    let mut grad = expansion_direction(z.data(), eps.alpha(n, m))?;
    for j in 0..p.classes() {
        let idx = p.members(j);
        let zj = z.data().select_columns(idx.iter());
        let dir = expansion_direction(&zj, eps.alpha(n, p.count(j)))?;
        let gamma = p.gamma(j);
        for (col, &i) in idx.iter().enumerate() {
            let mut g = grad.column_mut(i);
            g.axpy(-gamma, &dir.column(col), 1.0);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    fn eps(e: f64) -> RateParams {
        RateParams::new(e).unwrap()
    }

    #[test]
    fn zero_features_have_zero_rates() {
        let z = FeatureMatrix::new(DMatrix::zeros(3, 4)).unwrap();
        let p = Partition::new(vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(coding_rate(&z, &eps(0.5)).unwrap(), 0.0);
        assert_eq!(class_rate(&z, &p, &eps(0.5)).unwrap(), 0.0);
        assert_eq!(rate_reduction(&z, &p, &eps(0.5)).unwrap(), 0.0);
        assert_eq!(rate_gradient(&z, &p, &eps(0.5)).unwrap().abs().max(), 0.0);
    }

    #[test]
    fn scalar_coding_rate() {
        // n = m = 1, z = 1, eps² = 0.5 -> alpha = 2, R = ½ log 3
        let z = FeatureMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let r = coding_rate(&z, &eps(0.5f64.sqrt())).unwrap();
        assert!((r - 0.5 * 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn identity_coding_rate() {
        let n = 4;
        let e: f64 = 0.3;
        let z = FeatureMatrix::new(DMatrix::identity(n, n)).unwrap();
        let expected = n as f64 / 2.0 * (1.0 + 1.0 / (e * e)).ln();
        assert!((coding_rate(&z, &eps(e)).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn single_class_rate_matches_total() {
        let z = FeatureMatrix::new(random_matrix(5, 7, 1)).unwrap();
        let p = Partition::single_class(7).unwrap();
        let r = coding_rate(&z, &eps(0.2)).unwrap();
        assert!((class_rate(&z, &p, &eps(0.2)).unwrap() - r).abs() < 1e-12);
        assert!(rate_reduction(&z, &p, &eps(0.2)).unwrap().abs() < 1e-10);
        assert_eq!(rate_gradient(&z, &p, &eps(0.2)).unwrap().abs().max(), 0.0);
    }

    #[test]
    fn orthogonal_pair_two_classes() {
        // Two orthogonal unit vectors, one per class, eps = 0.1.
        // alpha = 2/(2·0.01) = 100 -> R = ½·2·log(1 + 100) ... per eigenvalue 1 of ZZᵀ.
        // alpha_j = 2/(1·0.01) = 200 -> R_c = Σ ½·½·log(1 + 200).
        let z = FeatureMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let p = Partition::new(vec![0, 1], 2).unwrap();
        let expected = 101f64.ln() - 0.5 * 201f64.ln();
        let got = rate_reduction(&z, &p, &eps(0.1)).unwrap();
        assert!(got > 0.0);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn partition_errors() {
        assert!(matches!(Partition::new(vec![0, 0, 2], 3), Err(Error::EmptyClass(1))));
        assert!(matches!(Partition::new(vec![0, 3], 2), Err(Error::InvalidArgument(_))));
        let p = Partition::new(vec![1, 0, 1, 1], 2).unwrap();
        assert_eq!(p.members(1), vec![0, 2, 3]);
        assert!((p.gammas().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalized_rejects_zero_column() {
        let mut d = DMatrix::from_element(2, 2, 1.0);
        d.column_mut(1).fill(0.0);
        assert!(matches!(FeatureMatrix::normalized(d), Err(Error::ZeroVector)));
        let f = FeatureMatrix::normalized(random_matrix(3, 4, 9)).unwrap();
        for c in f.data().column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn mismatched_partition_is_rejected() {
        let z = FeatureMatrix::new(random_matrix(2, 3, 2)).unwrap();
        let p = Partition::new(vec![0, 1], 2).unwrap();
        assert!(matches!(class_rate(&z, &p, &eps(0.1)), Err(Error::LengthMismatch { .. })));
    }
}
