//! The vector-case network: each layer is one projected gradient-ascent step
//! on the rate reduction, with explicitly constructed expansion and
//! compression operators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rate::{self, FeatureMatrix, Partition, RateParams, RateTrace};

/// One layer: `z ↦ P_S[z + η E z − η σ(C¹z, …, Cᵏz)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub expansion: DMatrix<f64>,
    pub compression: Vec<DMatrix<f64>>,
    pub gamma: Vec<f64>,
    /// α used to build `expansion`.
    pub alpha: f64,
    /// α_j used to build each `compression[j]`.
    pub alpha_class: Vec<f64>,
    pub lambda: f64,
    pub eta: f64,
}

impl LayerParams {
    pub fn dim(&self) -> usize {
        self.expansion.nrows()
    }

    pub fn classes(&self) -> usize {
        self.compression.len()
    }

    /// Projections `Pʲ = I − Cʲ/α_j` used by [`relu_compression`].
    pub fn relu_projections(&self) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        self.compression
            .iter()
            .zip(&self.alpha_class)
            .map(|(c, &a)| DMatrix::identity(n, n) - c / a)
            .collect()
    }
}

/// How training features pick their class weights during construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Membership {
    /// Softmax estimate π̂, the same rule used at inference.
    #[default]
    Estimated,
    /// True labels; the update then equals the exact gradient step.
    TrueLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorNetConfig {
    pub layers: usize,
    pub eta: f64,
    pub epsilon: f64,
    /// Softmax temperature; `None` means `10·k`.
    pub lambda: Option<f64>,
    pub membership: Membership,
    /// Keep per-layer operators in the model. Switch off to stream layers
    /// through an observer without holding O(L·(k+1)·n²) memory.
    pub retain_layers: bool,
}

impl Default for VectorNetConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            eta: 0.5,
            epsilon: 0.1,
            lambda: None,
            membership: Membership::Estimated,
            retain_layers: true,
        }
    }
}

/// Default softmax temperature for k classes.
pub fn default_lambda(k: usize) -> f64 {
    10.0 * k as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorReduNet {
    pub dim: usize,
    pub classes: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub lambda: f64,
    /// Number of layers constructed (equals `layers.len()` unless streamed).
    pub depth: usize,
    pub layers: Vec<LayerParams>,
    /// Rates of the training features: entry 0 is the input, entry ℓ the
    /// output of layer ℓ.
    pub trace: Vec<RateTrace>,
}

/// `E = α(I + α Z Zᵀ)⁻¹`.
pub fn expansion_operator(z: &FeatureMatrix, eps: &RateParams) -> Result<DMatrix<f64>> {
    let alpha = eps.alpha(z.dim(), z.samples());
    Ok(linalg::regularized_inverse(z.data(), alpha)?.0)
}

/// `Cʲ = α_j(I + α_j Z Πʲ Zᵀ)⁻¹` for each class.
pub fn compression_operators(
    z: &FeatureMatrix,
    p: &Partition,
    eps: &RateParams,
) -> Result<Vec<DMatrix<f64>>> {
    if p.samples() != z.samples() {
        return Err(Error::LengthMismatch { left: p.samples(), right: z.samples() });
    }
    (0..p.classes())
        .map(|j| {
            let zj = rate::class_columns(z.data(), p, j);
            let alpha_j = eps.alpha(z.dim(), p.count(j));
            Ok(linalg::regularized_inverse(&zj, alpha_j)?.0)
        })
        .collect()
}

/// Builds a layer from the current features; also returns the rates of `Z`,
/// which fall out of the same factorizations.
pub fn build_layer(
    z: &FeatureMatrix,
    p: &Partition,
    eps: &RateParams,
    lambda: f64,
    eta: f64,
) -> Result<(LayerParams, RateTrace)> {
    if p.samples() != z.samples() {
        return Err(Error::LengthMismatch { left: p.samples(), right: z.samples() });
    }
    let (n, m) = (z.dim(), z.samples());
    let alpha = eps.alpha(n, m);
    let (expansion, logdet) = linalg::regularized_inverse(z.data(), alpha)?;
    let mut compression = Vec::with_capacity(p.classes());
    let mut alpha_class = Vec::with_capacity(p.classes());
    let mut r_c = 0.0;
    for j in 0..p.classes() {
        let zj = rate::class_columns(z.data(), p, j);
        let alpha_j = eps.alpha(n, p.count(j));
        let (c, ld) = linalg::regularized_inverse(&zj, alpha_j)?;
        r_c += 0.5 * p.gamma(j) * ld;
        compression.push(c);
        alpha_class.push(alpha_j);
    }
    let layer = LayerParams {
        expansion,
        compression,
        gamma: p.gammas(),
        alpha,
        alpha_class,
        lambda,
        eta,
    };
    Ok((layer, RateTrace::new(0.5 * logdet, r_c)))
}

/// `softmax(−λ·norms)`, computed with max-subtraction.
pub fn softmax_neg(norms: &[f64], lambda: f64) -> Vec<f64> {
    let best = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = norms.iter().map(|&v| (-lambda * (v - best)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Estimated class membership `π̂ʲ ∝ exp(−λ‖Cʲz‖)`.
pub fn soft_membership(z: &DVector<f64>, compression: &[DMatrix<f64>], lambda: f64) -> Vec<f64> {
    let norms: Vec<f64> = compression.iter().map(|c| (c * z).norm()).collect();
    softmax_neg(&norms, lambda)
}

/// `σ(z) = Σ_j γ_j π̂ʲ(z) Cʲz`.
pub fn nonlinear_compression(
    z: &DVector<f64>,
    compression: &[DMatrix<f64>],
    gamma: &[f64],
    lambda: f64,
) -> DVector<f64> {
    let projected: Vec<DVector<f64>> = compression.iter().map(|c| c * z).collect();
    let norms: Vec<f64> = projected.iter().map(|v| v.norm()).collect();
    let pi = softmax_neg(&norms, lambda);
    let mut out = DVector::zeros(z.len());
    for ((v, g), w) in projected.iter().zip(gamma).zip(&pi) {
        out.axpy(g * w, v, 1.0);
    }
    out
}

/// ReLU approximation of the compression residual: `z − Σ_j ReLU(Pʲz)`.
pub fn relu_compression(z: &DVector<f64>, projections: &[DMatrix<f64>]) -> DVector<f64> {
    let mut out = z.clone();
    for p in projections {
        out -= (p * z).map(|v| v.max(0.0));
    }
    out
}

fn unit(mut v: DVector<f64>) -> Result<DVector<f64>> {
    let norm = v.norm();
    if !(norm > 1e-300) || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    v /= norm;
    Ok(v)
}

/// Applies one layer to a single feature. With `label` the true class
/// replaces the estimated membership.
pub fn apply_layer(z: &DVector<f64>, layer: &LayerParams, label: Option<usize>) -> Result<DVector<f64>> {
    if z.len() != layer.dim() {
        return Err(Error::LengthMismatch { left: z.len(), right: layer.dim() });
    }
    let ez = &layer.expansion * z;
    let sigma = match label {
        Some(j) => {
            if j >= layer.classes() {
                return Err(Error::InvalidArgument(format!("label {j} outside layer classes")));
            }
            (&layer.compression[j] * z) * layer.gamma[j]
        }
        None => nonlinear_compression(z, &layer.compression, &layer.gamma, layer.lambda),
    };
    unit(z + (ez - sigma) * layer.eta)
}

/// Applies one layer to every column of `z` using matrix products.
pub fn apply_layer_batch(
    z: &DMatrix<f64>,
    layer: &LayerParams,
    labels: Option<&[usize]>,
) -> Result<DMatrix<f64>> {
    if z.nrows() != layer.dim() {
        return Err(Error::LengthMismatch { left: z.nrows(), right: layer.dim() });
    }
    if let Some(l) = labels {
        if l.len() != z.ncols() {
            return Err(Error::LengthMismatch { left: l.len(), right: z.ncols() });
        }
    }
    let ez = &layer.expansion * z;
    let cz: Vec<DMatrix<f64>> = layer.compression.iter().map(|c| c * z).collect();
    let mut out = z.clone();
    let mut norms = vec![0.0; layer.classes()];
    for i in 0..z.ncols() {
        let weights = match labels {
            Some(l) => {
                let mut w = vec![0.0; layer.classes()];
                w[l[i]] = 1.0;
                w
            }
            None => {
                for (n, c) in norms.iter_mut().zip(&cz) {
                    *n = c.column(i).norm();
                }
                softmax_neg(&norms, layer.lambda)
            }
        };
        let mut col = out.column_mut(i);
        col.axpy(layer.eta, &ez.column(i), 1.0);
        for ((c, w), g) in cz.iter().zip(&weights).zip(&layer.gamma) {
            col.axpy(-layer.eta * g * w, &c.column(i), 1.0);
        }
        let norm = col.norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        col /= norm;
    }
    Ok(out)
}

/// Constructs the network layer by layer from labeled training features.
pub fn construct_vector_net(
    x: &FeatureMatrix,
    p: &Partition,
    config: &VectorNetConfig,
) -> Result<VectorReduNet> {
    Ok(construct_vector_net_with(x, p, config, |_, _| Ok(()))?.0)
}

/// Like [`construct_vector_net`], but calls `observer(index, layer)` as soon as
/// each layer exists and also returns the final training features.
///
/// The observer is how held-out data is pushed through a network whose
/// operators are not retained.
pub fn construct_vector_net_with<F>(
    x: &FeatureMatrix,
    p: &Partition,
    config: &VectorNetConfig,
    mut observer: F,
) -> Result<(VectorReduNet, FeatureMatrix)>
where
    F: FnMut(usize, &LayerParams) -> Result<()>,
{
    if p.samples() != x.samples() {
        return Err(Error::LengthMismatch { left: p.samples(), right: x.samples() });
    }
    if !(config.eta >= 0.0) {
        return Err(Error::InvalidArgument("eta must be non-negative".into()));
    }
    let eps = RateParams::new(config.epsilon)?;
    let lambda = config.lambda.unwrap_or_else(|| default_lambda(p.classes()));
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let mut z = FeatureMatrix::normalized(x.data().clone())?;
    let mut layers = Vec::new();
    let mut trace = Vec::with_capacity(config.layers + 1);
    let labels = match config.membership {
        Membership::Estimated => None,
        Membership::TrueLabels => Some(p.labels()),
    };
    for index in 0..config.layers {
        let (layer, rates) = build_layer(&z, p, &eps, lambda, config.eta)?;
        trace.push(rates);
        let next = apply_layer_batch(z.data(), &layer, labels)?;
        z = FeatureMatrix::normalized(next)?;
        observer(index, &layer)?;
        if config.retain_layers {
            layers.push(layer);
        }
    }
    trace.push(rate::rate_trace(&z, p, &eps)?);
    let model = VectorReduNet {
        dim: x.dim(),
        classes: p.classes(),
        epsilon: config.epsilon,
        eta: config.eta,
        lambda,
        depth: config.layers,
        layers,
        trace,
    };
    Ok((model, z))
}

/// The learned feature map `f(x) = φᴸ ∘ … ∘ φ¹(x/‖x‖)`.
pub fn forward_vector(model: &VectorReduNet, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != model.dim {
        return Err(Error::LengthMismatch { left: x.len(), right: model.dim });
    }
    let mut z = unit(x.clone())?;
    for layer in &model.layers {
        z = apply_layer(&z, layer, None)?;
    }
    Ok(z)
}

/// Batch version of [`forward_vector`] over the columns of `x`.
pub fn forward_vector_batch(model: &VectorReduNet, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut z = FeatureMatrix::normalized(x.clone())?.into_inner();
    for layer in &model.layers {
        z = apply_layer_batch(&z, layer, None)?;
    }
    Ok(z)
}
