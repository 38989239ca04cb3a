use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::lambda::LambdaSpec;
use super::params::{Layout, ParamVec};
use crate::error::{check_len, Error, Result};
use crate::linalg::dot;

/// The built-in quasi-homogeneous classifiers.
///
/// This enum is also the JSON model specification: `{"kind": "...", ...}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    /// `f(x) = <theta, x>`, every exponent 1.
    LinearHomogeneous { input_dim: usize },
    /// `f(x) = sum_i (prod_j theta_ij) x_i` with `depths[i]` factors for
    /// coordinate `i`, each factor carrying exponent `1 / depths[i]`.
    UnbalancedDiagonal { depths: Vec<usize> },
    /// `f(x) = sum_k w2_k relu(<w1_k, x> + b1_k) + b2`.
    TwoLayerReluBias { width: usize, input_dim: usize },
    /// `f_c(x) = <w_c, LN(H^T x)> + b_c` with unconstrained features `H`
    /// (one row per training point, selected by a one-hot input).
    NormalizedLastLayer {
        classes: usize,
        feature_dim: usize,
        samples: usize,
    },
    /// `f(x) = sum_j w2_j relu(<w1_j, x> + x_j)`; exponent 1 on `w2`, 0 on `w1`.
    ResidualRelu { dim: usize },
}

/// A classifier together with its diagonal scaling exponents and parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    kind: ModelKind,
    lambda: LambdaSpec,
    layout: Arc<Layout>,
}

impl Model {
    pub fn new(kind: ModelKind) -> Result<Self> {
        let (layout, lambdas) = match &kind {
            ModelKind::LinearHomogeneous { input_dim } => {
                positive("input_dim", *input_dim)?;
                (Layout::from_lengths([("w", *input_dim)]), vec![1.0; *input_dim])
            }
            ModelKind::UnbalancedDiagonal { depths } => {
                if depths.is_empty() {
                    return Err(Error::InvalidModel("depths must be non-empty".into()));
                }
                if depths.contains(&0) {
                    return Err(Error::InvalidModel("every depth must be at least 1".into()));
                }
                let layout =
                    Layout::from_lengths(depths.iter().enumerate().map(|(i, &d)| (format!("coord{i}"), d)));
                let lambdas = depths
                    .iter()
                    .flat_map(|&d| std::iter::repeat_n(1.0 / d as f64, d))
                    .collect();
                (layout, lambdas)
            }
            ModelKind::TwoLayerReluBias { width, input_dim } => {
                positive("width", *width)?;
                positive("input_dim", *input_dim)?;
                let layout = Layout::from_lengths([
                    ("w1", width * input_dim),
                    ("b1", *width),
                    ("w2", *width),
                    ("b2", 1),
                ]);
                let mut lambdas = vec![0.5; layout.total_len()];
                *lambdas.last_mut().unwrap() = 1.0;
                (layout, lambdas)
            }
            ModelKind::NormalizedLastLayer {
                classes,
                feature_dim,
                samples,
            } => {
                if *classes < 2 {
                    return Err(Error::InvalidModel("need at least two classes".into()));
                }
                if *feature_dim < 2 {
                    return Err(Error::InvalidModel(
                        "layer normalization needs feature_dim >= 2".into(),
                    ));
                }
                positive("samples", *samples)?;
                let layout = Layout::from_lengths([
                    ("w", classes * feature_dim),
                    ("b", *classes),
                    ("h", samples * feature_dim),
                ]);
                let head = classes * feature_dim + classes;
                let mut lambdas = vec![1.0; head];
                lambdas.resize(layout.total_len(), 0.0);
                (layout, lambdas)
            }
            ModelKind::ResidualRelu { dim } => {
                positive("dim", *dim)?;
                let layout = Layout::from_lengths([("w1", dim * dim), ("w2", *dim)]);
                let mut lambdas = vec![0.0; dim * dim];
                lambdas.resize(layout.total_len(), 1.0);
                (layout, lambdas)
            }
        };
        Ok(Self {
            kind,
            lambda: LambdaSpec::new(lambdas)?,
            layout: Arc::new(layout),
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn lambda(&self) -> &LambdaSpec {
        &self.lambda
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.total_len()
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            ModelKind::LinearHomogeneous { input_dim } => *input_dim,
            ModelKind::UnbalancedDiagonal { depths } => depths.len(),
            ModelKind::TwoLayerReluBias { input_dim, .. } => *input_dim,
            ModelKind::NormalizedLastLayer { samples, .. } => *samples,
            ModelKind::ResidualRelu { dim } => *dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.kind {
            ModelKind::NormalizedLastLayer { classes, .. } => *classes,
            _ => 1,
        }
    }

    /// Wraps raw values in this model's layout.
    pub fn params(&self, values: Vec<f64>) -> Result<ParamVec> {
        ParamVec::new(values, Arc::clone(&self.layout))
    }

    /// `f(x; theta)`: a length-1 vector for binary models, `C` logits otherwise.
    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(theta, x)?;
        let mut out = vec![0.0; self.output_dim()];
        self.eval_into(theta, x, &mut out)?;
        Ok(out)
    }

    /// One element of the Clarke subdifferential of `f` (or of output
    /// `output_index` for multi-output models). ReLU uses `relu'(0) = 0`.
    pub fn gradient(&self, theta: &[f64], x: &[f64], output_index: Option<usize>) -> Result<ParamVec> {
        self.check(theta, x)?;
        let k = self.output_dim();
        let idx = match (output_index, k) {
            (None, 1) => 0,
            (None, _) => {
                return Err(Error::InvalidModel(
                    "multi-output model needs an output index".into(),
                ))
            }
            (Some(i), _) if i < k => i,
            (Some(i), _) => {
                return Err(Error::Dimension {
                    segment: "output_index".into(),
                    expected: k,
                    got: i,
                })
            }
        };
        let mut coeffs = vec![0.0; k];
        coeffs[idx] = 1.0;
        let mut grad = vec![0.0; self.param_count()];
        self.vjp_into(theta, x, &coeffs, &mut grad)?;
        self.params(grad)
    }

    /// False when some ReLU pre-activation is exactly zero (a kink).
    pub fn is_differentiable_at(&self, theta: &[f64], x: &[f64]) -> Result<bool> {
        self.check(theta, x)?;
        Ok(match &self.kind {
            ModelKind::TwoLayerReluBias { width, input_dim } => {
                let (w1, rest) = theta.split_at(width * input_dim);
                let b1 = &rest[..*width];
                (0..*width).all(|k| dot(&w1[k * input_dim..(k + 1) * input_dim], x) + b1[k] != 0.0)
            }
            ModelKind::ResidualRelu { dim } => {
                (0..*dim).all(|j| dot(&theta[j * dim..(j + 1) * dim], x) + x[j] != 0.0)
            }
            _ => true,
        })
    }

    /// True when `f` is linear in `x`, so per-sample gradients can be
    /// aggregated into a single pass.
    pub(crate) fn is_linear_in_input(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::LinearHomogeneous { .. } | ModelKind::UnbalancedDiagonal { .. }
        )
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        check_len("theta", self.param_count(), theta.len())?;
        check_len("x", self.input_dim(), x.len())
    }

    /// Unchecked forward pass into `out` (length `output_dim`).
    pub(crate) fn eval_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            ModelKind::LinearHomogeneous { .. } => out[0] = dot(theta, x),
            ModelKind::UnbalancedDiagonal { depths } => {
                let mut off = 0;
                let mut f = 0.0;
                for (i, &d) in depths.iter().enumerate() {
                    f += theta[off..off + d].iter().product::<f64>() * x[i];
                    off += d;
                }
                out[0] = f;
            }
            ModelKind::TwoLayerReluBias { width, input_dim } => {
                let (w1, rest) = theta.split_at(width * input_dim);
                let (b1, rest) = rest.split_at(*width);
                let (w2, b2) = rest.split_at(*width);
                let mut f = b2[0];
                for k in 0..*width {
                    let pre = dot(&w1[k * input_dim..(k + 1) * input_dim], x) + b1[k];
                    f += w2[k] * relu(pre);
                }
                out[0] = f;
            }
            ModelKind::NormalizedLastLayer {
                classes,
                feature_dim,
                ..
            } => {
                let (w, rest) = theta.split_at(classes * feature_dim);
                let (b, h) = rest.split_at(*classes);
                let feat = layer_normalize(&mix_features(h, x, *feature_dim))?;
                for c in 0..*classes {
                    out[c] = dot(&w[c * feature_dim..(c + 1) * feature_dim], &feat) + b[c];
                }
            }
            ModelKind::ResidualRelu { dim } => {
                let (w1, w2) = theta.split_at(dim * dim);
                out[0] = (0..*dim)
                    .map(|j| w2[j] * relu(dot(&w1[j * dim..(j + 1) * dim], x) + x[j]))
                    .sum();
            }
        }
        Ok(())
    }

    /// Unchecked vector-Jacobian product: `grad += sum_c coeffs[c] * d f_c / d theta`.
    pub(crate) fn vjp_into(&self, theta: &[f64], x: &[f64], coeffs: &[f64], grad: &mut [f64]) -> Result<()> {
        match &self.kind {
            ModelKind::LinearHomogeneous { .. } => {
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += coeffs[0] * xi;
                }
            }
            ModelKind::UnbalancedDiagonal { depths } => {
                let mut off = 0;
                for (i, &d) in depths.iter().enumerate() {
                    let factors = &theta[off..off + d];
                    let s = coeffs[0] * x[i];
                    for j in 0..d {
                        let others: f64 = factors
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| *k != j)
                            .map(|(_, v)| v)
                            .product();
                        grad[off + j] += s * others;
                    }
                    off += d;
                }
            }
            ModelKind::TwoLayerReluBias { width, input_dim } => {
                let nw1 = width * input_dim;
                let (w1, rest) = theta.split_at(nw1);
                let (b1, rest) = rest.split_at(*width);
                let w2 = &rest[..*width];
                let g = coeffs[0];
                for k in 0..*width {
                    let pre = dot(&w1[k * input_dim..(k + 1) * input_dim], x) + b1[k];
                    let act = relu(pre);
                    grad[nw1 + width + k] += g * act;
                    if pre > 0.0 {
                        let back = g * w2[k];
                        for (gi, xi) in grad[k * input_dim..(k + 1) * input_dim].iter_mut().zip(x) {
                            *gi += back * xi;
                        }
                        grad[nw1 + k] += back;
                    }
                }
                grad[nw1 + 2 * width] += g;
            }
            ModelKind::NormalizedLastLayer {
                classes,
                feature_dim,
                ..
            } => {
                let d = *feature_dim;
                let nw = classes * d;
                let (w, rest) = theta.split_at(nw);
                let h = &rest[*classes..];
                let mixed = mix_features(h, x, d);
                let (feat, scale) = layer_normalize_with_scale(&mixed)?;
                // upstream gradient with respect to the normalized feature
                let mut up = vec![0.0; d];
                for c in 0..*classes {
                    let gc = coeffs[c];
                    if gc == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        grad[c * d + j] += gc * feat[j];
                        up[j] += gc * w[c * d + j];
                    }
                    grad[nw + c] += gc;
                }
                // Jacobian of v -> (v - mean) / |v - mean| is symmetric:
                // (I - 11^T/d - u u^T) / |v - mean| with u the normalized output.
                let mean_up = up.iter().sum::<f64>() / d as f64;
                let proj = dot(&feat, &up);
                let dv: Vec<f64> = (0..d).map(|j| (up[j] - mean_up - proj * feat[j]) / scale).collect();
                let h_off = nw + classes;
                for (i, xi) in x.iter().enumerate() {
                    if *xi == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        grad[h_off + i * d + j] += xi * dv[j];
                    }
                }
            }
            ModelKind::ResidualRelu { dim } => {
                let nw1 = dim * dim;
                let (w1, w2) = theta.split_at(nw1);
                let g = coeffs[0];
                for j in 0..*dim {
                    let pre = dot(&w1[j * dim..(j + 1) * dim], x) + x[j];
                    grad[nw1 + j] += g * relu(pre);
                    if pre > 0.0 {
                        for (gi, xi) in grad[j * dim..(j + 1) * dim].iter_mut().zip(x) {
                            *gi += g * w2[j] * xi;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-coordinate linear coefficients of a linear-in-input model:
    /// `theta` itself for the homogeneous model, the factor products for the
    /// unbalanced diagonal model.
    pub fn linear_coefficients(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len("theta", self.param_count(), theta.len())?;
        match &self.kind {
            ModelKind::LinearHomogeneous { .. } => Ok(theta.to_vec()),
            ModelKind::UnbalancedDiagonal { depths } => {
                let mut off = 0;
                Ok(depths
                    .iter()
                    .map(|&d| {
                        let p = theta[off..off + d].iter().product();
                        off += d;
                        p
                    })
                    .collect())
            }
            _ => Err(Error::Unsupported(
                "linear coefficients exist only for linear-in-input models".into(),
            )),
        }
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidModel(format!("{name} must be positive")));
    }
    Ok(())
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `H^T x` for features stored row-major as `samples x d`.
fn mix_features(h: &[f64], x: &[f64], d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    for (i, xi) in x.iter().enumerate() {
        if *xi != 0.0 {
            for j in 0..d {
                v[j] += xi * h[i * d + j];
            }
        }
    }
    v
}

/// Layer normalization without affine parameters: subtract the mean, then
/// divide by the Euclidean norm of the centered vector. The result has zero
/// sum and unit norm.
pub fn layer_normalize(v: &[f64]) -> Result<Vec<f64>> {
    layer_normalize_with_scale(v).map(|(u, _)| u)
}

fn layer_normalize_with_scale(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let scale = crate::linalg::norm(&centered);
    let tiny = f64::EPSILON * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || scale <= tiny || !scale.is_finite() {
        return Err(Error::DegenerateFeature);
    }
    Ok((centered.into_iter().map(|x| x / scale).collect(), scale))
}
