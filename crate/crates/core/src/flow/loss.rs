//! Exponential and cross-entropy losses, margins and the smooth margin.
//!
//! Everything is carried in the log domain: late in training the loss sits
//! far below the smallest positive double, while `-grad L / L` stays O(1).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::seminorm_sq;
use crate::linalg::{log_softplus, log_sum_exp, softmax_into};
use crate::quasimodel::{ClassificationDataset, LambdaSpec, Labels, Model, ParamVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Exponential,
    CrossEntropy,
}

impl LossKind {
    /// Loss level below which the data counts as separated: `1/n` or `log 2 / n`.
    pub fn separability_threshold(self, n: usize) -> f64 {
        match self {
            LossKind::Exponential => 1.0 / n as f64,
            LossKind::CrossEntropy => std::f64::consts::LN_2 / n as f64,
        }
    }

    pub(crate) fn log_threshold(self, n: usize) -> f64 {
        let ln_n = (n as f64).ln();
        match self {
            LossKind::Exponential => -ln_n,
            LossKind::CrossEntropy => std::f64::consts::LN_2.ln() - ln_n,
        }
    }
}

/// Loss, margins and the normalized descent direction at one point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub log_loss: f64,
    /// `y_i f(x_i)` for binary data, `-LSE_{c != y}(f_c - f_y)` for multiclass.
    pub margins: Vec<f64>,
    pub q_min: f64,
    /// `-grad L / L`; empty unless requested.
    pub direction: Vec<f64>,
    /// Exponential loss only: `e^{-q_i} / (n L)`, i.e. `softmax(-q)`.
    pub weights: Vec<f64>,
}

impl Evaluation {
    pub fn loss(&self) -> f64 {
        self.log_loss.exp()
    }
}

fn check_arity(model: &Model, data: &ClassificationDataset, kind: LossKind) -> Result<()> {
    check_len("x", model.input_dim(), data.d())?;
    match (kind, data.labels()) {
        (LossKind::Exponential, Labels::Binary(_)) if model.output_dim() == 1 => Ok(()),
        (LossKind::CrossEntropy, Labels::Multiclass { num_classes, .. })
            if *num_classes == model.output_dim() =>
        {
            Ok(())
        }
        _ => Err(Error::InvalidDataset(format!(
            "{kind:?} loss needs {} labels matching the model's {} output(s)",
            if kind == LossKind::Exponential {
                "binary"
            } else {
                "multiclass"
            },
            model.output_dim()
        ))),
    }
}

/// Evaluates the loss and margins, and `-grad L / L` when `with_direction`.
pub fn evaluate(
    model: &Model,
    theta: &[f64],
    data: &ClassificationDataset,
    kind: LossKind,
    with_direction: bool,
) -> Result<Evaluation> {
    check_len("theta", model.param_count(), theta.len())?;
    check_arity(model, data, kind)?;
    if data.n() == 0 {
        return Err(Error::InvalidDataset("empty dataset".into()));
    }
    let ev = match data.labels() {
        Labels::Binary(y) => eval_exponential(model, theta, data, y, with_direction)?,
        Labels::Multiclass { labels, .. } => eval_cross_entropy(model, theta, data, labels, with_direction)?,
    };
    if !ev.log_loss.is_finite() && ev.log_loss != f64::NEG_INFINITY {
        return Err(Error::NonFinite("loss".into()));
    }
    if ev.direction.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(ev)
}

fn eval_exponential(
    model: &Model,
    theta: &[f64],
    data: &ClassificationDataset,
    y: &[f64],
    with_direction: bool,
) -> Result<Evaluation> {
    let n = data.n();
    let mut out = [0.0];
    let mut margins = Vec::with_capacity(n);
    if model.is_linear_in_input() {
        let w = model.linear_coefficients(theta)?;
        for i in 0..n {
            margins.push(y[i] * crate::linalg::dot(&w, data.input(i)));
        }
    } else {
        for i in 0..n {
            model.eval_into(theta, data.input(i), &mut out)?;
            margins.push(y[i] * out[0]);
        }
    }
    let neg: Vec<f64> = margins.iter().map(|q| -q).collect();
    let log_loss = log_sum_exp(&neg) - (n as f64).ln();
    let q_min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights = vec![0.0; n];
    softmax_into(&neg, &mut weights);

    let mut direction = Vec::new();
    if with_direction {
        direction = vec![0.0; model.param_count()];
        if model.is_linear_in_input() {
            let mut agg = vec![0.0; data.d()];
            for i in 0..n {
                crate::linalg::axpy(weights[i] * y[i], data.input(i), &mut agg);
            }
            model.vjp_into(theta, &agg, &[1.0], &mut direction)?;
        } else {
            for i in 0..n {
                if weights[i] != 0.0 {
                    model.vjp_into(theta, data.input(i), &[weights[i] * y[i]], &mut direction)?;
                }
            }
        }
    }
    Ok(Evaluation {
        log_loss,
        margins,
        q_min,
        direction,
        weights,
    })
}

fn eval_cross_entropy(
    model: &Model,
    theta: &[f64],
    data: &ClassificationDataset,
    labels: &[usize],
    with_direction: bool,
) -> Result<Evaluation> {
    let n = data.n();
    let k = model.output_dim();
    let mut logits = vec![0.0; n * k];
    let mut margins = Vec::with_capacity(n);
    let mut log_terms = Vec::with_capacity(n);
    let mut others = Vec::with_capacity(k);
    for i in 0..n {
        let f = &mut logits[i * k..(i + 1) * k];
        model.eval_into(theta, data.input(i), f)?;
        let yi = labels[i];
        others.clear();
        others.extend((0..k).filter(|&c| c != yi).map(|c| f[c] - f[yi]));
        let z = log_sum_exp(&others);
        margins.push(-z);
        // log of l_i = softplus(z)
        log_terms.push(log_softplus(z));
    }
    let log_loss = log_sum_exp(&log_terms) - (n as f64).ln();
    let q_min = margins.iter().copied().fold(f64::INFINITY, f64::min);

    let mut direction = Vec::new();
    if with_direction {
        direction = vec![0.0; model.param_count()];
        let ln_nl = (n as f64).ln() + log_loss;
        let mut coeffs = vec![0.0; k];
        for i in 0..n {
            let f = &logits[i * k..(i + 1) * k];
            let yi = labels[i];
            let lse_all = log_sum_exp(f);
            others.clear();
            others.extend((0..k).filter(|&c| c != yi).map(|c| f[c]));
            let lse_other = log_sum_exp(&others);
            // -(d l_i / d f_c) / (n L): softmax deficits, scaled in log space
            for c in 0..k {
                coeffs[c] = if c == yi {
                    (lse_other - lse_all - ln_nl).exp()
                } else {
                    -(f[c] - lse_all - ln_nl).exp()
                };
            }
            model.vjp_into(theta, data.input(i), &coeffs, &mut direction)?;
        }
    }
    Ok(Evaluation {
        log_loss,
        margins,
        q_min,
        direction,
        weights: Vec::new(),
    })
}

/// Mean loss: exponential for binary data, cross-entropy for multiclass.
pub fn loss(model: &Model, theta: &ParamVec, data: &ClassificationDataset, kind: LossKind) -> Result<f64> {
    Ok(evaluate(model, theta, data, kind, false)?.loss())
}

/// `grad L` (not negated).
pub fn loss_gradient(
    model: &Model,
    theta: &ParamVec,
    data: &ClassificationDataset,
    kind: LossKind,
) -> Result<ParamVec> {
    let ev = evaluate(model, theta, data, kind, true)?;
    let l = ev.loss();
    theta.with_values(ev.direction.iter().map(|v| -l * v).collect())
}

/// Minimum margin and the per-sample margins.
pub fn margins(
    model: &Model,
    theta: &ParamVec,
    data: &ClassificationDataset,
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    let ev = evaluate(model, theta, data, kind, false)?;
    Ok((ev.q_min, ev.margins))
}

/// Smooth normalized margin from the loss value.
///
/// Errors with [`Error::NotSeparable`] when the loss exceeds the
/// separability threshold (the threshold itself gives 0).
pub fn smooth_margin(lambda: &LambdaSpec, theta: &[f64], loss: f64, n: usize, kind: LossKind) -> Result<f64> {
    smooth_margin_log(lambda, theta, loss.ln(), n, kind)
}

/// [`smooth_margin`] taking `log L`, usable where `L` underflows.
pub fn smooth_margin_log(lambda: &LambdaSpec, theta: &[f64], log_loss: f64, n: usize, kind: LossKind) -> Result<f64> {
    if log_loss > kind.log_threshold(n) {
        return Err(Error::NotSeparable {
            loss: log_loss.exp(),
            threshold: kind.separability_threshold(n),
        });
    }
    let s2 = seminorm_sq(lambda, theta)?;
    if s2 <= 0.0 {
        return Err(Error::Degenerate("||theta||_Lambda = 0".into()));
    }
    Ok(smooth_numerator(log_loss, n, kind) / (0.5 * s2.ln() / lambda.lambda_max()).exp())
}

/// `log(1/(nL))` for the exponential loss, `-log(e^{nL} - 1)` for cross-entropy.
pub(crate) fn smooth_numerator(log_loss: f64, n: usize, kind: LossKind) -> f64 {
    let lx = log_loss + (n as f64).ln();
    match kind {
        LossKind::Exponential => -lx,
        LossKind::CrossEntropy => {
            if lx < -20.0 {
                // expm1(x) = x (1 + x/2 + ...)
                -lx - 0.5 * lx.exp()
            } else {
                let v = -lx.exp().exp_m1().ln();
                // at the threshold the value is 0 up to rounding
                if lx >= std::f64::consts::LN_2.ln() { v.min(0.0) } else { v }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasimodel::ModelKind;

    fn two_points() -> (Model, ClassificationDataset) {
        let m = Model::new(ModelKind::LinearHomogeneous { input_dim: 2 }).unwrap();
        let d = ClassificationDataset::binary(vec![vec![2.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0]).unwrap();
        (m, d)
    }

    #[test]
    fn exponential_loss_by_hand() {
        let (m, d) = two_points();
        let th = m.params(vec![1.0, 0.0]).unwrap();
        let l = loss(&m, &th, &d, LossKind::Exponential).unwrap();
        assert!((l - ((-2f64).exp() + (-1f64).exp()) / 2.0).abs() < 1e-15);
        assert!((l - 0.2516).abs() < 1e-4);
        let zero = m.params(vec![0.0, 0.0]).unwrap();
        assert_eq!(loss(&m, &zero, &d, LossKind::Exponential).unwrap(), 1.0);
        let (q, qs) = margins(&m, &th, &d, LossKind::Exponential).unwrap();
        assert_eq!(q, 1.0);
        assert_eq!(qs, vec![2.0, 1.0]);
        let bad = m.params(vec![-1.0, 0.0]).unwrap();
        assert!(margins(&m, &bad, &d, LossKind::Exponential).unwrap().0 < 0.0);
    }

    #[test]
    fn exponential_gradient_by_hand() {
        let (m, d) = two_points();
        let th = m.params(vec![1.0, 0.0]).unwrap();
        let g = loss_gradient(&m, &th, &d, LossKind::Exponential).unwrap();
        // (1/2)(-2 e^{-2} - 1 e^{-1})
        let want = 0.5 * (-2.0 * (-2f64).exp() - (-1f64).exp());
        assert!((g[0] - want).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    fn nll(classes: usize, samples: usize) -> Model {
        Model::new(ModelKind::NormalizedLastLayer {
            classes,
            feature_dim: 3,
            samples,
        })
        .unwrap()
    }

    #[test]
    fn symmetric_logits_give_log_two() {
        let m = nll(2, 2);
        let data = ClassificationDataset::multiclass(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0, 1],
            2,
        )
        .unwrap();
        let mut th = vec![0.0; m.param_count()];
        th[8..14].copy_from_slice(&[1.0, 0.0, -1.0, 0.0, 1.0, -1.0]);
        let th = m.params(th).unwrap();
        let l = loss(&m, &th, &data, LossKind::CrossEntropy).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_margin_formula() {
        // logits (3, 1, 1) for label 0: -log(2 e^{-2}) = 2 - log 2
        let m = nll(3, 1);
        let data = ClassificationDataset::multiclass(vec![vec![1.0]], vec![0], 3).unwrap();
        let s = 1.5f64.sqrt();
        let feat = [1.0 / s, -0.5 / s, -0.5 / s];
        let mut th = vec![0.0; m.param_count()];
        // w_0 = 2 feat, biases (1, 1, 1): f = (3, 1, 1)
        for j in 0..3 {
            th[j] = 2.0 * feat[j];
        }
        th[9..12].copy_from_slice(&[1.0, 1.0, 1.0]);
        th[12..15].copy_from_slice(&feat);
        let th = m.params(th).unwrap();
        assert!((m.forward(&th, &[1.0]).unwrap()[0] - 3.0).abs() < 1e-14);
        let (q, _) = margins(&m, &th, &data, LossKind::CrossEntropy).unwrap();
        assert!((q - (2.0 - std::f64::consts::LN_2)).abs() < 1e-14);
        assert!((q - 1.3069).abs() < 1e-4);
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let (m, d) = two_points();
        let th = m.params(vec![1.0, 0.0]).unwrap();
        assert!(loss(&m, &th, &d, LossKind::CrossEntropy).is_err());
    }

    #[test]
    fn smooth_margin_examples() {
        let l = LambdaSpec::homogeneous(2).unwrap();
        let loss = ((-2f64).exp() + (-1f64).exp()) / 2.0;
        let g = smooth_margin(&l, &[1.0, 0.0], loss, 2, LossKind::Exponential).unwrap();
        assert!((g + ((-2f64).exp() + (-1f64).exp()).ln()).abs() < 1e-14);
        assert!((g - 0.6868).abs() < 1e-4);
        assert_eq!(smooth_margin(&l, &[1.0, 0.0], 0.5, 2, LossKind::Exponential).unwrap(), 0.0);
        let g2 = smooth_margin(&l, &[2.0, 0.0], loss, 2, LossKind::Exponential).unwrap();
        assert!((g2 - g / 2.0).abs() < 1e-15);
        assert!(matches!(
            smooth_margin(&l, &[1.0, 0.0], 0.6, 2, LossKind::Exponential),
            Err(Error::NotSeparable { .. })
        ));
        let ce = smooth_margin(&l, &[1.0, 0.0], std::f64::consts::LN_2 / 2.0, 2, LossKind::CrossEntropy).unwrap();
        assert!(ce.abs() < 1e-15);
    }

    #[test]
    fn direction_survives_underflow() {
        let (m, d) = two_points();
        let th = m.params(vec![1000.0, 0.0]).unwrap();
        let ev = evaluate(&m, &th, &d, LossKind::Exponential, true).unwrap();
        assert_eq!(ev.loss(), 0.0);
        assert!((ev.log_loss - (-1000.0 - 2f64.ln())).abs() < 1e-9);
        // the far point carries weight e^{-1000} relative: direction is x_2 y_2 = (1, 0)
        assert!((ev.direction[0] - 1.0).abs() < 1e-12);
    }
}
