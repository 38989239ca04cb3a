use serde::Serialize;

use super::model::Model;
use crate::error::{check_len, Result};
use crate::geometry::psi_values;
use crate::linalg::dot;

/// Which identity a failed check belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `f(x; psi_alpha(theta)) = e^alpha f(x; theta)`
    Scaling,
    /// `<grad f, Lambda theta> = f`
    Euler,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyFailure {
    pub kind: CheckKind,
    pub sample: usize,
    pub alpha: Option<f64>,
    pub output: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of [`verify_quasi_homogeneity`]. Failures are listed, never raised.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QuasiHomogeneityReport {
    pub scaling_checks: usize,
    pub euler_checks: usize,
    /// Points skipped for the Euler identity because they sit on a ReLU kink.
    pub kinks_skipped: usize,
    pub max_scaling_error: f64,
    pub max_euler_error: f64,
    pub failures: Vec<VerifyFailure>,
}

impl QuasiHomogeneityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks the scaling law of the model under `psi_alpha` for every sampled
/// `alpha` and input, and the Euler identity at differentiable points.
///
/// Errors are relative: `|lhs - rhs| <= tol * (1 + |rhs|)`.
pub fn verify_quasi_homogeneity(
    model: &Model,
    theta: &[f64],
    alphas: &[f64],
    x_samples: &[Vec<f64>],
    tol: f64,
) -> Result<QuasiHomogeneityReport> {
    check_len("theta", model.param_count(), theta.len())?;
    let lambdas = model.lambda().lambdas();
    let scaled_lambda: Vec<f64> = lambdas.iter().zip(theta).map(|(l, t)| l * t).collect();
    let mut report = QuasiHomogeneityReport::default();

    for (si, x) in x_samples.iter().enumerate() {
        let f = model.forward(theta, x)?;
        for &alpha in alphas {
            let moved = psi_values(lambdas, theta, alpha);
            let g = model.forward(&moved, x)?;
            for (c, (gc, fc)) in g.iter().zip(&f).enumerate() {
                let rhs = alpha.exp() * fc;
                let err = (gc - rhs).abs() / (1.0 + rhs.abs());
                report.scaling_checks += 1;
                report.max_scaling_error = report.max_scaling_error.max(err);
                if !(err <= tol) {
                    report.failures.push(VerifyFailure {
                        kind: CheckKind::Scaling,
                        sample: si,
                        alpha: Some(alpha),
                        output: c,
                        lhs: *gc,
                        rhs,
                    });
                }
            }
        }

        if !model.is_differentiable_at(theta, x)? {
            report.kinks_skipped += 1;
            continue;
        }
        for (c, fc) in f.iter().enumerate() {
            let grad = model.gradient(theta, x, Some(c))?;
            let lhs = dot(&grad, &scaled_lambda);
            let err = (lhs - fc).abs() / (1.0 + fc.abs());
            report.euler_checks += 1;
            report.max_euler_error = report.max_euler_error.max(err);
            if !(err <= tol) {
                report.failures.push(VerifyFailure {
                    kind: CheckKind::Euler,
                    sample: si,
                    alpha: None,
                    output: c,
                    lhs,
                    rhs: *fc,
                });
            }
        }
    }
    Ok(report)
}
