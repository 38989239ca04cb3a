use std::fmt;

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::flow::{evaluate, smooth_margin_log, Evaluation, LossKind};
use crate::geometry::psi;
use crate::linalg::{dot, norm};
use crate::quasimodel::{ClassificationDataset, Model, ParamVec};

/// An `(epsilon, delta)` certificate for `psi_alpha(theta)` with
/// `alpha = -log q_min`, plus the residuals measured at that point.
#[derive(Clone, Debug, Serialize)]
pub struct KktReport {
    pub rescaled_point: ParamVec,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub multipliers: Vec<f64>,
    pub stationarity_residual: f64,
    pub complementarity_value: f64,
    pub primal_feasible: bool,
    /// Minimum margin of the rescaled point (1 up to rounding).
    pub rescaled_min_margin: f64,
    pub q_min: f64,
    pub beta: f64,
    pub gamma_tilde: f64,
}

impl KktReport {
    /// `stationarity <= eps` and `complementarity <= delta`, each with `1e-9` slack,
    /// plus feasibility.
    pub fn is_sound(&self) -> bool {
        self.primal_feasible
            && self.multipliers.iter().all(|m| *m >= 0.0)
            && self.stationarity_residual <= self.epsilon + 1e-9
            && self.complementarity_value <= self.delta + 1e-9
    }
}

impl fmt::Display for KktReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "eps={:.6e} delta={:.6e} stat={:.6e} comp={:.6e} feasible={}",
            self.epsilon, self.delta, self.stationarity_residual, self.complementarity_value, self.primal_feasible
        )
    }
}

/// Certificate at `theta` given the flow velocity `-grad L(theta)`.
///
/// Only the exponential loss on binary data is supported.
pub fn kkt_certificate(
    model: &Model,
    theta: &ParamVec,
    velocity: &[f64],
    data: &ClassificationDataset,
) -> Result<KktReport> {
    check_len("velocity", model.param_count(), velocity.len())?;
    let ev = evaluate_binary(model, theta, data, false)?;
    let vn = norm(velocity);
    if vn == 0.0 {
        return Err(Error::Stationary);
    }
    certify(model, theta, data, &ev, velocity, vn.ln())
}

/// Certificate at `theta`, computing the velocity internally in scale-free
/// form so that it stays usable after the loss underflows.
pub fn kkt_certificate_at(model: &Model, theta: &ParamVec, data: &ClassificationDataset) -> Result<KktReport> {
    let ev = evaluate_binary(model, theta, data, true)?;
    let dn = norm(&ev.direction);
    if dn == 0.0 {
        return Err(Error::Stationary);
    }
    certify(model, theta, data, &ev, &ev.direction, ev.log_loss + dn.ln())
}

fn evaluate_binary(model: &Model, theta: &ParamVec, data: &ClassificationDataset, dir: bool) -> Result<Evaluation> {
    if !data.is_binary() {
        return Err(Error::Unsupported(
            "certificates are implemented for the binary exponential loss".into(),
        ));
    }
    evaluate(model, theta, data, LossKind::Exponential, dir)
}

/// `velocity` may be any positive multiple of `-grad L`; `log_vnorm` is the
/// log norm of the true velocity.
fn certify(
    model: &Model,
    theta: &ParamVec,
    data: &ClassificationDataset,
    ev: &Evaluation,
    velocity: &[f64],
    log_vnorm: f64,
) -> Result<KktReport> {
    let lambda = model.lambda();
    let lmax = lambda.lambda_max();
    let n = data.n();
    let q = ev.q_min;
    if !(q > 0.0) {
        return Err(Error::NotSeparating { q_min: q });
    }
    let gamma_tilde = smooth_margin_log(lambda, theta, ev.log_loss, n, LossKind::Exponential)?;
    let tangent: Vec<f64> = lambda.lambdas().iter().zip(theta.iter()).map(|(l, t)| l * t).collect();
    let tn = norm(&tangent);
    if tn == 0.0 {
        return Err(Error::Degenerate("Lambda theta = 0".into()));
    }
    let beta = (dot(&tangent, velocity) / (tn * norm(velocity))).clamp(-1.0, 1.0);

    let ln_q = q.ln();
    let alpha = -ln_q;
    let rescaled = psi(lambda, theta, alpha)?;

    let max_term = lambda
        .lambdas()
        .iter()
        .filter(|l| **l != lmax)
        .map(|l| (2.0 * (l - lmax) * ln_q).exp())
        .fold(0.0, f64::max);
    let m = model.param_count() as f64;
    let epsilon = lmax.sqrt() * gamma_tilde.powf(-lmax) * (2.0 * (1.0 - beta) + m * max_term).sqrt();
    let log_inv_nl = -(ev.log_loss + (n as f64).ln());
    let delta = (-1f64).exp() * n as f64 * lmax * gamma_tilde.powf(-2.0 * lmax) / log_inv_nl;

    // mu_i = q^{1 - 2 lmax} e^{-q_i} / (n c), c = |v| / |Lambda theta|
    let ln_n = (n as f64).ln();
    let base = (1.0 - 2.0 * lmax) * ln_q - ln_n - log_vnorm + tn.ln();
    let multipliers: Vec<f64> = ev.margins.iter().map(|qi| (base - qi).exp()).collect();

    let y = data.binary_labels().expect("checked binary");
    let mut combo = vec![0.0; model.param_count()];
    if model.is_linear_in_input() {
        let mut agg = vec![0.0; data.d()];
        for i in 0..n {
            crate::linalg::axpy(multipliers[i] * y[i], data.input(i), &mut agg);
        }
        model.vjp_into(&rescaled, &agg, &[1.0], &mut combo)?;
    } else {
        for i in 0..n {
            if multipliers[i] != 0.0 {
                model.vjp_into(&rescaled, data.input(i), &[multipliers[i] * y[i]], &mut combo)?;
            }
        }
    }
    let mut resid = combo;
    for r in resid.iter_mut() {
        *r = -*r;
    }
    for &i in lambda.max_index_set() {
        resid[i] += lmax * rescaled[i];
    }
    let stationarity_residual = norm(&resid);

    let after = evaluate(model, &rescaled, data, LossKind::Exponential, false)?;
    let complementarity_value = multipliers
        .iter()
        .zip(&after.margins)
        .map(|(mu, qi)| mu * (qi - 1.0))
        .sum();
    Ok(KktReport {
        rescaled_min_margin: after.q_min,
        primal_feasible: after.q_min >= 1.0 - 1e-9,
        rescaled_point: rescaled,
        alpha,
        epsilon,
        delta,
        multipliers,
        stationarity_residual,
        complementarity_value,
        q_min: q,
        beta,
        gamma_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{loss_gradient, run_flow, FlowConfig, Init};
    use crate::quasimodel::ModelKind;

    fn two_points() -> (Model, ClassificationDataset) {
        let m = Model::new(ModelKind::LinearHomogeneous { input_dim: 2 }).unwrap();
        let d = ClassificationDataset::binary(vec![vec![2.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0]).unwrap();
        (m, d)
    }

    #[test]
    fn late_endpoint_certificate() {
        let (m, d) = two_points();
        let cfg = FlowConfig {
            init: Init::Explicit {
                values: vec![0.5, 0.3],
            },
            stop_loss: 1e-20,
            ..FlowConfig::default()
        };
        let tr = run_flow(&m, &d, &cfg).unwrap();
        let th = &tr.final_theta;
        let g = loss_gradient(&m, th, &d, LossKind::Exponential).unwrap();
        let v: Vec<f64> = g.iter().map(|x| -x).collect();
        let rep = kkt_certificate(&m, th, &v, &d).unwrap();
        assert!(rep.epsilon < 0.1 && rep.delta < 0.1, "{rep}");
        assert!(rep.is_sound(), "{rep}");
        assert!((rep.rescaled_min_margin - 1.0).abs() < 1e-12);
        let at = kkt_certificate_at(&m, th, &d).unwrap();
        assert!((at.epsilon - rep.epsilon).abs() < 1e-12);
        assert!((at.stationarity_residual - rep.stationarity_residual).abs() < 1e-9);
    }

    #[test]
    fn homogeneous_epsilon_has_no_rate_term() {
        let (m, d) = two_points();
        let th = m.params(vec![30.0, 0.0]).unwrap();
        let rep = kkt_certificate_at(&m, &th, &d).unwrap();
        assert!(rep.beta > 1.0 - 1e-15);
        assert!(rep.epsilon < 1e-6);
        let expected = rep.gamma_tilde.powf(-1.0) * (2.0 * (1.0 - rep.beta)).sqrt();
        assert!((rep.epsilon - expected).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let (m, d) = two_points();
        let bad = m.params(vec![-1.0, 0.0]).unwrap();
        assert!(matches!(
            kkt_certificate(&m, &bad, &[1.0, 0.0], &d),
            Err(Error::NotSeparating { .. })
        ));
        let th = m.params(vec![5.0, 0.0]).unwrap();
        assert!(matches!(kkt_certificate(&m, &th, &[0.0, 0.0], &d), Err(Error::Stationary)));
    }

    #[test]
    fn eps_delta_shrink_along_the_direction() {
        let (m, d) = two_points();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for s in [5.0, 20.0, 80.0] {
            let rep = kkt_certificate_at(&m, &m.params(vec![s, 0.0]).unwrap(), &d).unwrap();
            assert!(rep.epsilon <= prev.0 && rep.delta < prev.1);
            prev = (rep.epsilon, rep.delta);
        }
    }
}
