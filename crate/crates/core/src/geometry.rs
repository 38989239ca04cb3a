//! Geometry induced by the scaling exponents: the transform `psi_alpha`,
//! the Lambda seminorms, normalization onto the unit seminorm ellipsoid, and
//! the alignment between the velocity and the characteristic tangent.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm};
use crate::quasimodel::{LambdaSpec, ParamVec};

/// `psi_alpha(theta) = e^{alpha Lambda} theta`, keeping the layout.
pub fn psi(lambda: &LambdaSpec, theta: &ParamVec, alpha: f64) -> Result<ParamVec> {
    check_len("theta", lambda.len(), theta.len())?;
    theta.with_values(psi_values(lambda.lambdas(), theta, alpha))
}

/// Slice form of [`psi`]. Lengths must agree.
pub fn psi_values(lambdas: &[f64], theta: &[f64], alpha: f64) -> Vec<f64> {
    debug_assert_eq!(lambdas.len(), theta.len());
    lambdas
        .iter()
        .zip(theta)
        .map(|(l, t)| if *l == 0.0 { *t } else { (alpha * l).exp() * t })
        .collect()
}

/// `||theta||_Lambda^2 = sum_i lambda_i theta_i^2`.
pub fn seminorm_sq(lambda: &LambdaSpec, theta: &[f64]) -> Result<f64> {
    check_len("theta", lambda.len(), theta.len())?;
    Ok(seminorm_sq_unchecked(lambda.lambdas(), theta))
}

/// The seminorm restricted to the highest-rate coordinates.
pub fn seminorm_max_sq(lambda: &LambdaSpec, theta: &[f64]) -> Result<f64> {
    check_len("theta", lambda.len(), theta.len())?;
    Ok(lambda
        .max_index_set()
        .iter()
        .map(|&i| lambda.lambda_max() * theta[i] * theta[i])
        .sum())
}

pub(crate) fn seminorm_sq_unchecked(lambdas: &[f64], theta: &[f64]) -> f64 {
    lambdas.iter().zip(theta).map(|(l, t)| l * t * t).sum()
}

/// The tangent vector `Lambda theta` of the characteristic curve through `theta`.
pub fn tangent(lambda: &LambdaSpec, theta: &[f64]) -> Result<Vec<f64>> {
    check_len("theta", lambda.len(), theta.len())?;
    Ok(lambda.lambdas().iter().zip(theta).map(|(l, t)| l * t).collect())
}

/// A point moved along its characteristic curve onto `||theta_hat||_Lambda = 1`,
/// with `theta = psi_tau(theta_hat)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalizedPoint {
    pub theta_hat: ParamVec,
    pub tau: f64,
}

/// Lambda-normalization.
///
/// Solves `sum_i lambda_i theta_i^2 z^{lambda_i} = 1` for its unique positive
/// root in `u = log z`, where the left side is increasing, then sets
/// `tau = -u / 2` and `theta_hat = psi_{-tau}(theta)`.
pub fn normalize(lambda: &LambdaSpec, theta: &ParamVec) -> Result<NormalizedPoint> {
    check_len("theta", lambda.len(), theta.len())?;
    let (tau, values) = normalize_values(lambda.lambdas(), theta)?;
    Ok(NormalizedPoint {
        theta_hat: theta.with_values(values)?,
        tau,
    })
}

pub(crate) fn normalize_values(lambdas: &[f64], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let u = solve_log_root(lambdas, theta)?;
    let tau = -0.5 * u;
    Ok((tau, psi_values(lambdas, theta, -tau)))
}

/// Root of `G(u) = log sum_i exp(log a_i + lambda_i u)` with `a_i = lambda_i theta_i^2`.
/// Working with `G` keeps the evaluation finite for extreme scales.
fn solve_log_root(lambdas: &[f64], theta: &[f64]) -> Result<f64> {
    let terms: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(theta)
        .filter(|(l, t)| **l > 0.0 && **t != 0.0)
        .map(|(l, t)| ((l * t * t).ln(), *l))
        .collect();
    if terms.is_empty() {
        return Err(Error::Degenerate(
            "||theta||_Lambda = 0, normalization undefined".into(),
        ));
    }
    if terms.iter().any(|(la, _)| !la.is_finite()) {
        return Err(Error::NonFinite("theta has a non-finite entry".into()));
    }
    let g = |u: f64| {
        let m = terms
            .iter()
            .map(|(la, l)| la + l * u)
            .fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|(la, l)| (la + l * u - m).exp()).sum::<f64>().ln()
    };

    // bracket by doubling away from u = 0
    let (mut lo, mut hi);
    if g(0.0) > 0.0 {
        hi = 0.0;
        let mut step = 1.0;
        lo = -step;
        while g(lo) > 0.0 {
            hi = lo;
            step *= 2.0;
            lo = -step;
            if !lo.is_finite() {
                return Err(Error::NonFinite("normalization bracket diverged".into()));
            }
        }
    } else {
        lo = 0.0;
        let mut step = 1.0;
        hi = step;
        while g(hi) <= 0.0 {
            lo = hi;
            step *= 2.0;
            hi = step;
            if !hi.is_finite() {
                return Err(Error::NonFinite("normalization bracket diverged".into()));
            }
        }
    }

    while hi - lo > 1e-14 * lo.abs().max(hi.abs()).max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Newton polish on G, kept inside the bracket.
    let mut u = 0.5 * (lo + hi);
    for _ in 0..3 {
        let m = terms
            .iter()
            .map(|(la, l)| la + l * u)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut s, mut ds) = (0.0, 0.0);
        for (la, l) in &terms {
            let e = (la + l * u - m).exp();
            s += e;
            ds += l * e;
        }
        let gu = m + s.ln();
        let slope = ds / s;
        if gu == 0.0 || slope <= 0.0 {
            break;
        }
        let next = u - gu / slope;
        if next < lo || next > hi || !next.is_finite() {
            break;
        }
        u = next;
    }
    Ok(u)
}

/// Cosine between velocity and tangent, and the seminorm growth rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Alignment {
    /// `<Lambda theta, v> / (|Lambda theta| |v|)`; `None` when either vector vanishes.
    pub beta: Option<f64>,
    /// `<v, Lambda theta> = (1/2) d/dt ||theta||_Lambda^2`.
    pub nu: f64,
}

pub fn alignment(lambda: &LambdaSpec, theta: &[f64], velocity: &[f64]) -> Result<Alignment> {
    check_len("velocity", theta.len(), velocity.len())?;
    let t = tangent(lambda, theta)?;
    let nu = dot(&t, velocity);
    let (nt, nv) = (norm(&t), norm(velocity));
    let beta = if nt > 0.0 && nv > 0.0 {
        Some((nu / (nt * nv)).clamp(-1.0, 1.0))
    } else {
        None
    };
    Ok(Alignment { beta, nu })
}
