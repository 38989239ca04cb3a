use std::io::Write;

use serde::Serialize;

use super::{FlowConfig, LossKind};
use crate::error::{Error, Result};
use crate::geometry::NormalizedPoint;
use crate::quasimodel::ParamVec;

/// Column order of the CSV trace export.
pub const TRACE_HEADER: [&str; 11] = [
    "step",
    "t",
    "loss",
    "qmin",
    "seminorm",
    "seminorm_max",
    "gamma",
    "gamma_tilde",
    "beta",
    "nu",
    "separable",
];

/// Diagnostics at one recorded step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    /// Integrator clock (equal to `t` in raw mode).
    pub s: f64,
    /// Raw gradient-flow time; may overflow to infinity, see `log_t`.
    pub t: f64,
    pub log_t: f64,
    pub loss: f64,
    pub log_loss: f64,
    pub qmin: f64,
    pub seminorm: f64,
    pub seminorm_max: f64,
    pub gamma: f64,
    pub gamma_tilde: Option<f64>,
    pub beta: Option<f64>,
    /// `<d theta/dt, Lambda theta>`.
    pub nu: f64,
    /// `nu / L`, finite even when `L` underflows.
    pub nu_over_loss: f64,
    pub separable: bool,
    /// `|theta_hat_k - theta_hat_{k-1}|` against the previous record.
    pub drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FlowStatus {
    /// The loss reached `stop_loss`.
    Converged,
    MaxSteps,
    /// The gradient vanished.
    Stationary,
    /// Non-finite loss or gradient; the trace ends at the last good state.
    Failed { error: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrace {
    pub config: FlowConfig,
    pub records: Vec<DiagnosticsRecord>,
    pub final_theta: ParamVec,
    pub final_normalized: Option<NormalizedPoint>,
    pub status: FlowStatus,
    /// Steps where the loss rose by more than `1e-9` in log scale.
    pub descent_violations: usize,
    pub n: usize,
    pub lambda_max: f64,
}

/// Outcome of the inequality monitors over recorded steps after separability.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MonitorReport {
    pub seminorm_checks: usize,
    /// Steps where `nu < RHS - 1e-6 (1 + |RHS|)`.
    pub seminorm_violations: Vec<usize>,
    /// Smallest `nu/L - RHS/L` seen.
    pub seminorm_min_slack: Option<f64>,
    pub gamma_checks: usize,
    pub gamma_violations: Vec<usize>,
    pub angle_checks: usize,
    pub angle_violations: Vec<usize>,
    pub descent_violations: usize,
}

impl MonitorReport {
    pub fn passed(&self) -> bool {
        self.seminorm_violations.is_empty()
            && self.gamma_violations.is_empty()
            && self.angle_violations.is_empty()
            && self.descent_violations == 0
    }
}

const SLACK: f64 = 1e-6;

impl FlowTrace {
    pub fn final_record(&self) -> &DiagnosticsRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.status, FlowStatus::Failed { .. })
    }

    /// Checks the seminorm growth bound, the monotonicity of the smooth
    /// margin and the angle inequality on consecutive separable records.
    ///
    /// The growth bound is checked after dividing both sides by `L`, which is
    /// stricter than the raw form and survives underflow of `L`.
    pub fn monitors(&self) -> MonitorReport {
        let mut rep = MonitorReport {
            descent_violations: self.descent_violations,
            ..MonitorReport::default()
        };
        let kind = self.config.loss_kind;
        let n = self.n as f64;
        for r in self.records.iter().filter(|r| r.separable) {
            let lx = r.log_loss + n.ln();
            let g = super::smooth_numerator(r.log_loss, self.n, kind);
            let rhs = match kind {
                LossKind::Exponential => g,
                // (1 - e^{-nL}) / (nL) * g
                LossKind::CrossEntropy => {
                    let x = lx.exp();
                    let phi = if lx < -30.0 { 1.0 - 0.5 * x } else { -(-x).exp_m1() / x };
                    phi * g
                }
            };
            rep.seminorm_checks += 1;
            let slack = r.nu_over_loss - rhs;
            rep.seminorm_min_slack = Some(rep.seminorm_min_slack.map_or(slack, |m: f64| m.min(slack)));
            if slack < -SLACK * (1.0 + rhs.abs()) {
                rep.seminorm_violations.push(r.step);
            }
        }
        for w in self.records.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (Some(ga), Some(gb)) = (a.gamma_tilde, b.gamma_tilde) else {
                continue;
            };
            rep.gamma_checks += 1;
            if gb < ga - SLACK * ga.abs() {
                rep.gamma_violations.push(b.step);
            }
            let (Some(ba), Some(bb)) = (a.beta, b.beta) else {
                continue;
            };
            if ba <= 0.0 || bb <= 0.0 || ga <= 0.0 || gb <= 0.0 {
                continue;
            }
            let tan2 = |c: f64| (1.0 - c * c).max(0.0) / (c * c);
            let dlog_norm = (b.seminorm / a.seminorm).ln();
            let rhs = dlog_norm / self.lambda_max * tan2(ba).min(tan2(bb));
            let lhs = (gb / ga).ln();
            rep.angle_checks += 1;
            if lhs < rhs - SLACK * (1.0 + rhs.abs()) {
                rep.angle_violations.push(b.step);
            }
        }
        rep
    }

    /// CSV with the fixed [`TRACE_HEADER`] columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER).map_err(io_err)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.t.to_string(),
                r.loss.to_string(),
                r.qmin.to_string(),
                r.seminorm.to_string(),
                r.seminorm_max.to_string(),
                r.gamma.to_string(),
                opt(r.gamma_tilde),
                opt(r.beta),
                r.nu.to_string(),
                r.separable.to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// JSON with one object per record, keyed like the CSV columns, plus the
    /// run status and final parameters.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .records
            .iter()
            .map(|r| {
                serde_json::json!({
                    "step": r.step,
                    "t": finite_or_null(r.t),
                    "loss": r.loss,
                    "qmin": r.qmin,
                    "seminorm": r.seminorm,
                    "seminorm_max": r.seminorm_max,
                    "gamma": r.gamma,
                    "gamma_tilde": r.gamma_tilde,
                    "beta": r.beta,
                    "nu": r.nu,
                    "separable": r.separable,
                })
            })
            .collect();
        serde_json::json!({
            "config": self.config,
            "status": self.status,
            "final_theta": self.final_theta,
            "final_normalized": self.final_normalized,
            "records": rows,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        v.into()
    } else {
        serde_json::Value::Null
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
