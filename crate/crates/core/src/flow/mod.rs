//! Gradient flow on the exponential and cross-entropy losses, with a
//! diagnostics recorder for the margin and seminorm dynamics.

mod integrate;
mod loss;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{normalize, seminorm_sq_unchecked};
use crate::linalg::{dot, norm};
use crate::quasimodel::{ClassificationDataset, Model, ParamVec};

pub use integrate::Integrator;
pub use loss::{
    evaluate, loss, loss_gradient, margins, smooth_margin, smooth_margin_log, Evaluation, LossKind,
};
pub(crate) use loss::smooth_numerator;
pub use trace::{DiagnosticsRecord, FlowStatus, FlowTrace, MonitorReport, TRACE_HEADER};

/// Which clock the integrator steps in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// `d theta / dt = -grad L`.
    Raw,
    /// `d theta / ds = -grad L / max(L, floor)`, with `dt = ds / max(L, floor)`.
    LossNormalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    Gaussian { scale: f64 },
    Ones,
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub loss_kind: LossKind,
    pub integrator: Integrator,
    pub time_mode: TimeMode,
    /// Fixed step for Euler and RK4, initial step for the adaptive integrator.
    pub step_size: f64,
    pub max_steps: usize,
    pub stop_loss: f64,
    pub record_every: usize,
    pub seed: u64,
    pub init: Init,
    /// Relative and absolute local error target of the adaptive integrator.
    pub tolerance: f64,
    pub loss_floor: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::Exponential,
            integrator: Integrator::Rk4,
            time_mode: TimeMode::LossNormalized,
            step_size: 1e-2,
            max_steps: 200_000,
            stop_loss: 1e-30,
            record_every: 100,
            seed: 0,
            init: Init::Gaussian { scale: 1.0 },
            tolerance: 1e-10,
            loss_floor: 1e-300,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if !(self.stop_loss > 0.0) {
            return bad("stop_loss must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be positive");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.loss_floor > 0.0) {
            return bad("loss_floor must be positive");
        }
        if let Init::Gaussian { scale } = self.init {
            if !(scale > 0.0 && scale.is_finite()) {
                return bad("gaussian init scale must be positive");
            }
        }
        Ok(())
    }

    /// Initial parameters for `model`, drawn from a generator seeded with `self.seed`.
    pub fn initial_params(&self, model: &Model) -> Result<ParamVec> {
        let m = model.param_count();
        let values = match &self.init {
            Init::Ones => vec![1.0; m],
            Init::Explicit { values } => {
                check_len("init", m, values.len())?;
                values.clone()
            }
            Init::Gaussian { scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..m)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect()
            }
        };
        model.params(values)
    }
}

/// Callbacks into a running flow.
pub trait FlowObserver {
    /// Runs after every accepted step, may modify the parameters in place.
    fn post_step(&mut self, _theta: &mut [f64]) -> Result<()> {
        Ok(())
    }

    fn on_record(&mut self, _record: &DiagnosticsRecord, _theta: &[f64]) -> Result<()> {
        Ok(())
    }
}

impl FlowObserver for () {}

/// Keeps a copy of the parameters at every recorded step.
#[derive(Default, Debug, Clone)]
pub struct Snapshots {
    pub steps: Vec<usize>,
    pub thetas: Vec<Vec<f64>>,
}

impl FlowObserver for Snapshots {
    fn on_record(&mut self, record: &DiagnosticsRecord, theta: &[f64]) -> Result<()> {
        self.steps.push(record.step);
        self.thetas.push(theta.to_vec());
        Ok(())
    }
}

/// Runs gradient flow from `config.init`.
pub fn run_flow(model: &Model, data: &ClassificationDataset, config: &FlowConfig) -> Result<FlowTrace> {
    run_flow_with(model, data, config, &mut ())
}

/// [`run_flow`] with an observer. Invalid inputs are errors; numerical
/// failures mid-run end the run and are reported in [`FlowTrace::status`].
pub fn run_flow_with(
    model: &Model,
    data: &ClassificationDataset,
    config: &FlowConfig,
    observer: &mut dyn FlowObserver,
) -> Result<FlowTrace> {
    config.validate()?;
    let theta0 = config.initial_params(model)?;
    run_flow_from(model, data, config, theta0, observer)
}

/// Runs gradient flow from an explicit starting point.
pub fn run_flow_from(
    model: &Model,
    data: &ClassificationDataset,
    config: &FlowConfig,
    theta0: ParamVec,
    observer: &mut dyn FlowObserver,
) -> Result<FlowTrace> {
    config.validate()?;
    check_len("theta", model.param_count(), theta0.len())?;
    let mut theta = theta0.into_values();
    let mut ev = evaluate(model, &theta, data, config.loss_kind, true)?;
    let ln_floor = config.loss_floor.ln();
    let ln_stop = config.stop_loss.ln();
    let mut clock = Clock {
        s: 0.0,
        log_t: f64::NEG_INFINITY,
    };
    let mut rec = Recorder::new(model, data, config);
    rec.record(0, &clock, &theta, &ev, observer)?;

    let mut stepper = integrate::Stepper::new(config.integrator, config.step_size, config.tolerance);
    let mut status = FlowStatus::MaxSteps;
    let mut descent_violations = 0;
    let mut step = 0;
    while step < config.max_steps {
        if ev.log_loss <= ln_stop {
            status = FlowStatus::Converged;
            break;
        }
        if norm(&ev.direction) == 0.0 {
            status = FlowStatus::Stationary;
            break;
        }
        let field = |th: &[f64]| -> Result<Vec<f64>> {
            let e = evaluate(model, th, data, config.loss_kind, true)?;
            let scale = field_scale(config.time_mode, e.log_loss, ln_floor);
            Ok(e.direction.into_iter().map(|v| v * scale).collect())
        };
        let start = field_scale(config.time_mode, ev.log_loss, ln_floor);
        let k1: Vec<f64> = ev.direction.iter().map(|v| v * start).collect();
        let outcome = stepper
            .step(&theta, &k1, &field)
            .and_then(|(next, h)| {
                let mut next = next;
                observer.post_step(&mut next)?;
                let e = evaluate(model, &next, data, config.loss_kind, true)?;
                if !e.log_loss.is_finite() && e.log_loss != f64::NEG_INFINITY {
                    return Err(Error::NonFinite("loss".into()));
                }
                Ok((next, h, e))
            });
        let (next, h, next_ev) = match outcome {
            Ok(v) => v,
            Err(e) => {
                status = FlowStatus::Failed {
                    error: e.to_string(),
                };
                break;
            }
        };
        step += 1;
        clock.advance(config.time_mode, h, ev.log_loss, next_ev.log_loss, ln_floor);
        if next_ev.log_loss > ev.log_loss + 1e-9 {
            descent_violations += 1;
        }
        theta = next;
        ev = next_ev;
        let last = step == config.max_steps || ev.log_loss <= ln_stop;
        if step % config.record_every == 0 || last {
            rec.record(step, &clock, &theta, &ev, observer)?;
        }
    }
    if status == FlowStatus::MaxSteps && ev.log_loss <= ln_stop {
        status = FlowStatus::Converged;
    }
    // make sure the final state is on record
    if rec.records.last().map(|r| r.step) != Some(step) || matches!(status, FlowStatus::Stationary) {
        rec.record(step, &clock, &theta, &ev, observer)?;
    }
    let final_theta = model.params(theta)?;
    let final_normalized = normalize(model.lambda(), &final_theta).ok();
    Ok(FlowTrace {
        config: config.clone(),
        records: rec.records,
        final_theta,
        final_normalized,
        status,
        descent_violations,
        n: data.n(),
        lambda_max: model.lambda().lambda_max(),
    })
}

fn field_scale(mode: TimeMode, log_loss: f64, ln_floor: f64) -> f64 {
    match mode {
        TimeMode::Raw => log_loss.exp(),
        TimeMode::LossNormalized => (log_loss - log_loss.max(ln_floor)).exp(),
    }
}

struct Clock {
    s: f64,
    log_t: f64,
}

impl Clock {
    fn advance(&mut self, mode: TimeMode, h: f64, log_l0: f64, log_l1: f64, ln_floor: f64) {
        self.s += h;
        let log_dt = match mode {
            TimeMode::Raw => h.ln(),
            // trapezoid on dt/ds = 1 / max(L, floor)
            TimeMode::LossNormalized => {
                let a = -log_l0.max(ln_floor);
                let b = -log_l1.max(ln_floor);
                (0.5 * h).ln() + a.max(b) + (-(a - b).abs()).exp().ln_1p()
            }
        };
        let m = self.log_t.max(log_dt);
        self.log_t = if m == f64::NEG_INFINITY {
            m
        } else {
            m + ((self.log_t - m).exp() + (log_dt - m).exp()).ln()
        };
    }
}

struct Recorder<'a> {
    model: &'a Model,
    n: usize,
    kind: LossKind,
    records: Vec<DiagnosticsRecord>,
    prev_hat: Option<Vec<f64>>,
}

impl<'a> Recorder<'a> {
    fn new(model: &'a Model, data: &ClassificationDataset, config: &FlowConfig) -> Self {
        Self {
            model,
            n: data.n(),
            kind: config.loss_kind,
            records: Vec::new(),
            prev_hat: None,
        }
    }

    fn record(
        &mut self,
        step: usize,
        clock: &Clock,
        theta: &[f64],
        ev: &Evaluation,
        observer: &mut dyn FlowObserver,
    ) -> Result<()> {
        let lambda = self.model.lambda();
        let lmax = lambda.lambda_max();
        let s2 = seminorm_sq_unchecked(lambda.lambdas(), theta);
        let smax2: f64 = lambda.max_index_set().iter().map(|&i| lmax * theta[i] * theta[i]).sum();
        let seminorm = s2.sqrt();
        let log_root = 0.5 * s2.ln() / lmax;
        let gamma = ev.q_min / log_root.exp();
        let separable = ev.log_loss < self.kind.log_threshold(self.n);
        let gamma_tilde = separable.then(|| smooth_numerator(ev.log_loss, self.n, self.kind) / log_root.exp());
        let tangent: Vec<f64> = lambda.lambdas().iter().zip(theta).map(|(l, t)| l * t).collect();
        let nu_over_loss = dot(&tangent, &ev.direction);
        let (nt, nd) = (norm(&tangent), norm(&ev.direction));
        let beta = (nt > 0.0 && nd > 0.0).then(|| (nu_over_loss / (nt * nd)).clamp(-1.0, 1.0));
        let hat = crate::geometry::normalize_values(lambda.lambdas(), theta).ok().map(|(_, v)| v);
        let drift = match (&self.prev_hat, &hat) {
            (Some(a), Some(b)) => Some(norm(&crate::linalg::sub(b, a))),
            _ => None,
        };
        self.prev_hat = hat;
        let record = DiagnosticsRecord {
            step,
            s: clock.s,
            t: clock.log_t.exp(),
            log_t: clock.log_t,
            loss: ev.log_loss.exp(),
            log_loss: ev.log_loss,
            qmin: ev.q_min,
            seminorm,
            seminorm_max: smax2.sqrt(),
            gamma,
            gamma_tilde,
            beta,
            nu: ev.log_loss.exp() * nu_over_loss,
            nu_over_loss,
            separable,
            drift,
        };
        observer.on_record(&record, theta)?;
        self.records.push(record);
        Ok(())
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
    fn second_coordinate_is_frozen() {
        let (m, d) = two_points();
        let cfg = FlowConfig {
            init: Init::Explicit {
                values: vec![0.5, 0.3],
            },
            stop_loss: 1e-20,
            ..FlowConfig::default()
        };
        let tr = run_flow(&m, &d, &cfg).unwrap();
        assert_eq!(tr.status, FlowStatus::Converged);
        assert_eq!(tr.final_theta[1], 0.3);
        let last = tr.records.last().unwrap();
        assert!(last.beta.unwrap() >= 0.999);
        let hat = &tr.final_normalized.as_ref().unwrap().theta_hat;
        assert!(hat[0] > 0.999);
        assert!(tr.monitors().passed(), "{:?}", tr.monitors());
    }

    #[test]
    fn stationary_start_does_not_crash() {
        let m = Model::new(ModelKind::LinearHomogeneous { input_dim: 1 }).unwrap();
        let d = ClassificationDataset::binary(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap();
        let cfg = FlowConfig {
            init: Init::Explicit { values: vec![0.0] },
            ..FlowConfig::default()
        };
        let tr = run_flow(&m, &d, &cfg).unwrap();
        assert_eq!(tr.status, FlowStatus::Stationary);
        assert!(tr.records.len() >= 2);
        assert!(tr.records.iter().all(|r| r.loss == 1.0 && r.beta.is_none()));
    }

    #[test]
    fn integrators_agree() {
        let (m, d) = two_points();
        let mut finals = Vec::new();
        for integ in [Integrator::Euler, Integrator::Rk4, Integrator::Dopri5] {
            let cfg = FlowConfig {
                integrator: integ,
                time_mode: TimeMode::Raw,
                step_size: 1e-3,
                max_steps: 2000,
                init: Init::Explicit {
                    values: vec![0.1, 0.0],
                },
                ..FlowConfig::default()
            };
            let tr = run_flow(&m, &d, &cfg).unwrap();
            finals.push((tr.records.last().unwrap().t, tr.final_theta[0]));
        }
        // same raw time (2 for the fixed-step schemes), same endpoint
        assert!((finals[0].0 - 2.0).abs() < 1e-9);
        assert!((finals[0].1 - finals[1].1).abs() < 1e-3);
    }

    #[test]
    fn raw_time_reconstruction_matches_raw_mode() {
        let (m, d) = two_points();
        let base = FlowConfig {
            init: Init::Explicit {
                values: vec![0.2, 0.0],
            },
            stop_loss: 1e-3,
            step_size: 1e-3,
            ..FlowConfig::default()
        };
        let tn = run_flow(&m, &d, &base).unwrap();
        let t_end = tn.records.last().unwrap().t;
        let raw = FlowConfig {
            time_mode: TimeMode::Raw,
            step_size: 1e-2,
            max_steps: (t_end / 1e-2).round() as usize,
            ..base.clone()
        };
        let tr = run_flow(&m, &d, &raw).unwrap();
        let rel = (tr.final_theta[0] - tn.final_theta[0]).abs() / tn.final_theta[0];
        assert!(rel < 1e-2, "{rel}");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (m, d) = two_points();
        let cfg = FlowConfig {
            step_size: 0.0,
            ..FlowConfig::default()
        };
        assert!(matches!(run_flow(&m, &d, &cfg), Err(Error::InvalidConfig(_))));
    }
}
