//! Two-ball classification: sampling, the closed-form max-margin
//! classifiers for the homogeneous and rate-weighted problems, and the
//! radius sweep comparing them against trained linear models.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowConfig, FlowStatus};
use crate::linalg::{dot, norm};
use crate::quasimodel::{ClassificationDataset, Model, ModelKind};

/// Unit mean used by default; its tail has norm 0.5, and 0.25 past the second coordinate.
pub const DEFAULT_MU: [f64; 3] = [0.8660254, 0.4330127, 0.25];

/// Balls `B(+mu, r)` (label +1) and `B(-mu, r)` (label -1); `P` projects
/// onto the first `m` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallProblem {
    pub mu: Vec<f64>,
    pub r: f64,
    pub m: usize,
    pub rho_mu: f64,
    pub samples_per_ball: usize,
    pub surface_only: bool,
}

impl BallProblem {
    pub fn new(mu: Vec<f64>, r: f64, m: usize, samples_per_ball: usize, surface_only: bool) -> Result<Self> {
        if (norm(&mu) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("|mu| = {} is not 1", norm(&mu))));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidConfig(format!("radius {r} outside (0, 1)")));
        }
        if m == 0 || m > mu.len() {
            return Err(Error::InvalidConfig(format!("m = {m} must be in 1..={}", mu.len())));
        }
        if samples_per_ball == 0 {
            return Err(Error::InvalidConfig("samples_per_ball must be positive".into()));
        }
        let rho_mu = norm(&mu[m..]);
        Ok(Self {
            mu,
            r,
            m,
            rho_mu,
            samples_per_ball,
            surface_only,
        })
    }

    /// [`DEFAULT_MU`] normalized, `m = 1`, 512 surface samples per ball.
    pub fn with_default_mu(r: f64) -> Result<Self> {
        Self::new(unit(&DEFAULT_MU), r, 1, 512, true)
    }

    pub fn with_radius(&self, r: f64) -> Result<Self> {
        Self::new(self.mu.clone(), r, self.m, self.samples_per_ball, self.surface_only)
    }

    fn split(&self) -> (Vec<f64>, Vec<f64>) {
        let mut p = self.mu.clone();
        let mut q = self.mu.clone();
        p[self.m..].iter_mut().for_each(|v| *v = 0.0);
        q[..self.m].iter_mut().for_each(|v| *v = 0.0);
        (p, q)
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

/// The rate-weighted optimum, present only under conditional separability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiHomSolution {
    /// Unit direction.
    pub w: Vec<f64>,
    /// The minimizer itself, scaled to margin 1 on the balls.
    pub w_margin_one: Vec<f64>,
    pub robustness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticSolution {
    pub w_hom: Vec<f64>,
    pub l_hom: f64,
    pub quasi_hom: std::result::Result<QuasiHomSolution, Error>,
}

/// Closed-form minimizers of `|w|` and of `|P w|` subject to margin 1 on both balls.
pub fn analytic_solution(problem: &BallProblem) -> AnalyticSolution {
    let r = problem.r;
    let rho = problem.rho_mu;
    let quasi_hom = if r <= rho {
        Err(Error::ConditionalSeparabilityViolated { r, rho_mu: rho })
    } else {
        let (pm, qm) = problem.split();
        let s = (1.0 - rho * rho).sqrt();
        let t = (1.0 - rho * rho / (r * r)).sqrt();
        let a = ((1.0 - rho * rho / (r * r)) / (1.0 - rho * rho)).sqrt();
        let dir: Vec<f64> = pm.iter().zip(&qm).map(|(p, q)| a * p + q / r).collect();
        let k = 1.0 / (s - (r * r - rho * rho).sqrt());
        let w_margin_one: Vec<f64> = pm
            .iter()
            .zip(&qm)
            .map(|(p, q)| k * (if s > 0.0 { p / s } else { 0.0 } + q / (r * t)))
            .collect();
        Ok(QuasiHomSolution {
            w: unit(&dir),
            w_margin_one,
            robustness: t * (s - (r * r - rho * rho).sqrt()),
        })
    };
    AnalyticSolution {
        w_hom: problem.mu.clone(),
        l_hom: 1.0 - r,
        quasi_hom,
    }
}

/// Distance from the boundary `<w, x> = 0` to the nearer ball: `<w, mu>/|w| - r`.
pub fn robustness(w: &[f64], problem: &BallProblem) -> Result<f64> {
    crate::error::check_len("w", problem.mu.len(), w.len())?;
    let n = norm(w);
    if n == 0.0 {
        return Err(Error::Degenerate("w = 0".into()));
    }
    Ok(dot(w, &problem.mu) / n - problem.r)
}

/// Draws `samples_per_ball` points from each ball (or sphere).
pub fn sample_balls(problem: &BallProblem, seed: u64) -> ClassificationDataset {
    let d = problem.mu.len();
    let k = problem.samples_per_ball;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(2 * k * d);
    let mut labels = Vec::with_capacity(2 * k);
    for (sign, label) in [(1.0, 1.0), (-1.0, -1.0)] {
        for _ in 0..k {
            let g = loop {
                let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                if norm(&g) > 1e-12 {
                    break g;
                }
            };
            let len = norm(&g);
            let radius = if problem.surface_only {
                problem.r
            } else {
                problem.r * rng.random::<f64>().powf(1.0 / d as f64)
            };
            inputs.extend(g.iter().zip(&problem.mu).map(|(gi, m)| sign * m + radius * gi / len));
            labels.push(label);
        }
    }
    ClassificationDataset::from_flat(inputs, 2 * k, d, crate::quasimodel::Labels::Binary(labels))
        .expect("shapes are consistent")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepModel {
    Hom,
    QuasiHom { depths: Vec<usize> },
}

impl SweepModel {
    pub fn label(&self) -> &'static str {
        match self {
            SweepModel::Hom => "hom",
            SweepModel::QuasiHom { .. } => "quasi_hom",
        }
    }

    fn build(&self, d: usize) -> Result<Model> {
        let kind = match self {
            SweepModel::Hom => ModelKind::LinearHomogeneous { input_dim: d },
            SweepModel::QuasiHom { depths } => {
                if depths.len() != d {
                    return Err(Error::InvalidConfig(format!(
                        "{} depths for a {d}-dimensional problem",
                        depths.len()
                    )));
                }
                ModelKind::UnbalancedDiagonal { depths: depths.clone() }
            }
        };
        Model::new(kind)
    }
}

/// One radius of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub r: f64,
    pub model: String,
    /// Trained classifier rescaled to minimum margin 1 on the samples.
    pub w: Vec<f64>,
    pub robustness: f64,
    pub robustness_analytic_hom: f64,
    pub robustness_analytic_qh: Option<f64>,
    /// At or below the conditional-separability radius.
    pub conjecture: bool,
    pub flow_ok: bool,
    pub final_loss_log: f64,
    pub steps: usize,
}

/// Default radii `k / 101` for `k = 1..=100`.
pub fn default_radii() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 101.0).collect()
}

/// Seed for sweep point `index`, independent of how points are scheduled.
pub fn point_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

/// Trains one model per radius on freshly sampled balls. Rows come back in
/// radius order whatever `jobs` is; failed flows are flagged, not fatal.
pub fn radius_sweep(
    template: &BallProblem,
    radii: &[f64],
    model: &SweepModel,
    config: &FlowConfig,
    seed: u64,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let net = model.build(template.mu.len())?;
    let problems = radii
        .iter()
        .map(|&r| template.with_radius(r))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| {
        problems
            .par_iter()
            .enumerate()
            .map(|(i, p)| sweep_point(p, &net, model, config, point_seed(seed, i)))
            .collect()
    })
}

fn sweep_point(p: &BallProblem, net: &Model, model: &SweepModel, config: &FlowConfig, seed: u64) -> Result<SweepRow> {
    let data = sample_balls(p, seed);
    let cfg = FlowConfig {
        seed,
        ..config.clone()
    };
    let an = analytic_solution(p);
    let mut row = SweepRow {
        r: p.r,
        model: model.label().to_string(),
        w: vec![f64::NAN; p.mu.len()],
        robustness: f64::NAN,
        robustness_analytic_hom: an.l_hom,
        robustness_analytic_qh: an.quasi_hom.as_ref().ok().map(|q| q.robustness),
        conjecture: p.r <= p.rho_mu,
        flow_ok: false,
        final_loss_log: f64::NAN,
        steps: 0,
    };
    let trace = match run_flow(net, &data, &cfg) {
        Ok(t) => t,
        Err(_) => return Ok(row),
    };
    let last = trace.final_record();
    row.final_loss_log = last.log_loss;
    row.steps = last.step;
    let w = net.linear_coefficients(&trace.final_theta)?;
    let q = last.qmin;
    row.flow_ok = !matches!(trace.status, FlowStatus::Failed { .. }) && q > 0.0;
    if q > 0.0 {
        row.w = w.iter().map(|v| v / q).collect();
    } else {
        row.w = w.clone();
    }
    row.robustness = robustness(&w, p).unwrap_or(f64::NAN);
    Ok(row)
}

/// Column names of the sweep CSV for a `d`-dimensional problem.
pub fn sweep_header(d: usize) -> Vec<String> {
    let mut h = vec!["r".to_string(), "model".to_string()];
    h.extend((1..=d).map(|i| format!("w{i}")));
    h.extend(
        ["robustness", "robustness_analytic_hom", "robustness_analytic_qh", "conjecture", "flow_ok"]
            .map(String::from),
    );
    h
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let d = rows.first().map_or(3, |r| r.w.len());
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(sweep_header(d)).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.r.to_string(), r.model.clone()];
        rec.extend(r.w.iter().map(|v| v.abs().to_string()));
        rec.push(r.robustness.to_string());
        rec.push(r.robustness_analytic_hom.to_string());
        rec.push(r.robustness_analytic_qh.map(|v| v.to_string()).unwrap_or_default());
        rec.push(r.conjecture.to_string());
        rec.push(r.flow_ok.to_string());
        w.write_record(rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_at_three_quarters() {
        let p = BallProblem::with_default_mu(0.75).unwrap();
        assert!((p.rho_mu - 0.5).abs() < 1e-7);
        let a = analytic_solution(&p);
        assert_eq!(a.l_hom, 0.25);
        let q = a.quasi_hom.unwrap();
        assert!((q.robustness - 0.2289).abs() < 1e-4, "{}", q.robustness);
        assert!((robustness(&q.w, &p).unwrap() - q.robustness).abs() < 1e-12);
        // unnormalized direction (0.7454, 0.5774, 0.3333) for the rounded mean
        let raw = [0.7454, 0.5774, 0.3333];
        let c = dot(&q.w, &raw) / norm(&raw);
        assert!(c > 1.0 - 1e-7);
    }

    #[test]
    fn no_tail_means_no_gap() {
        let p = BallProblem::new(vec![1.0, 0.0, 0.0], 0.4, 1, 8, true).unwrap();
        let a = analytic_solution(&p);
        let q = a.quasi_hom.unwrap();
        assert!((q.robustness - 0.6).abs() < 1e-15);
        assert!((dot(&q.w, &p.mu) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn robustness_collapses_at_the_threshold() {
        let l = |r: f64| {
            analytic_solution(&BallProblem::with_default_mu(r).unwrap())
                .quasi_hom
                .map(|q| q.robustness)
        };
        assert!(l(0.500001).unwrap() < 1e-2);
        assert!(matches!(
            l(0.49),
            Err(Error::ConditionalSeparabilityViolated { .. })
        ));
    }

    #[test]
    fn margin_one_solution_structure() {
        let p = BallProblem::with_default_mu(0.8).unwrap();
        let q = analytic_solution(&p).quasi_hom.unwrap();
        let w = &q.w_margin_one;
        let (_, qm) = p.split();
        let w1 = norm(&w[..1]);
        let t = (1.0 - p.rho_mu * p.rho_mu / (p.r * p.r)).sqrt();
        for j in 1..3 {
            assert!((w[j] - w1 / (p.r * t) * qm[j]).abs() < 1e-12);
        }
        assert!(dot(&q.w, &unit(w)) > 1.0 - 1e-12);
        // margin exactly 1 on the ball: <w, mu> - r |w| = 1
        assert!((dot(w, &p.mu) - p.r * norm(w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn robustness_examples() {
        let p = BallProblem::with_default_mu(0.3).unwrap();
        assert!((robustness(&p.mu, &p).unwrap() - 0.7).abs() < 1e-15);
        let perp = [p.mu[1], -p.mu[0], 0.0];
        assert!((robustness(&perp, &p).unwrap() + 0.3).abs() < 1e-15);
        assert!(robustness(&[0.0; 3], &p).is_err());
    }

    #[test]
    fn surface_samples_and_determinism() {
        let p = BallProblem::with_default_mu(0.6).unwrap();
        let a = sample_balls(&p, 7);
        let b = sample_balls(&p, 7);
        assert_eq!(a, b);
        let y = a.binary_labels().unwrap();
        for i in 0..a.n() {
            let c: Vec<f64> = p.mu.iter().map(|m| y[i] * m).collect();
            let dist = norm(&crate::linalg::sub(a.input(i), &c));
            assert!((dist - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn point_seeds_are_stable() {
        assert_eq!(point_seed(3, 5), point_seed(3, 5));
        assert_ne!(point_seed(3, 5), point_seed(3, 6));
    }
}
