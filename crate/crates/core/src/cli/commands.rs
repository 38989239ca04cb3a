use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{KktProbeConfig, LogisticConfig, NcConfig, SweepConfig, VerifyConfig};
use crate::collapse::{run_nc_flow, NcThresholds};
use crate::error::{Error, Result};
use crate::flow::{run_flow, run_flow_with, FlowConfig, FlowStatus, FlowTrace, Snapshots};
use crate::kkt::{kkt_certificate_at, solve_max_margin_linear, KktReport, MaxMarginOptions};
use crate::linalg::angle_deg;
use crate::quasimodel::{verify_quasi_homogeneity, ClassificationDataset, Model, ModelKind};
use crate::twoballs::{radius_sweep, write_sweep_csv, SweepRow};

/// What a command found. `violations` only matter under `--check`.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: Vec<String>,
    pub violations: Vec<String>,
}

impl Outcome {
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.violations.push(what.into());
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn sibling(out: &Path, suffix: &str) -> std::path::PathBuf {
    out.with_extension(suffix)
}

/// Writes to `out`, or to stdout when there is no path.
fn emit(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush().map_err(|e| Error::Io(e.to_string()))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn write_trace(trace: &FlowTrace, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    trace.write_csv(&mut w)?;
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

fn ensure_ok(trace: &FlowTrace, what: &str) -> Result<()> {
    match &trace.status {
        FlowStatus::Failed { error } => Err(Error::NonFinite(format!("{what}: {error}"))),
        _ => Ok(()),
    }
}

fn with_seed(flow: &FlowConfig, seed: u64) -> FlowConfig {
    FlowConfig { seed, ..flow.clone() }
}

#[derive(Serialize)]
struct Direction {
    run: &'static str,
    w: Vec<f64>,
    angle_deg: f64,
}

pub fn logistic(c: &LogisticConfig, out: Option<&Path>) -> Result<Outcome> {
    let data = ClassificationDataset::gaussian_clouds(&c.mean, c.std, c.per_class, c.seed)?;
    let d = data.d();
    let oracle = solve_max_margin_linear(&data, &vec![1.0; d], &MaxMarginOptions::default())?;
    let flow = with_seed(&c.flow, c.seed);
    let runs = [
        ("hom", ModelKind::LinearHomogeneous { input_dim: d }),
        (
            "quasi_hom",
            ModelKind::UnbalancedDiagonal {
                depths: c.quasi_depths.clone(),
            },
        ),
    ];
    let mut dirs = vec![Direction {
        run: "oracle",
        w: oracle.w.clone(),
        angle_deg: 0.0,
    }];
    let mut outcome = Outcome::default();
    for (name, kind) in runs {
        let model = Model::new(kind)?;
        let trace = run_flow(&model, &data, &flow)?;
        ensure_ok(&trace, name)?;
        if let Some(p) = out {
            write_trace(&trace, &sibling(p, &format!("{name}.trace.csv")))?;
        }
        let w = model.linear_coefficients(&trace.final_theta)?;
        let angle = angle_deg(&w, &oracle.w).ok_or_else(|| Error::Degenerate(format!("{name}: w = 0")))?;
        let mon = trace.monitors();
        outcome.summary.push(format!(
            "{name}: angle_to_oracle={angle:.4} deg status={} monitors={}",
            status_name(&trace.status),
            if mon.passed() { "ok" } else { "violated" }
        ));
        outcome.expect(mon.passed(), format!("{name}: monitor violations"));
        dirs.push(Direction { run: name, w, angle_deg: angle });
    }
    let (hom, qh) = (dirs[1].angle_deg, dirs[2].angle_deg);
    outcome.expect(hom <= c.max_angle_deg, format!("hom angle {hom:.3} > {}", c.max_angle_deg));
    outcome.expect(qh > hom, format!("quasi_hom angle {qh:.3} <= hom angle {hom:.3}"));
    emit(out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec!["run".to_string()];
        header.extend((1..=d).map(|i| format!("w{i}")));
        header.push("angle_deg".into());
        csv.write_record(&header).map_err(io)?;
        for dir in &dirs {
            let mut rec = vec![dir.run.to_string()];
            rec.extend(dir.w.iter().map(|v| v.to_string()));
            rec.push(dir.angle_deg.to_string());
            csv.write_record(&rec).map_err(io)?;
        }
        csv.flush().map_err(|e| Error::Io(e.to_string()))
    })?;
    Ok(outcome)
}

fn status_name(s: &FlowStatus) -> &'static str {
    match s {
        FlowStatus::Converged => "converged",
        FlowStatus::MaxSteps => "max_steps",
        FlowStatus::Stationary => "stationary",
        FlowStatus::Failed { .. } => "failed",
    }
}

pub fn twoballs_sweep(c: &SweepConfig, out: Option<&Path>, jobs: usize) -> Result<Outcome> {
    let radii = c.radii();
    let template = c.problem(radii[0])?;
    let mut rows: Vec<SweepRow> = Vec::new();
    for model in &c.models {
        rows.extend(radius_sweep(&template, &radii, model, &c.flow, c.seed, jobs)?);
    }
    let mut outcome = Outcome::default();
    for r in &rows {
        if !r.flow_ok {
            outcome.violations.push(format!("{} r={}: flow failed", r.model, r.r));
            continue;
        }
        if r.model == "hom" {
            let err = (r.robustness - r.robustness_analytic_hom).abs();
            outcome.expect(err <= 0.03, format!("hom r={}: |l - (1-r)| = {err:.4}", r.r));
        } else if let Some(qh) = r.robustness_analytic_qh.filter(|_| !r.conjecture && r.r <= 0.95) {
            let err = (r.robustness - qh).abs();
            outcome.expect(err <= 0.05, format!("quasi_hom r={}: |l - l_qh| = {err:.4}", r.r));
        }
    }
    let failed = rows.iter().filter(|r| !r.flow_ok).count();
    outcome
        .summary
        .push(format!("{} rows, {failed} failed flows", rows.len()));
    emit(out, |w| write_sweep_csv(&rows, w))?;
    Ok(outcome)
}

#[derive(Serialize)]
struct NcSummary<'a> {
    hard_margin: f64,
    objective: f64,
    objective_closed_form: f64,
    suboptimal: bool,
    final_metrics: &'a crate::collapse::NcMetrics,
    status: &'a FlowStatus,
}

pub fn nc(c: &NcConfig, out: Option<&Path>) -> Result<Outcome> {
    let flow = with_seed(&c.flow, c.seed);
    let run = run_nc_flow(&c.labels(), c.classes, c.feature_dim, &flow)?;
    ensure_ok(&run.trace, "nc")?;
    let target = crate::collapse::nc_closed_form(c.classes, c.feature_dim)?.objective();
    let m = &run.final_metrics;
    let mut outcome = Outcome::default();
    outcome.summary.push(format!(
        "scatter={:.3e} norm_dev={:.3e} spread={:.3e} center={:.3e} bias={:.3e} agreement={} objective={:.6} (closed form {:.6})",
        m.within_class_scatter,
        m.norm_deviation,
        m.pairwise_distance_spread,
        m.center_norm,
        m.relative_bias(),
        m.nearest_class_agreement,
        run.objective,
        target
    ));
    outcome.expect(!run.suboptimal, "endpoint misses the collapse thresholds");
    outcome.expect(
        m.within(&NcThresholds::default()),
        "rescaled endpoint outside the default thresholds",
    );
    if let Some(p) = out {
        write_trace(&run.trace, &sibling(p, "trace.csv"))?;
        let summary = NcSummary {
            hard_margin: run.hard_margin,
            objective: run.objective,
            objective_closed_form: target,
            suboptimal: run.suboptimal,
            final_metrics: m,
            status: &run.trace.status,
        };
        let mut w = create(&sibling(p, "summary.json"))?;
        serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| Error::Io(e.to_string()))?;
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
    }
    emit(out, |w| run.write_csv(w))?;
    Ok(outcome)
}

fn model_name(kind: &ModelKind) -> &'static str {
    match kind {
        ModelKind::LinearHomogeneous { .. } => "linear_homogeneous",
        ModelKind::UnbalancedDiagonal { .. } => "unbalanced_diagonal",
        ModelKind::TwoLayerReluBias { .. } => "two_layer_relu_bias",
        ModelKind::NormalizedLastLayer { .. } => "normalized_last_layer",
        ModelKind::ResidualRelu { .. } => "residual_relu",
    }
}

pub fn verify(c: &VerifyConfig, out: Option<&Path>) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut rows = Vec::new();
    let mut outcome = Outcome::default();
    for kind in &c.models {
        let model = Model::new(kind.clone())?;
        let theta: Vec<f64> = (0..model.param_count())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let alphas: Vec<f64> = (0..c.trials)
            .map(|_| rng.random_range(-c.alpha_range..=c.alpha_range))
            .collect();
        let xs: Vec<Vec<f64>> = (0..c.trials)
            .map(|_| {
                (0..model.input_dim())
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let report = verify_quasi_homogeneity(&model, &theta, &alphas, &xs, c.tol)?;
        let name = model_name(kind);
        outcome.expect(report.passed(), format!("{name}: {} failed checks", report.failures.len()));
        rows.push((name, report));
    }
    emit(out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        csv.write_record([
            "model",
            "scaling_checks",
            "euler_checks",
            "kinks_skipped",
            "max_scaling_error",
            "max_euler_error",
            "failures",
        ])
        .map_err(io)?;
        for (name, r) in &rows {
            csv.write_record([
                name.to_string(),
                r.scaling_checks.to_string(),
                r.euler_checks.to_string(),
                r.kinks_skipped.to_string(),
                r.max_scaling_error.to_string(),
                r.max_euler_error.to_string(),
                r.failures.len().to_string(),
            ])
            .map_err(io)?;
        }
        csv.flush().map_err(|e| Error::Io(e.to_string()))
    })?;
    Ok(outcome)
}

#[derive(Serialize)]
struct Certified<'a> {
    step: usize,
    sound: bool,
    report: &'a KktReport,
}

pub fn kkt_probe(c: &KktProbeConfig, out: Option<&Path>) -> Result<Outcome> {
    let model = Model::new(c.model.clone())?;
    let data = c.dataset.build(c.seed)?;
    let flow = with_seed(&c.flow, c.seed);
    let mut snaps = Snapshots::default();
    let trace = run_flow_with(&model, &data, &flow, &mut snaps)?;
    ensure_ok(&trace, "kkt-probe")?;
    let separated: Vec<usize> = (0..trace.records.len())
        .filter(|&i| trace.records[i].separable && trace.records[i].qmin > 0.0)
        .collect();
    let Some(&first) = separated.first() else {
        return Err(Error::NotSeparating {
            q_min: trace.final_record().qmin,
        });
    };
    let late = &separated[separated.len().saturating_sub(c.points)..];
    let certify = |i: usize| kkt_certificate_at(&model, &model.params(snaps.thetas[i].clone())?, &data);
    let first_report = certify(first)?;
    let mut reports = Vec::with_capacity(late.len());
    for &i in late {
        reports.push((trace.records[i].step, certify(i)?));
    }
    let mut outcome = Outcome::default();
    let (_, last) = reports.last().expect("at least one separated record");
    outcome.summary.push(last.to_string());
    let unsound = reports.iter().filter(|(_, r)| !r.is_sound()).count();
    outcome.expect(unsound == 0, format!("{unsound} of {} certificates unsound", reports.len()));
    outcome.expect(
        last.epsilon < 0.5 * first_report.epsilon,
        format!("eps {:.3e} not below half of {:.3e}", last.epsilon, first_report.epsilon),
    );
    outcome.expect(
        last.delta < 0.5 * first_report.delta,
        format!("delta {:.3e} not below half of {:.3e}", last.delta, first_report.delta),
    );
    if let Some(p) = out {
        write_trace(&trace, &sibling(p, "trace.csv"))?;
    }
    let mut all = vec![Certified {
        step: trace.records[first].step,
        sound: first_report.is_sound(),
        report: &first_report,
    }];
    all.extend(reports.iter().map(|(step, r)| Certified {
        step: *step,
        sound: r.is_sound(),
        report: r,
    }));
    emit(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &all).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w).map_err(|e| Error::Io(e.to_string()))
    })?;
    Ok(outcome)
}
