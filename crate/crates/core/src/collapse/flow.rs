use std::io::Write;

use serde::Serialize;

use super::metrics::{nc_metrics, NcMetrics, NcThresholds};
use crate::error::{Error, Result};
use crate::flow::{run_flow_from, DiagnosticsRecord, FlowConfig, FlowObserver, FlowTrace, LossKind};
use crate::quasimodel::{layer_normalize, ClassificationDataset, Labels, Model, ModelKind};

pub const NC_HEADER: [&str; 8] = [
    "step",
    "scatter",
    "norm_dev",
    "dist_spread",
    "center",
    "bias",
    "duality_gap",
    "agreement",
];

#[derive(Clone, Debug, Serialize)]
pub struct NcRun {
    pub trace: FlowTrace,
    /// Metrics at every recorded step.
    pub metrics: Vec<(usize, NcMetrics)>,
    /// Final parameters with `(w, b)` divided by the hard margin.
    pub rescaled_theta: Vec<f64>,
    /// Metrics of the rescaled endpoint.
    pub final_metrics: NcMetrics,
    /// `min_i min_{c != y_i} f_{y_i} - f_c` before rescaling.
    pub hard_margin: f64,
    /// `sum_c |w_c|^2 + |b|^2` after rescaling.
    pub objective: f64,
    /// The endpoint misses the collapse thresholds.
    pub suboptimal: bool,
}

impl NcRun {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(NC_HEADER).map_err(io)?;
        for (step, m) in &self.metrics {
            w.write_record([
                step.to_string(),
                m.within_class_scatter.to_string(),
                m.norm_deviation.to_string(),
                m.pairwise_distance_spread.to_string(),
                m.center_norm.to_string(),
                m.bias_norm.to_string(),
                m.duality_gap.to_string(),
                m.nearest_class_agreement.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

struct Split {
    classes: usize,
    d: usize,
    n: usize,
}

impl Split {
    fn head(&self) -> usize {
        self.classes * self.d + self.classes
    }

    fn metrics(&self, theta: &[f64], labels: &[usize]) -> Result<NcMetrics> {
        let nw = self.classes * self.d;
        nc_metrics(&theta[..nw], &theta[nw..self.head()], &theta[self.head()..], labels, self.classes)
    }

    fn project(&self, theta: &mut [f64]) -> Result<()> {
        let head = self.head();
        for i in 0..self.n {
            let row = &mut theta[head + i * self.d..head + (i + 1) * self.d];
            let p = layer_normalize(row)?;
            row.copy_from_slice(&p);
        }
        Ok(())
    }
}

struct Observer<'a> {
    split: &'a Split,
    labels: &'a [usize],
    metrics: Vec<(usize, NcMetrics)>,
    error: Option<Error>,
}

impl FlowObserver for Observer<'_> {
    fn post_step(&mut self, theta: &mut [f64]) -> Result<()> {
        self.split.project(theta).inspect_err(|e| self.error = Some(e.clone()))
    }

    fn on_record(&mut self, record: &DiagnosticsRecord, theta: &[f64]) -> Result<()> {
        let m = self.split.metrics(theta, self.labels)?;
        self.metrics.push((record.step, m));
        Ok(())
    }
}

/// Cross-entropy flow over `(w, b, h)` with one free feature vector per
/// sample, projected back onto `sum_j h_j = 0, |h| = 1` after every step.
pub fn run_nc_flow(labels: &[usize], classes: usize, feature_dim: usize, config: &FlowConfig) -> Result<NcRun> {
    if config.loss_kind != LossKind::CrossEntropy {
        return Err(Error::InvalidConfig("neural collapse runs use the cross-entropy loss".into()));
    }
    if feature_dim < classes {
        return Err(Error::InvalidConfig(format!(
            "feature_dim {feature_dim} < classes {classes}"
        )));
    }
    if let Some(c) = (0..classes).find(|c| !labels.contains(c)) {
        return Err(Error::InvalidDataset(format!("class {c} has no samples")));
    }
    let n = labels.len();
    let model = Model::new(ModelKind::NormalizedLastLayer {
        classes,
        feature_dim,
        samples: n,
    })?;
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        eye[i * n + i] = 1.0;
    }
    let data = ClassificationDataset::from_flat(
        eye,
        n,
        n,
        Labels::Multiclass {
            labels: labels.to_vec(),
            num_classes: classes,
        },
    )?;
    let split = Split {
        classes,
        d: feature_dim,
        n,
    };
    config.validate()?;
    let mut theta0 = config.initial_params(&model)?;
    let mut values = theta0.values().to_vec();
    split.project(&mut values)?;
    theta0 = model.params(values)?;

    let mut obs = Observer {
        split: &split,
        labels,
        metrics: Vec::new(),
        error: None,
    };
    let trace = run_flow_from(&model, &data, config, theta0, &mut obs)?;
    if let Some(e) = obs.error {
        return Err(e);
    }
    if let crate::flow::FlowStatus::Failed { error } = &trace.status {
        return Err(Error::NonFinite(error.clone()));
    }
    let metrics = obs.metrics;

    let theta = trace.final_theta.values();
    let hard_margin = (0..n)
        .map(|i| {
            let f = model.forward(theta, data.input(i)).expect("shapes checked");
            let y = labels[i];
            (0..classes)
                .filter(|&c| c != y)
                .map(|c| f[y] - f[c])
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    let mut rescaled = theta.to_vec();
    if hard_margin > 0.0 {
        rescaled[..split.head()].iter_mut().for_each(|v| *v /= hard_margin);
    }
    let objective = crate::linalg::norm_sq(&rescaled[..split.head()]);
    let final_metrics = split.metrics(&rescaled, labels)?;
    let suboptimal = !(hard_margin > 0.0) || !final_metrics.within(&NcThresholds::default());
    Ok(NcRun {
        trace,
        metrics,
        rescaled_theta: rescaled,
        final_metrics,
        hard_margin,
        objective,
        suboptimal,
    })
}
