//! Exponential-loss flow on two Gaussian clouds: the homogeneous linear model
//! lines up with the hard-margin SVM, the depth-(2, 1) diagonal model does not.

use quasimargin::flow::{run_flow, FlowConfig};
use quasimargin::kkt::{solve_max_margin_linear, MaxMarginOptions};
use quasimargin::linalg::angle_deg;
use quasimargin::quasimodel::{ClassificationDataset, Model, ModelKind};

fn main() -> quasimargin::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let data = ClassificationDataset::gaussian_clouds(&[h, h], 0.25, 100, seed)?;

    let svm = solve_max_margin_linear(&data, &[1.0, 1.0], &MaxMarginOptions::default())?;
    println!(
        "svm: w = {:?}, margin = {:.6}, support = {:?}",
        svm.w, svm.min_margin, svm.support
    );

    let cfg = FlowConfig { seed, ..FlowConfig::default() };
    for kind in [
        ModelKind::LinearHomogeneous { input_dim: 2 },
        ModelKind::UnbalancedDiagonal { depths: vec![2, 1] },
    ] {
        let model = Model::new(kind)?;
        let trace = run_flow(&model, &data, &cfg)?;
        let w = model.linear_coefficients(&trace.final_theta)?;
        let last = trace.final_record();
        let mon = trace.monitors();
        println!(
            "{:?}\n  status {:?} after {} steps, log L = {:.2}\n  w = {:?}\n  angle to svm = {:.3} deg\n  gamma~ = {:.6}, monitors ok = {}",
            model.kind(),
            trace.status,
            last.step,
            last.log_loss,
            w,
            angle_deg(&w, &svm.w).unwrap_or(f64::NAN),
            last.gamma_tilde.unwrap_or(f64::NAN),
            mon.passed()
        );
    }
    Ok(())
}
