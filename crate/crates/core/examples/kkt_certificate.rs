//! Approximate KKT certificates along a quasi-homogeneous flow on the
//! two-ball problem at r = 0.75.

use quasimargin::flow::{run_flow_with, FlowConfig, Init, Snapshots};
use quasimargin::kkt::kkt_certificate_at;
use quasimargin::quasimodel::{Model, ModelKind};
use quasimargin::twoballs::{sample_balls, BallProblem};

fn main() -> quasimargin::Result<()> {
    let problem = BallProblem::with_default_mu(0.75)?;
    let data = sample_balls(&problem, 7);
    let model = Model::new(ModelKind::UnbalancedDiagonal { depths: vec![1, 5, 10] })?;
    let cfg = FlowConfig {
        init: Init::Ones,
        record_every: 2000,
        ..FlowConfig::default()
    };
    let mut snaps = Snapshots::default();
    let trace = run_flow_with(&model, &data, &cfg, &mut snaps)?;
    println!("{:?} after {} steps", trace.status, trace.final_record().step);

    for (rec, theta) in trace.records.iter().zip(&snaps.thetas) {
        if !(rec.separable && rec.qmin > 0.0) {
            continue;
        }
        let report = kkt_certificate_at(&model, &model.params(theta.clone())?, &data)?;
        println!("step {:>6}  {report}  sound={}", rec.step, report.is_sound());
    }
    Ok(())
}
