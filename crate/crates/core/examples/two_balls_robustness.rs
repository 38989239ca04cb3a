//! Robustness of the two-ball problem: closed forms across radii and a few
//! trained classifiers next to them.
//!
//!     cargo run --release --example two_balls_robustness -- 0.6 0.75 0.9

use quasimargin::flow::{FlowConfig, Init, Integrator};
use quasimargin::twoballs::{analytic_solution, radius_sweep, BallProblem, SweepModel};

fn main() -> quasimargin::Result<()> {
    let mut radii: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if radii.is_empty() {
        radii = vec![0.6, 0.75, 0.9];
    }
    let template = BallProblem::with_default_mu(0.5)?;
    println!("rho_mu = {:.6}", template.rho_mu);

    println!("{:>6} {:>10} {:>10}", "r", "l_hom", "l_qh");
    for k in 1..10 {
        let p = template.with_radius(k as f64 / 10.0)?;
        let a = analytic_solution(&p);
        let qh = a.quasi_hom.map(|q| format!("{:10.6}", q.robustness)).unwrap_or_else(|_| "       n/a".into());
        println!("{:6.2} {:10.6} {qh}", p.r, a.l_hom);
    }

    let cfg = FlowConfig {
        integrator: Integrator::Dopri5,
        init: Init::Ones,
        ..FlowConfig::default()
    };
    let model = SweepModel::QuasiHom { depths: vec![1, 5, 10] };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    for row in radius_sweep(&template, &radii, &model, &cfg, 0, jobs)? {
        println!(
            "r = {:.2}: trained {:.4} vs closed form {:.4}, |w| = {:.3?}",
            row.r,
            row.robustness,
            row.robustness_analytic_qh.unwrap_or(f64::NAN),
            row.w.iter().map(|v| v.abs()).collect::<Vec<_>>()
        );
    }
    Ok(())
}
