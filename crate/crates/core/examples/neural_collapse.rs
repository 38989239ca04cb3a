//! The simplex optimum for normalized features and a cross-entropy flow that
//! approaches it. Pass a stopping loss to shorten the run, e.g. `1e-60`.

use quasimargin::collapse::{nc_closed_form, run_nc_flow, NcThresholds};
use quasimargin::flow::{FlowConfig, Integrator, LossKind};

fn main() -> quasimargin::Result<()> {
    let stop_loss = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-300);
    let (classes, dim) = (3, 5);

    let cf = nc_closed_form(classes, dim)?;
    println!("closed form objective {:.6}", cf.objective());
    for c in 0..classes {
        println!("  w_{c} = {:.6?}", cf.weight(c));
    }

    let labels: Vec<usize> = (0..30).map(|i| i % classes).collect();
    let cfg = FlowConfig {
        loss_kind: LossKind::CrossEntropy,
        integrator: Integrator::Dopri5,
        stop_loss,
        max_steps: 2_000_000,
        record_every: 5000,
        ..FlowConfig::default()
    };
    let run = run_nc_flow(&labels, classes, dim, &cfg)?;
    for (step, m) in &run.metrics {
        println!(
            "step {step:>7}: center {:.3e} norm_dev {:.3e} spread {:.3e}",
            m.center_norm, m.norm_deviation, m.pairwise_distance_spread
        );
    }
    let m = &run.final_metrics;
    println!(
        "rescaled endpoint: objective {:.6}, scatter {:.2e}, bias {:.2e}, agreement {}, within thresholds {}",
        run.objective,
        m.within_class_scatter,
        m.relative_bias(),
        m.nearest_class_agreement,
        m.within(&NcThresholds::default())
    );
    Ok(())
}
