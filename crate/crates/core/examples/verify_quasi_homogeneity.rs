//! Checks f(x; psi_alpha(theta)) = e^alpha f(x; theta) and the Euler identity
//! for each built-in model at random points.

use quasimargin::quasimodel::{verify_quasi_homogeneity, Model, ModelKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> quasimargin::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kinds = [
        ModelKind::LinearHomogeneous { input_dim: 3 },
        ModelKind::UnbalancedDiagonal { depths: vec![1, 2, 3] },
        ModelKind::TwoLayerReluBias { width: 4, input_dim: 3 },
        ModelKind::NormalizedLastLayer {
            classes: 3,
            feature_dim: 4,
            samples: 5,
        },
        ModelKind::ResidualRelu { dim: 3 },
    ];
    for kind in kinds {
        let model = Model::new(kind)?;
        let theta: Vec<f64> = (0..model.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alphas: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..model.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let r = verify_quasi_homogeneity(&model, &theta, &alphas, &xs, 1e-10)?;
        println!(
            "{:<60} lambda_max {:.3}  scaling err {:.1e}  euler err {:.1e}  passed {}",
            format!("{:?}", model.kind()),
            model.lambda().lambda_max(),
            r.max_scaling_error,
            r.max_euler_error,
            r.passed()
        );
    }
    Ok(())
}
