//! Independent reference computations checked against the library.

use quasimargin::flow::{evaluate, loss, loss_gradient, LossKind};
use quasimargin::geometry::normalize;
use quasimargin::kkt::{solve_max_margin_linear, MaxMarginOptions};
use quasimargin::linalg::{angle_deg, dot, norm};
use quasimargin::quasimodel::{ClassificationDataset, LambdaSpec, Model, ModelKind, ParamVec};
use quasimargin::twoballs::{analytic_solution, robustness, BallProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain bisection for `sum lambda theta^2 z^lambda = 1` in `z`.
fn bisect_z(lambdas: &[f64], theta: &[f64]) -> f64 {
    let g = |z: f64| lambdas.iter().zip(theta).map(|(l, t)| l * t * t * z.powf(*l)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (1e-30, 1.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn normalization_matches_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let m = rng.random_range(1..6);
        let lambdas: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.5)).collect();
        let theta: Vec<f64> = (0..m).map(|_| rng.random_range(-4.0..4.0)).collect();
        let z = bisect_z(&lambdas, &theta);
        let tau = -0.5 * z.ln();
        let hat: Vec<f64> = lambdas
            .iter()
            .zip(&theta)
            .map(|(l, t)| z.powf(l / 2.0) * t)
            .collect();
        let np = normalize(&LambdaSpec::new(lambdas).unwrap(), &ParamVec::flat(theta)).unwrap();
        assert!((np.tau - tau).abs() <= 1e-9 * (1.0 + tau.abs()), "{} vs {tau}", np.tau);
        for (a, b) in np.theta_hat.iter().zip(&hat) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}

fn all_models() -> Vec<ModelKind> {
    vec![
        ModelKind::LinearHomogeneous { input_dim: 3 },
        ModelKind::UnbalancedDiagonal { depths: vec![1, 3, 2] },
        ModelKind::TwoLayerReluBias { width: 5, input_dim: 3 },
        ModelKind::NormalizedLastLayer {
            classes: 3,
            feature_dim: 4,
            samples: 3,
        },
        ModelKind::ResidualRelu { dim: 3 },
    ]
}

#[test]
fn model_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in all_models() {
        let model = Model::new(kind).unwrap();
        for _ in 0..20 {
            let theta: Vec<f64> = (0..model.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..model.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            if !model.is_differentiable_at(&theta, &x).unwrap() {
                continue;
            }
            let k = model.output_dim();
            for c in 0..k {
                let g = model.gradient(&theta, &x, (k > 1).then_some(c)).unwrap();
                for j in 0..theta.len() {
                    let h = 1e-6 * (1.0 + theta[j].abs());
                    let (mut p, mut q) = (theta.clone(), theta.clone());
                    p[j] += h;
                    q[j] -= h;
                    let fd = (model.forward(&p, &x).unwrap()[c] - model.forward(&q, &x).unwrap()[c]) / (2.0 * h);
                    assert!(
                        (g[j] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "{:?} output {c} param {j}: {} vs {fd}",
                        model.kind(),
                        g[j]
                    );
                }
            }
        }
    }
}

#[test]
fn loss_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let binary = ClassificationDataset::binary(
        (0..6).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0],
    )
    .unwrap();
    let multi = ClassificationDataset::multiclass(
        (0..6)
            .map(|i| (0..6).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
        vec![0, 1, 2, 0, 1, 2],
        3,
    )
    .unwrap();
    let cases = [
        (ModelKind::UnbalancedDiagonal { depths: vec![2, 1] }, &binary, LossKind::Exponential),
        (ModelKind::TwoLayerReluBias { width: 3, input_dim: 2 }, &binary, LossKind::Exponential),
        (
            ModelKind::NormalizedLastLayer {
                classes: 3,
                feature_dim: 4,
                samples: 6,
            },
            &multi,
            LossKind::CrossEntropy,
        ),
    ];
    for (kind, data, lk) in cases {
        let model = Model::new(kind).unwrap();
        let theta = model
            .params((0..model.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let g = loss_gradient(&model, &theta, data, lk).unwrap();
        for j in 0..theta.len() {
            let h = 1e-6;
            let mut p = theta.values().to_vec();
            let mut q = p.clone();
            p[j] += h;
            q[j] -= h;
            let fd = (loss(&model, &model.params(p).unwrap(), data, lk).unwrap()
                - loss(&model, &model.params(q).unwrap(), data, lk).unwrap())
                / (2.0 * h);
            assert!((g[j] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{j}: {} vs {fd}", g[j]);
        }
    }
}

#[test]
fn exponential_loss_by_hand() {
    // f(x) = theta1^2 x1 + theta2 x2 on three points
    let data = ClassificationDataset::binary(
        vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, -1.0]],
        vec![1.0, 1.0, -1.0],
    )
    .unwrap();
    let model = Model::new(ModelKind::UnbalancedDiagonal { depths: vec![2, 1] }).unwrap();
    let theta = model.params(vec![0.5, -0.25, 0.3]).unwrap();
    let w = model.linear_coefficients(&theta).unwrap();
    let q: Vec<f64> = data
        .binary_labels()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, y)| y * dot(&w, data.input(i)))
        .collect();
    let expect = q.iter().map(|v| (-v).exp()).sum::<f64>() / 3.0;
    let ev = evaluate(&model, &theta, &data, LossKind::Exponential, false).unwrap();
    assert!((ev.loss() - expect).abs() < 1e-14);
    assert!((ev.q_min - q.iter().cloned().fold(f64::INFINITY, f64::min)).abs() < 1e-15);
}

/// Maximizes `min_i y_i <u, x_i>` over unit `u` in the plane by a grid and
/// golden-section refinement.
fn max_margin_direction_2d(data: &ClassificationDataset) -> [f64; 2] {
    let y = data.binary_labels().unwrap();
    let score = |phi: f64| {
        let u = [phi.cos(), phi.sin()];
        (0..data.n())
            .map(|i| y[i] * dot(&u, data.input(i)))
            .fold(f64::INFINITY, f64::min)
    };
    let n = 20_000;
    let step = std::f64::consts::TAU / n as f64;
    let best = (0..n).map(|k| k as f64 * step).fold(0.0, |b, p| if score(p) > score(b) { p } else { b });
    let (mut a, mut b) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if score(c) > score(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let phi = 0.5 * (a + b);
    [phi.cos(), phi.sin()]
}

#[test]
fn svm_direction_matches_brute_force() {
    for seed in 0..5 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let data = ClassificationDataset::gaussian_clouds(&[h, h], 0.25, 100, seed).unwrap();
        let svm = solve_max_margin_linear(&data, &[1.0, 1.0], &MaxMarginOptions::default()).unwrap();
        let u = max_margin_direction_2d(&data);
        assert!(svm.kkt_verified);
        assert!(angle_deg(&svm.w, &u).unwrap() < 1e-4, "seed {seed}");
        assert!((svm.min_margin - 1.0).abs() < 1e-6);
    }
}

/// Minimizes `|w_1| / (<w, mu> - r)` over unit `w` with a positive denominator.
fn quasi_hom_brute_force(p: &BallProblem) -> Vec<f64> {
    let obj = |a: f64, b: f64| {
        let w = [a.cos(), a.sin() * b.cos(), a.sin() * b.sin()];
        let den = dot(&w, &p.mu) - p.r;
        if den <= 0.0 {
            f64::INFINITY
        } else {
            w[0].abs() / den
        }
    };
    let (mut a, mut b) = (0.0, 0.0);
    let mut best = f64::INFINITY;
    let n = 400;
    for i in 0..=n {
        for j in 0..=n {
            let (x, y) = (std::f64::consts::PI * i as f64 / n as f64, std::f64::consts::TAU * j as f64 / n as f64);
            let v = obj(x, y);
            if v < best {
                best = v;
                a = x;
                b = y;
            }
        }
    }
    let mut step = std::f64::consts::PI / n as f64;
    while step > 1e-13 {
        let mut moved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let v = obj(a + da, b + db);
            if v < best {
                best = v;
                a += da;
                b += db;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    vec![a.cos(), a.sin() * b.cos(), a.sin() * b.sin()]
}

#[test]
fn two_ball_minimizer_matches_brute_force() {
    for r in [0.55, 0.75, 0.95] {
        let p = BallProblem::with_default_mu(r).unwrap();
        let q = analytic_solution(&p).quasi_hom.unwrap();
        let w = quasi_hom_brute_force(&p);
        assert!(angle_deg(&w, &q.w).unwrap() < 1e-3, "r = {r}");
        assert!((robustness(&w, &p).unwrap() - q.robustness).abs() < 1e-8);
        // margin exactly one on the balls
        let m1 = &q.w_margin_one;
        assert!((dot(m1, &p.mu) - r * norm(m1) - 1.0).abs() < 1e-12);
    }
}
