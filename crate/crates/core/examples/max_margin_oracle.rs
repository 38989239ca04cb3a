//! The hard-margin solver with free coordinates and a bias: only the first
//! coordinate is penalized, so the second is used at no cost.

use quasimargin::kkt::{solve_max_margin_linear, MaxMarginOptions};
use quasimargin::quasimodel::ClassificationDataset;

fn main() -> quasimargin::Result<()> {
    let data = ClassificationDataset::binary(
        vec![vec![2.0, 1.0], vec![1.5, 3.0], vec![-1.0, 0.5], vec![-2.0, -1.0]],
        vec![1.0, 1.0, -1.0, -1.0],
    )?;
    for (weights, bias) in [([1.0, 1.0], false), ([1.0, 1.0], true), ([1.0, 0.0], true)] {
        let opts = MaxMarginOptions {
            fit_bias: bias,
            ..MaxMarginOptions::default()
        };
        match solve_max_margin_linear(&data, &weights, &opts) {
            Ok(s) => println!(
                "p = {weights:?}, bias = {bias}: w = {:.6?} b = {:?} objective = {:.6} kkt = {}",
                s.w, s.b, s.objective, s.kkt_verified
            ),
            Err(e) => println!("p = {weights:?}, bias = {bias}: {e}"),
        }
    }
    Ok(())
}
