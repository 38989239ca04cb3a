//! Scaling, seminorms and the normalization map for a quasi-homogeneous
//! parameter vector with exponents (1, 1/2, 1/4).

use quasimargin::geometry::{normalize, psi, seminorm_max_sq, seminorm_sq};
use quasimargin::quasimodel::{LambdaSpec, ParamVec};

fn main() -> quasimargin::Result<()> {
    let lambda = LambdaSpec::new(vec![1.0, 0.5, 0.25])?;
    let theta = ParamVec::flat(vec![3.0, -1.0, 0.5]);

    println!("theta         = {:?}", theta.values());
    println!("|theta|_L^2   = {:.6}", seminorm_sq(&lambda, &theta)?);
    println!("|theta|_max^2 = {:.6}", seminorm_max_sq(&lambda, &theta)?);

    let np = normalize(&lambda, &theta)?;
    println!("normalized    = {:?} (tau = {:.6})", np.theta_hat.values(), np.tau);
    println!("|hat|_L^2     = {:.12}", seminorm_sq(&lambda, &np.theta_hat)?);

    // psi_tau maps the representative back to theta
    let back = psi(&lambda, &np.theta_hat, np.tau)?;
    println!("psi_tau(hat)  = {:?}", back.values());

    // scaling along the orbit leaves the representative unchanged
    for alpha in [-3.0, 0.0, 5.0] {
        let moved = normalize(&lambda, &psi(&lambda, &theta, alpha)?)?;
        println!("alpha={alpha:>4}: tau = {:+.6}, hat = {:?}", moved.tau, moved.theta_hat.values());
    }
    Ok(())
}
