//! Hard-margin linear classifier with a partially penalized weight vector:
//!
//! minimize (1/2) sum_{j in P} p_j w_j^2  subject to  y_i (<w, x_i> + b) >= 1,
//!
//! where coordinates outside `P` (and the optional bias) are free.
//!
//! Solved in the dual by coordinate ascent on `alpha >= 0`; the free
//! coordinates enter as equality constraints handled with an augmented
//! Lagrangian whose multiplier is the free part of `w`. The support set is
//! then polished by an exact solve of its KKT system.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm, solve_dense};
use crate::quasimodel::ClassificationDataset;

#[derive(Clone, Debug)]
pub struct MaxMarginOptions {
    pub fit_bias: bool,
    pub max_epochs: usize,
    /// Target for the KKT residuals.
    pub tol: f64,
}

impl Default for MaxMarginOptions {
    fn default() -> Self {
        Self {
            fit_bias: false,
            max_epochs: 200_000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxMarginSolution {
    pub w: Vec<f64>,
    pub b: Option<f64>,
    pub alpha: Vec<f64>,
    /// Indices with positive multiplier.
    pub support: Vec<usize>,
    /// `(1/2) sum_P p_j w_j^2`.
    pub objective: f64,
    pub min_margin: f64,
    /// Norm of the gradient of the Lagrangian.
    pub stationarity_residual: f64,
    /// `sum_i alpha_i |y_i f(x_i) - 1|`.
    pub complementarity: f64,
    pub kkt_verified: bool,
    pub epochs: usize,
}

/// `p_weights[j] > 0` penalizes coordinate `j` with weight `p_weights[j]`;
/// zero leaves it free. All ones gives the ordinary hard-margin SVM.
pub fn solve_max_margin_linear(
    data: &ClassificationDataset,
    p_weights: &[f64],
    opts: &MaxMarginOptions,
) -> Result<MaxMarginSolution> {
    let d = data.d();
    check_len("p_weights", d, p_weights.len())?;
    if p_weights.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidConfig("p_weights must be finite and non-negative".into()));
    }
    let y = data
        .binary_labels()
        .ok_or_else(|| Error::InvalidDataset("max-margin solver needs binary labels".into()))?;
    let n = data.n();
    let pen: Vec<usize> = (0..d).filter(|&j| p_weights[j] > 0.0).collect();
    let free: Vec<usize> = (0..d).filter(|&j| p_weights[j] == 0.0).collect();
    if pen.is_empty() {
        return Err(Error::InvalidConfig("at least one coordinate must be penalized".into()));
    }
    let k = free.len() + usize::from(opts.fit_bias);

    // a_i = y_i x_iP / sqrt(p), b_i = y_i (x_iF, 1)
    let mut a = vec![0.0; n * pen.len()];
    let mut b = vec![0.0; n * k];
    for i in 0..n {
        let x = data.input(i);
        for (c, &j) in pen.iter().enumerate() {
            a[i * pen.len() + c] = y[i] * x[j] / p_weights[j].sqrt();
        }
        for (c, &j) in free.iter().enumerate() {
            b[i * k + c] = y[i] * x[j];
        }
        if opts.fit_bias {
            b[i * k + k - 1] = y[i];
        }
    }
    let prob = Dual {
        n,
        dp: pen.len(),
        k,
        a,
        b,
    };
    let (alpha, z, epochs) = prob.coordinate_ascent(opts)?;
    let (alpha, z) = prob.polish(&alpha).unwrap_or((alpha, z));

    // back to the original coordinates
    let u = prob.primal_penalized(&alpha);
    let mut w = vec![0.0; d];
    for (c, &j) in pen.iter().enumerate() {
        w[j] = u[c] / p_weights[j].sqrt();
    }
    for (c, &j) in free.iter().enumerate() {
        w[j] = z[c];
    }
    let bias = opts.fit_bias.then(|| z[k - 1]);
    let margins: Vec<f64> = (0..n)
        .map(|i| y[i] * (dot(&w, data.input(i)) + bias.unwrap_or(0.0)))
        .collect();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let stationarity_residual = norm(&prob.constraint(&alpha));
    let complementarity: f64 = alpha.iter().zip(&margins).map(|(al, m)| al * (m - 1.0).abs()).sum();
    let scale = alpha.iter().sum::<f64>().max(1.0);
    let kkt_verified = min_margin >= 1.0 - opts.tol
        && stationarity_residual <= opts.tol * scale
        && complementarity <= opts.tol * scale;
    let objective = 0.5 * pen.iter().map(|&j| p_weights[j] * w[j] * w[j]).sum::<f64>();
    let support = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    Ok(MaxMarginSolution {
        w,
        b: bias,
        alpha,
        support,
        objective,
        min_margin,
        stationarity_residual,
        complementarity,
        kkt_verified,
        epochs,
    })
}

struct Dual {
    n: usize,
    dp: usize,
    k: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Dual {
    fn ai(&self, i: usize) -> &[f64] {
        &self.a[i * self.dp..(i + 1) * self.dp]
    }

    fn bi(&self, i: usize) -> &[f64] {
        &self.b[i * self.k..(i + 1) * self.k]
    }

    fn primal_penalized(&self, alpha: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.dp];
        for i in 0..self.n {
            crate::linalg::axpy(alpha[i], self.ai(i), &mut u);
        }
        u
    }

    /// `B alpha`, zero at a dual-feasible point.
    fn constraint(&self, alpha: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.k];
        for i in 0..self.n {
            crate::linalg::axpy(alpha[i], self.bi(i), &mut v);
        }
        v
    }

    fn best_margin(&self, alpha: &[f64], z: &[f64]) -> f64 {
        let u = self.primal_penalized(alpha);
        let scale = (crate::linalg::norm_sq(&u) + crate::linalg::norm_sq(z)).sqrt();
        if scale == 0.0 {
            return 0.0;
        }
        (0..self.n)
            .map(|i| (dot(self.ai(i), &u) + dot(self.bi(i), z)) / scale)
            .fold(f64::INFINITY, f64::min)
    }

    fn coordinate_ascent(&self, opts: &MaxMarginOptions) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let (n, k) = (self.n, self.k);
        let na: Vec<f64> = (0..n).map(|i| crate::linalg::norm_sq(self.ai(i))).collect();
        let nb: Vec<f64> = (0..n).map(|i| crate::linalg::norm_sq(self.bi(i))).collect();
        let rho = if k == 0 {
            0.0
        } else {
            let mb = nb.iter().sum::<f64>() / n as f64;
            let ma = na.iter().sum::<f64>() / n as f64;
            if mb > 0.0 { (ma / mb).max(1e-3) } else { 1.0 }
        };
        let q: Vec<f64> = (0..n).map(|i| na[i] + rho * nb[i]).collect();
        // a zero input can never reach margin 1
        if q.contains(&0.0) {
            return Err(Error::NoSeparatingHyperplane { best_margin: 0.0 });
        }
        let mut alpha = vec![0.0; n];
        let mut u = vec![0.0; self.dp];
        let mut v = vec![0.0; k];
        let mut z = vec![0.0; k];
        let mut epochs = 0;
        let inner_tol = opts.tol * 1e-2;
        loop {
            // inner: minimize (1/2)|u|^2 + <z, v> + (rho/2)|v|^2 - sum alpha over alpha >= 0
            let mut inner = 0;
            loop {
                let mut viol = 0.0f64;
                for i in 0..n {
                    let bi = self.bi(i);
                    let mut g = dot(self.ai(i), &u) - 1.0;
                    for c in 0..k {
                        g += bi[c] * (z[c] + rho * v[c]);
                    }
                    let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
                    viol = viol.max(pg.abs());
                    if pg != 0.0 {
                        let new = (alpha[i] - g / q[i]).max(0.0);
                        let delta = new - alpha[i];
                        if delta != 0.0 {
                            alpha[i] = new;
                            crate::linalg::axpy(delta, self.ai(i), &mut u);
                            crate::linalg::axpy(delta, bi, &mut v);
                        }
                    }
                }
                epochs += 1;
                inner += 1;
                let total: f64 = alpha.iter().sum();
                if !(total < 1e12) {
                    return Err(Error::NoSeparatingHyperplane {
                        best_margin: self.best_margin(&alpha, &z),
                    });
                }
                if viol <= inner_tol || epochs >= opts.max_epochs || (k > 0 && inner >= 200) {
                    break;
                }
            }
            if k == 0 {
                break;
            }
            for c in 0..k {
                z[c] += rho * v[c];
            }
            let scale = alpha.iter().sum::<f64>().max(1.0);
            if norm(&v) <= inner_tol * scale && self.max_violation(&alpha, &u, &z) <= opts.tol * 1e-1 {
                break;
            }
            if epochs >= opts.max_epochs {
                break;
            }
        }
        if epochs >= opts.max_epochs && self.best_margin(&alpha, &z) <= 0.0 {
            return Err(Error::NoSeparatingHyperplane {
                best_margin: self.best_margin(&alpha, &z),
            });
        }
        Ok((alpha, z, epochs))
    }

    fn max_violation(&self, alpha: &[f64], u: &[f64], z: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                let g = dot(self.ai(i), u) + dot(self.bi(i), z) - 1.0;
                if alpha[i] == 0.0 { g.min(0.0).abs() } else { g.abs() }
            })
            .fold(0.0, f64::max)
    }

    /// Active-set refinement: solve the equality-constrained KKT system on the
    /// current support exactly, adding violated points and dropping negative
    /// multipliers until consistent.
    fn polish(&self, alpha: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let top = alpha.iter().copied().fold(0.0, f64::max);
        if top == 0.0 {
            return None;
        }
        let mut set: Vec<usize> = (0..self.n).filter(|&i| alpha[i] > 1e-9 * top).collect();
        for _ in 0..4 * self.n.min(200) {
            let s = set.len();
            let dim = s + self.k;
            let mut m = vec![0.0; dim * dim];
            let mut rhs = vec![0.0; dim];
            for (r, &i) in set.iter().enumerate() {
                for (c, &j) in set.iter().enumerate() {
                    m[r * dim + c] = dot(self.ai(i), self.ai(j));
                }
                for c in 0..self.k {
                    m[r * dim + s + c] = self.bi(i)[c];
                    m[(s + c) * dim + r] = self.bi(i)[c];
                }
                rhs[r] = 1.0;
            }
            let sol = solve_dense(m, rhs)?;
            let mut full = vec![0.0; self.n];
            for (r, &i) in set.iter().enumerate() {
                full[i] = sol[r];
            }
            let zz = sol[s..].to_vec();
            if let Some((r, _)) = set
                .iter()
                .enumerate()
                .map(|(r, &i)| (r, full[i]))
                .filter(|(_, v)| *v < 0.0)
                .min_by(|x, y| x.1.total_cmp(&y.1))
            {
                set.remove(r);
                continue;
            }
            let u = self.primal_penalized(&full);
            let worst = (0..self.n)
                .filter(|i| !set.contains(i))
                .map(|i| (i, dot(self.ai(i), &u) + dot(self.bi(i), &zz)))
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match worst {
                Some((i, mg)) if mg < 1.0 - 1e-12 => set.push(i),
                _ => return Some((full, zz)),
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_binding_point() {
        let d = ClassificationDataset::binary(vec![vec![2.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0]).unwrap();
        let s = solve_max_margin_linear(&d, &[1.0, 1.0], &MaxMarginOptions::default()).unwrap();
        assert!((s.w[0] - 1.0).abs() < 1e-12 && s.w[1].abs() < 1e-12, "{:?}", s.w);
        assert!((s.objective - 0.5).abs() < 1e-12);
        assert!(s.kkt_verified);
        assert_eq!(s.support, vec![1]);
    }

    #[test]
    fn symmetric_pair() {
        let x0 = [0.6, -1.2, 2.0];
        let d = ClassificationDataset::binary(
            vec![x0.to_vec(), x0.iter().map(|v| -v).collect()],
            vec![1.0, -1.0],
        )
        .unwrap();
        let s = solve_max_margin_linear(&d, &[1.0; 3], &MaxMarginOptions::default()).unwrap();
        let n2: f64 = x0.iter().map(|v| v * v).sum();
        for j in 0..3 {
            assert!((s.w[j] - x0[j] / n2).abs() < 1e-12);
        }
    }

    #[test]
    fn free_coordinates_and_bias() {
        // separable only through the free second coordinate plus bias
        let d = ClassificationDataset::binary(
            vec![vec![1.0, 2.0], vec![1.0, 3.0], vec![1.0, -1.0], vec![2.0, 0.0]],
            vec![1.0, 1.0, -1.0, -1.0],
        )
        .unwrap();
        let opts = MaxMarginOptions {
            fit_bias: true,
            ..MaxMarginOptions::default()
        };
        let s = solve_max_margin_linear(&d, &[1.0, 0.0], &opts).unwrap();
        assert!(s.kkt_verified, "{s:?}");
        // w1 = 0 is achievable, so the penalized objective vanishes
        assert!(s.objective < 1e-12, "{s:?}");
        assert!(s.min_margin >= 1.0 - 1e-9);
    }

    #[test]
    fn inseparable_data_is_reported() {
        let d = ClassificationDataset::binary(vec![vec![1.0], vec![1.0]], vec![1.0, -1.0]).unwrap();
        let err = solve_max_margin_linear(&d, &[1.0], &MaxMarginOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoSeparatingHyperplane { .. }), "{err:?}");
    }
}
