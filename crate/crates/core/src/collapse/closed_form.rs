use serde::Serialize;

use crate::error::{Error, Result};

/// An explicit minimizer of `sum_c |w_c|^2 + |b|^2` under unit multiclass
/// margins over layer-normalized features.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NcClosedForm {
    pub classes: usize,
    pub feature_dim: usize,
    /// Row-major `classes x feature_dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl NcClosedForm {
    pub fn weight(&self, c: usize) -> &[f64] {
        &self.w[c * self.feature_dim..(c + 1) * self.feature_dim]
    }

    /// Optimal feature for a point of class `c`: `C/(C-1) w_c`.
    pub fn feature(&self, c: usize) -> Vec<f64> {
        let k = self.classes as f64 / (self.classes as f64 - 1.0);
        self.weight(c).iter().map(|v| k * v).collect()
    }

    /// `sum_c |w_c|^2 + |b|^2`, which is `(C-1)^2 / C` here.
    pub fn objective(&self) -> f64 {
        crate::linalg::norm_sq(&self.w) + crate::linalg::norm_sq(&self.b)
    }

    /// Flat parameters for the normalized last-layer model with these labels.
    pub fn params_for(&self, labels: &[usize]) -> Vec<f64> {
        let mut theta = self.w.clone();
        theta.extend_from_slice(&self.b);
        for &y in labels {
            theta.extend(self.feature(y));
        }
        theta
    }
}

/// Regular simplex of `C` vectors with norm `(C-1)/C`, centered at the
/// origin, inside the zero-sum subspace of `R^d`.
pub fn nc_closed_form(classes: usize, feature_dim: usize) -> Result<NcClosedForm> {
    if classes < 2 {
        return Err(Error::InvalidConfig("need at least two classes".into()));
    }
    if feature_dim < classes {
        return Err(Error::InvalidConfig(format!(
            "feature_dim {feature_dim} < classes {classes}: the simplex does not fit"
        )));
    }
    let c = classes as f64;
    // v_c = e_c - (1/C) sum_{c' < C} e_c' has norm sqrt((C-1)/C)
    let scale = ((c - 1.0) / c).sqrt();
    let mut w = vec![0.0; classes * feature_dim];
    for k in 0..classes {
        for j in 0..classes {
            let v = if j == k { 1.0 - 1.0 / c } else { -1.0 / c };
            w[k * feature_dim + j] = scale * v;
        }
    }
    Ok(NcClosedForm {
        classes,
        feature_dim,
        w,
        b: vec![0.0; classes],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm, norm_sq, sub};

    #[test]
    fn three_classes() {
        let nc = nc_closed_form(3, 5).unwrap();
        for c in 0..3 {
            assert!((norm(nc.weight(c)) - 2.0 / 3.0).abs() < 1e-15);
            assert!(nc.weight(c).iter().sum::<f64>().abs() < 1e-15);
            for k in 0..c {
                assert!((norm_sq(&sub(nc.weight(c), nc.weight(k))) - 4.0 / 3.0).abs() < 1e-15);
            }
        }
        assert!((nc.objective() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_classes_are_antipodal() {
        let nc = nc_closed_form(2, 2).unwrap();
        let a = 0.5f64.sqrt() / 2.0;
        assert!((nc.weight(0)[0] - a).abs() < 1e-15 && (nc.weight(0)[1] + a).abs() < 1e-15);
        assert_eq!(nc.weight(1), &[-nc.weight(0)[0], -nc.weight(0)[1]]);
        assert!((norm(nc.weight(0)) - 0.5).abs() < 1e-15);
        assert!((norm(&sub(nc.weight(0), nc.weight(1))) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_features() {
        assert!(nc_closed_form(4, 3).is_err());
    }
}
