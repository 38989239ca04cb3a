use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm, sub};
use crate::quasimodel::layer_normalize;

const PROBES: usize = 256;
const PROBE_SEED: u64 = 0x6e63;

/// Distances from the collapsed configuration. All fields are zero (and the
/// agreement is one) at the simplex optimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NcMetrics {
    /// Largest distance between two features of the same class.
    pub within_class_scatter: f64,
    /// `max_c |(|w_c| - (C-1)/C s)| / s` for the least-squares common scale `s`.
    pub norm_deviation: f64,
    /// `(max - min) / mean` over pairwise distances `|w_c - w_c'|`.
    pub pairwise_distance_spread: f64,
    /// `|sum_c w_c| / mean_c |w_c|`.
    pub center_norm: f64,
    pub bias_norm: f64,
    pub mean_weight_norm: f64,
    /// `max_c |hbar_c/|hbar_c| - w_c/|w_c||`.
    pub duality_gap: f64,
    /// Fraction of probe features on which the classifier and the
    /// nearest class mean agree.
    pub nearest_class_agreement: f64,
}

impl NcMetrics {
    pub fn relative_bias(&self) -> f64 {
        self.bias_norm / self.mean_weight_norm
    }

    pub fn within(&self, t: &NcThresholds) -> bool {
        self.within_class_scatter <= t.tol
            && self.norm_deviation <= t.tol
            && self.pairwise_distance_spread <= t.tol
            && self.center_norm <= t.tol
            && self.relative_bias() <= t.tol
            && self.nearest_class_agreement >= t.agreement
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcThresholds {
    pub tol: f64,
    pub agreement: f64,
}

impl Default for NcThresholds {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            agreement: 1.0,
        }
    }
}

/// Collapse metrics for weights `w` (`C x d`), biases `b` and features
/// (`n x d`, row-major).
pub fn nc_metrics(w: &[f64], b: &[f64], features: &[f64], labels: &[usize], classes: usize) -> Result<NcMetrics> {
    check_len("b", classes, b.len())?;
    if classes < 2 || w.len() % classes != 0 {
        return Err(Error::Dimension {
            segment: "w".into(),
            expected: classes,
            got: w.len(),
        });
    }
    let d = w.len() / classes;
    check_len("features", labels.len() * d, features.len())?;
    let row = |m: &[f64], i: usize| m[i * d..(i + 1) * d].to_vec();
    let ws: Vec<Vec<f64>> = (0..classes).map(|c| row(w, c)).collect();

    let mut means = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::InvalidDataset(format!("label {y} outside 0..{classes}")));
        }
        counts[y] += 1;
        crate::linalg::axpy(1.0, &features[i * d..(i + 1) * d], &mut means[y]);
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::InvalidDataset(format!("class {c} has no samples")));
    }
    for (m, &k) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= k as f64);
    }

    let mut scatter = 0.0f64;
    for c in 0..classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                scatter = scatter.max(norm(&sub(&features[i * d..(i + 1) * d], &features[j * d..(j + 1) * d])));
            }
        }
    }

    let norms: Vec<f64> = ws.iter().map(|v| norm(v)).collect();
    let mean_norm = norms.iter().sum::<f64>() / classes as f64;
    let k = (classes as f64 - 1.0) / classes as f64;
    let norm_deviation = if mean_norm > 0.0 {
        let s = mean_norm / k;
        norms.iter().map(|n| (n - k * s).abs() / s).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    let mut dists = Vec::new();
    for c in 0..classes {
        for e in 0..c {
            dists.push(norm(&sub(&ws[c], &ws[e])));
        }
    }
    let dmean = dists.iter().sum::<f64>() / dists.len() as f64;
    let dmax = dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if dmean > 0.0 { (dmax - dmin) / dmean } else { f64::INFINITY };

    let mut total = vec![0.0; d];
    for v in &ws {
        crate::linalg::axpy(1.0, v, &mut total);
    }
    let center = if mean_norm > 0.0 { norm(&total) / mean_norm } else { f64::INFINITY };

    let unit = |v: &[f64]| -> Option<Vec<f64>> {
        let n = norm(v);
        (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
    };
    let mut gap = 0.0f64;
    for c in 0..classes {
        match (unit(&means[c]), unit(&ws[c])) {
            (Some(h), Some(wc)) => gap = gap.max(norm(&sub(&h, &wc))),
            _ => gap = f64::INFINITY,
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut agree = 0usize;
    let mut probes = 0usize;
    while probes < PROBES {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let Ok(h) = layer_normalize(&z) else { continue };
        probes += 1;
        let pred = argmax((0..classes).map(|c| dot(&ws[c], &h) + b[c]));
        let near = argmax((0..classes).map(|c| -norm(&sub(&h, &means[c]))));
        agree += usize::from(pred == near);
    }

    Ok(NcMetrics {
        within_class_scatter: scatter,
        norm_deviation,
        pairwise_distance_spread: spread,
        center_norm: center,
        bias_norm: norm(b),
        mean_weight_norm: mean_norm,
        duality_gap: gap,
        nearest_class_agreement: agree as f64 / PROBES as f64,
    })
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::nc_closed_form;

    fn optimum(classes: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<usize>) {
        let nc = nc_closed_form(classes, classes + 2).unwrap();
        let labels: Vec<usize> = (0..4 * classes).map(|i| i % classes).collect();
        let feats: Vec<f64> = labels.iter().flat_map(|&y| nc.feature(y)).collect();
        (nc.w.clone(), nc.b.clone(), feats, labels)
    }

    #[test]
    fn closed_form_is_collapsed() {
        for classes in [2, 3, 5] {
            let (w, b, h, y) = optimum(classes);
            let m = nc_metrics(&w, &b, &h, &y, classes).unwrap();
            assert!(m.within_class_scatter < 1e-10);
            assert!(m.norm_deviation < 1e-10);
            assert!(m.pairwise_distance_spread < 1e-10);
            assert!(m.center_norm < 1e-10);
            assert!(m.bias_norm < 1e-10);
            assert!(m.duality_gap < 1e-10);
            assert_eq!(m.nearest_class_agreement, 1.0);
            assert!(m.within(&NcThresholds::default()));
        }
    }

    #[test]
    fn relabeling_classes_changes_nothing() {
        let (w, b, h, y) = optimum(3);
        let perm = [2, 0, 1];
        let d = 5;
        let mut wp = vec![0.0; w.len()];
        for c in 0..3 {
            wp[perm[c] * d..(perm[c] + 1) * d].copy_from_slice(&w[c * d..(c + 1) * d]);
        }
        let yp: Vec<usize> = y.iter().map(|&c| perm[c]).collect();
        let a = nc_metrics(&w, &b, &h, &y, 3).unwrap();
        let p = nc_metrics(&wp, &b, &h, &yp, 3).unwrap();
        let fields = |m: &NcMetrics| {
            [
                m.within_class_scatter,
                m.norm_deviation,
                m.pairwise_distance_spread,
                m.center_norm,
                m.bias_norm,
                m.duality_gap,
                m.nearest_class_agreement,
            ]
        };
        for (x, z) in fields(&a).iter().zip(fields(&p)) {
            assert!((x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_class_is_an_error() {
        let (w, b, h, _) = optimum(3);
        let y = vec![0; 12];
        assert!(nc_metrics(&w, &b, &h, &y, 3).is_err());
    }
}
