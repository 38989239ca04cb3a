use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training labels: `±1` for binary tasks or class indices in `0..num_classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    Binary(Vec<f64>),
    Multiclass {
        labels: Vec<usize>,
        num_classes: usize,
    },
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Binary(y) => y.len(),
            Labels::Multiclass { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Inputs `x_i` (row-major `n x d`) with their labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationDataset {
    inputs: Vec<f64>,
    n: usize,
    d: usize,
    labels: Labels,
}

impl ClassificationDataset {
    pub fn binary(inputs: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let (flat, n, d) = flatten(inputs)?;
        Self::from_flat(flat, n, d, Labels::Binary(labels))
    }

    pub fn multiclass(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (flat, n, d) = flatten(inputs)?;
        Self::from_flat(flat, n, d, Labels::Multiclass { labels, num_classes })
    }

    pub fn from_flat(inputs: Vec<f64>, n: usize, d: usize, labels: Labels) -> Result<Self> {
        if inputs.len() != n * d {
            return Err(Error::InvalidDataset(format!(
                "input buffer has {} entries, expected {n} x {d}",
                inputs.len()
            )));
        }
        if labels.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {n} inputs",
                labels.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite input value".into()));
        }
        match &labels {
            Labels::Binary(y) => {
                if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| **v != 1.0 && **v != -1.0) {
                    return Err(Error::InvalidDataset(format!(
                        "binary label {i} is {v}, expected -1 or +1"
                    )));
                }
            }
            Labels::Multiclass { labels, num_classes } => {
                if *num_classes < 2 {
                    return Err(Error::InvalidDataset("need at least two classes".into()));
                }
                if let Some((i, c)) = labels.iter().enumerate().find(|(_, c)| **c >= *num_classes) {
                    return Err(Error::InvalidDataset(format!(
                        "label {i} is {c}, outside 0..{num_classes}"
                    )));
                }
            }
        }
        Ok(Self { inputs, n, d, labels })
    }

    /// Two isotropic Gaussian clouds `N(+mean, std^2 I)` (label +1) and
    /// `N(-mean, std^2 I)` (label -1), `per_class` points each.
    pub fn gaussian_clouds(mean: &[f64], std: f64, per_class: usize, seed: u64) -> Result<Self> {
        if !(std >= 0.0) || per_class == 0 || mean.is_empty() {
            return Err(Error::InvalidDataset(
                "gaussian clouds need std >= 0, a nonempty mean and per_class > 0".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = mean.len();
        let mut inputs = Vec::with_capacity(2 * per_class * d);
        let mut labels = Vec::with_capacity(2 * per_class);
        for sign in [1.0, -1.0] {
            for _ in 0..per_class {
                for m in mean {
                    let z: f64 = rng.sample(StandardNormal);
                    inputs.push(sign * m + std * z);
                }
                labels.push(sign);
            }
        }
        Self::from_flat(inputs, 2 * per_class, d, Labels::Binary(labels))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn is_binary(&self) -> bool {
        matches!(self.labels, Labels::Binary(_))
    }

    /// Number of model outputs the labels call for: 1 for binary tasks.
    pub fn output_arity(&self) -> usize {
        match &self.labels {
            Labels::Binary(_) => 1,
            Labels::Multiclass { num_classes, .. } => *num_classes,
        }
    }

    /// Binary labels, or `None` for a multiclass dataset.
    pub fn binary_labels(&self) -> Option<&[f64]> {
        match &self.labels {
            Labels::Binary(y) => Some(y),
            Labels::Multiclass { .. } => None,
        }
    }
}

fn flatten(rows: Vec<Vec<f64>>) -> Result<(Vec<f64>, usize, usize)> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidDataset("dataset is empty".into()));
    }
    let d = rows[0].len();
    let mut flat = Vec::with_capacity(n * d);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != d {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} features, expected {d}",
                r.len()
            )));
        }
        flat.extend(r);
    }
    Ok((flat, n, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_labels() {
        assert!(ClassificationDataset::binary(vec![vec![1.0]], vec![0.5]).is_err());
        assert!(ClassificationDataset::multiclass(vec![vec![1.0]], vec![3], 3).is_err());
        let ds = ClassificationDataset::multiclass(vec![vec![1.0], vec![2.0]], vec![0, 2], 3).unwrap();
        assert_eq!(ds.output_arity(), 3);
        assert_eq!(ds.input(1), &[2.0]);
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = ClassificationDataset::binary(vec![vec![1.0, 2.0], vec![1.0]], vec![1.0, -1.0]);
        assert!(err.is_err());
    }
}
