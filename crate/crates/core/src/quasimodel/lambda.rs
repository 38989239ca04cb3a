use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal scaling exponents of a quasi-homogeneous parameterization.
///
/// Stores the exponents together with the derived index sets: the
/// highest-rate coordinates (those with `lambda == lambda_max`) and the
/// coordinates with a positive exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaSpec {
    lambdas: Vec<f64>,
    lambda_max: f64,
    max_index_set: Vec<usize>,
    positive_index_set: Vec<usize>,
}

impl LambdaSpec {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidLambda("no exponents given".into()));
        }
        if let Some((i, l)) = lambdas
            .iter()
            .enumerate()
            .find(|(_, l)| !l.is_finite() || **l < 0.0)
        {
            return Err(Error::InvalidLambda(format!(
                "lambda[{i}] = {l} must be finite and non-negative"
            )));
        }
        let lambda_max = lambdas.iter().copied().fold(0.0, f64::max);
        if lambda_max <= 0.0 {
            return Err(Error::InvalidLambda(
                "at least one exponent must be positive".into(),
            ));
        }
        let max_index_set = (0..lambdas.len())
            .filter(|&i| lambdas[i] == lambda_max)
            .collect();
        let positive_index_set = (0..lambdas.len()).filter(|&i| lambdas[i] > 0.0).collect();
        Ok(Self {
            lambdas,
            lambda_max,
            max_index_set,
            positive_index_set,
        })
    }

    /// All exponents equal to one: the positively homogeneous case.
    pub fn homogeneous(m: usize) -> Result<Self> {
        Self::new(vec![1.0; m])
    }

    /// Builds a spec from a square matrix, which must be diagonal.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let mut diag = Vec::with_capacity(m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidLambda(format!(
                    "row {i} has length {}, expected {m}",
                    row.len()
                )));
            }
            for (j, v) in row.iter().enumerate() {
                if i != j && *v != 0.0 {
                    return Err(Error::InvalidLambda(format!(
                        "non-diagonal entry ({i}, {j}) = {v}; only diagonal scalings are supported"
                    )));
                }
            }
            diag.push(row[i]);
        }
        Self::new(diag)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn max_index_set(&self) -> &[usize] {
        &self.max_index_set
    }

    pub fn positive_index_set(&self) -> &[usize] {
        &self.positive_index_set
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn is_max(&self, i: usize) -> bool {
        self.lambdas[i] == self.lambda_max
    }

    /// True when every exponent equals `lambda_max`.
    pub fn is_homogeneous(&self) -> bool {
        self.max_index_set.len() == self.lambdas.len()
    }
}

impl TryFrom<Vec<f64>> for LambdaSpec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LambdaSpec> for Vec<f64> {
    fn from(l: LambdaSpec) -> Self {
        l.lambdas
    }
}
