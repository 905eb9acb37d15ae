use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_pipeline::FeatureMatrix;

fn dense_columns<'a>(x: &'a FeatureMatrix, names: &[String]) -> Result<Vec<&'a [f64]>> {
    names
        .iter()
        .map(|n| {
            let c = x
                .column_by_name(n)
                .ok_or_else(|| Error::Validation(format!("model feature {n:?} not in matrix")))?;
            if c.iter().any(|v| v.is_nan()) {
                return Err(Error::Validation(format!(
                    "column {n:?} has missing cells; impute first"
                )));
            }
            Ok(c)
        })
        .collect()
}

/// Least squares with an L2 penalty on the weights (not the intercept).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub features: Vec<String>,
    pub lambda: f64,
    pub intercept: f64,
    pub weights: Vec<f64>,
}

pub fn fit_linear(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<LinearModel> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Config(format!(
            "ridge penalty must be non-negative, got {lambda}"
        )));
    }
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::Validation(format!("{} labels for {n} rows", y.len())));
    }
    let features: Vec<String> = x.column_names().iter().map(|s| s.to_string()).collect();
    let cols = dense_columns(x, &features)?;
    let p = cols.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let xc = DMatrix::from_fn(n, p, |i, j| cols[j][i] - means[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = xc.transpose() * &xc;
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.transpose() * yc;
    let weights = if p == 0 {
        DVector::zeros(0)
    } else {
        let chol = gram.cholesky().ok_or_else(|| {
            Error::Model(if lambda == 0.0 {
                "normal equations are singular (collinear or constant columns); use ridge with a positive penalty"
                    .into()
            } else {
                "normal equations are not positive definite".into()
            })
        })?;
        chol.solve(&rhs)
    };
    let intercept = y_mean - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel {
        features,
        lambda,
        intercept,
        weights: weights.iter().copied().collect(),
    })
}

impl LinearModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let cols = dense_columns(x, &self.features)?;
        Ok((0..x.n_rows())
            .map(|i| self.intercept + self.weights.iter().zip(&cols).map(|(w, c)| w * c[i]).sum::<f64>())
            .collect())
    }
}

/// Mean label of the `k` nearest training rows (Euclidean); distance ties
/// go to the earlier training row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub features: Vec<String>,
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

pub fn fit_knn(x: &FeatureMatrix, y: &[f64], k: usize) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::Config("knn needs k >= 1".into()));
    }
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::Validation(format!("{} labels for {n} rows", y.len())));
    }
    let features: Vec<String> = x.column_names().iter().map(|s| s.to_string()).collect();
    let cols = dense_columns(x, &features)?;
    Ok(KnnModel {
        features,
        k,
        rows: (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect(),
        labels: y.to_vec(),
    })
}

impl KnnModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let cols = dense_columns(x, &self.features)?;
        let k = self.k.min(self.rows.len());
        Ok((0..x.n_rows())
            .map(|i| {
                let q: Vec<f64> = cols.iter().map(|c| c[i]).collect();
                let mut d: Vec<(f64, usize)> = self
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(j, r)| (r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..k].iter().map(|&(_, j)| self.labels[j]).sum::<f64>() / k as f64
            })
            .collect())
    }
}
