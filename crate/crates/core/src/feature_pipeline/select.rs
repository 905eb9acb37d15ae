use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::complex_data::bin_complexity;
use crate::error::{Error, Result};

use super::FeatureMatrix;

/// Train-set column means (used for imputation) and population stds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizerState {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn impute(col: &[f64], fill: f64) -> Vec<f64> {
    col.iter().map(|&v| if v.is_nan() { fill } else { v }).collect()
}

fn present_mean(col: &[f64]) -> f64 {
    let (sum, n) = col
        .iter()
        .filter(|v| !v.is_nan())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn fit_standardizer(matrix: &FeatureMatrix) -> StandardizerState {
    let mut state = StandardizerState {
        columns: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
    };
    for (j, meta) in matrix.columns().iter().enumerate() {
        let mean = present_mean(matrix.column(j));
        let filled = impute(matrix.column(j), mean);
        let constant = filled.windows(2).all(|w| w[0] == w[1]);
        let std = if constant || filled.is_empty() {
            0.0
        } else {
            let n = filled.len() as f64;
            (filled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
        };
        state.columns.push(meta.name.clone());
        state.mean.push(mean);
        state.std.push(std);
    }
    state
}

/// Impute with the fitted means and z-score; output has the state's
/// columns in the state's order and no missing cells.
pub fn apply_standardizer(state: &StandardizerState, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut out = FeatureMatrix::new(matrix.ids().to_vec())?;
    out.stamp = matrix.stamp.clone();
    for (k, name) in state.columns.iter().enumerate() {
        let j = matrix
            .column_index(name)
            .ok_or_else(|| Error::Validation(format!("column {name:?} missing at apply time")))?;
        let (m, s) = (state.mean[k], state.std[k]);
        let values = matrix
            .column(j)
            .iter()
            .map(|&v| {
                let v = if v.is_nan() { m } else { v };
                Some(if s > 0.0 { (v - m) / s } else { 0.0 })
            })
            .collect();
        out.push_column(matrix.columns()[j].clone(), values)?;
    }
    Ok(out)
}

/// Kept columns and the reasons others were dropped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub kept: Vec<String>,
    pub mi_scores: Vec<(String, f64)>,
    pub quasi_constant_removed: Vec<String>,
}

fn value_key(v: f64) -> u64 {
    if v.is_nan() {
        f64::NAN.to_bits()
    } else if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Columns whose most frequent value (missing counts as a value) covers at
/// least `threshold` of the rows.
pub fn quasi_constant_filter(matrix: &FeatureMatrix, threshold: f64) -> Result<Vec<String>> {
    if !(threshold > 0.5 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "dominance threshold {threshold} not in (0.5, 1]"
        )));
    }
    let n = matrix.n_rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut dropped = Vec::new();
    for (j, meta) in matrix.columns().iter().enumerate() {
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for &v in matrix.column(j) {
            *counts.entry(value_key(v)).or_insert(0) += 1;
        }
        let top = counts.values().copied().max().unwrap_or(0);
        if top as f64 >= threshold * n as f64 {
            dropped.push(meta.name.clone());
        }
    }
    Ok(dropped)
}

/// Equal-frequency bin of every value: a value's bin is determined by the
/// first sorted position it occupies, so ties share a bin.
fn equal_frequency_bins(values: &[f64], n_bins: usize) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    values
        .iter()
        .map(|v| {
            let first = sorted.partition_point(|x| x.total_cmp(v).is_lt());
            first * n_bins / n
        })
        .collect()
}

/// Plug-in mutual information (nats) between a feature discretized into
/// 10 equal-frequency bins and label classes. Missing cells take the
/// column mean.
pub fn mutual_information(column: &[f64], classes: &[usize]) -> f64 {
    const BINS: usize = 10;
    let n = column.len();
    if n == 0 || column.iter().all(|v| v.is_nan()) {
        return 0.0;
    }
    let filled = impute(column, present_mean(column));
    let bins = equal_frequency_bins(&filled, BINS);
    let n_classes = classes.iter().copied().max().unwrap_or(0) + 1;
    let mut joint = vec![vec![0usize; n_classes]; BINS];
    for (&b, &c) in bins.iter().zip(classes) {
        joint[b][c] += 1;
    }
    let pb: Vec<usize> = joint.iter().map(|r| r.iter().sum()).collect();
    let pc: Vec<usize> = (0..n_classes).map(|c| joint.iter().map(|r| r[c]).sum()).collect();
    let nf = n as f64;
    let mut mi = 0.0;
    for b in 0..BINS {
        for c in 0..n_classes {
            let k = joint[b][c];
            if k > 0 {
                let p = k as f64 / nf;
                mi += p * ((k as f64 * nf) / (pb[b] as f64 * pc[c] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Top-`k` columns by mutual information with the label classes, best
/// first with ties broken by name. When `k` covers every column all are
/// kept in their original order.
pub fn mi_select(matrix: &FeatureMatrix, labels: &[f64], k: usize) -> Result<SelectionState> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if labels.len() != matrix.n_rows() {
        return Err(Error::Validation(format!(
            "{} labels for {} rows",
            labels.len(),
            matrix.n_rows()
        )));
    }
    let classes = labels
        .iter()
        .map(|&l| bin_complexity(l).map(|c| c.get() as usize - 1))
        .collect::<Result<Vec<_>>>()?;
    let mut scores: Vec<(String, f64)> = matrix
        .columns()
        .iter()
        .enumerate()
        .map(|(j, m)| (m.name.clone(), mutual_information(matrix.column(j), &classes)))
        .collect();
    let kept = if k >= scores.len() {
        scores.iter().map(|s| s.0.clone()).collect()
    } else {
        let mut ranked = scores.clone();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.into_iter().take(k).map(|s| s.0).collect()
    };
    scores.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(SelectionState {
        kept,
        mi_scores: scores,
        quasi_constant_removed: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub quasi_constant_threshold: f64,
    pub mi_k: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            quasi_constant_threshold: 0.99,
            mi_k: 300,
        }
    }
}

/// Fitted selection and standardization, applied in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub selection: SelectionState,
    pub standardizer: StandardizerState,
}

impl Preprocessor {
    /// Drops quasi-constant columns, keeps the top-k by mutual information
    /// and fits the standardizer on what remains; train data only.
    pub fn fit(matrix: &FeatureMatrix, labels: &[f64], config: &PreprocessConfig) -> Result<Self> {
        let removed = quasi_constant_filter(matrix, config.quasi_constant_threshold)?;
        let survivors: Vec<String> = matrix
            .column_names()
            .into_iter()
            .filter(|n| !removed.iter().any(|r| r == n))
            .map(str::to_string)
            .collect();
        let reduced = matrix.select(&survivors)?;
        let mut selection = mi_select(&reduced, labels, config.mi_k)?;
        selection.quasi_constant_removed = removed;
        let standardizer = fit_standardizer(&reduced.select(&selection.kept)?);
        Ok(Preprocessor {
            selection,
            standardizer,
        })
    }

    pub fn transform(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        apply_standardizer(&self.standardizer, matrix)
    }
}
