use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_pipeline::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbrtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum number of rows in each child of a split.
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub seed: u64,
}

impl Default for GbrtParams {
    fn default() -> Self {
        GbrtParams {
            n_estimators: 225,
            learning_rate: 0.03,
            max_depth: 5,
            min_child_weight: 4.0,
            subsample: 0.7,
            colsample_bytree: 0.7,
            seed: 0,
        }
    }
}

impl GbrtParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.learning_rate) || !unit(self.subsample) || !unit(self.colsample_bytree) {
            return Err(Error::Config(
                "learning_rate, subsample and colsample_bytree must lie in (0, 1]".into(),
            ));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if self.min_child_weight.is_nan() || self.min_child_weight < 0.0 {
            return Err(Error::Config("min_child_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes in creation order; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn eval(&self, row: &dyn Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row(*feature) < *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn d(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(t, *left).max(d(t, *right)),
            }
        }
        d(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbrtModel {
    pub params: GbrtParams,
    pub features: Vec<String>,
    pub base_prediction: f64,
    pub trees: Vec<Tree>,
}

struct NodeStats {
    sum: f64,
    sumsq: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

fn score(sum: f64, count: usize) -> f64 {
    sum * sum / count as f64
}

/// Best split of every active node on one feature by a single pass over
/// the feature's presorted row order.
fn best_splits_for_feature(
    order: &[usize],
    values: &[f64],
    node_of: &[Option<usize>],
    residual: &[f64],
    stats: &[NodeStats],
    min_child: f64,
) -> Vec<Option<Candidate>> {
    let k = stats.len();
    let mut left_sum = vec![0.0; k];
    let mut left_n = vec![0usize; k];
    let mut last = vec![f64::NAN; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    for &r in order {
        let Some(node) = node_of[r] else { continue };
        let v = values[r];
        let (n_l, n) = (left_n[node], stats[node].count);
        if n_l > 0 && v > last[node] && n_l as f64 >= min_child && (n - n_l) as f64 >= min_child {
            let s_l = left_sum[node];
            let s = stats[node].sum;
            let gain = score(s_l, n_l) + score(s - s_l, n - n_l) - score(s, n);
            if best[node].is_none_or(|b| gain > b.gain) {
                let mut threshold = last[node] + (v - last[node]) / 2.0;
                if threshold <= last[node] {
                    threshold = v;
                }
                best[node] = Some(Candidate { gain, threshold });
            }
        }
        left_sum[node] += residual[r];
        left_n[node] += 1;
        last[node] = v;
    }
    best
}

fn fit_tree(
    cols: &[&[f64]],
    orders: &[Vec<usize>],
    features: &[usize],
    rows: &[usize],
    residual: &[f64],
    n_total: usize,
    params: &GbrtParams,
) -> Tree {
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut node_of: Vec<Option<usize>> = vec![None; n_total];
    // tree node id of each active slot
    let mut active: Vec<usize> = vec![0];
    for &r in rows {
        node_of[r] = Some(0);
    }
    let mut stats = vec![NodeStats {
        sum: rows.iter().map(|&r| residual[r]).sum(),
        sumsq: rows.iter().map(|&r| residual[r] * residual[r]).sum(),
        count: rows.len(),
    }];
    for _depth in 0..params.max_depth {
        let per_feature: Vec<Vec<Option<Candidate>>> = features
            .par_iter()
            .map(|&f| best_splits_for_feature(&orders[f], cols[f], &node_of, residual, &stats, params.min_child_weight))
            .collect();
        let mut next_active = Vec::new();
        let mut next_stats = Vec::new();
        let mut slot_split: Vec<Option<(usize, f64, usize, usize)>> = vec![None; active.len()];
        for slot in 0..active.len() {
            let mut choice: Option<(usize, Candidate)> = None;
            for (fi, cands) in per_feature.iter().enumerate() {
                if let Some(c) = cands[slot] {
                    if choice.is_none_or(|(_, b)| c.gain > b.gain) {
                        choice = Some((features[fi], c));
                    }
                }
            }
            let Some((feature, c)) = choice else { continue };
            // rounding noise must not pass as a positive gain
            if c.gain.is_nan() || c.gain <= 1e-12 * stats[slot].sumsq {
                continue;
            }
            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[active[slot]] = Node::Split {
                feature,
                threshold: c.threshold,
                left,
                right: left + 1,
                gain: c.gain,
            };
            let l_slot = next_active.len();
            next_active.push(left);
            next_active.push(left + 1);
            for _ in 0..2 {
                next_stats.push(NodeStats {
                    sum: 0.0,
                    sumsq: 0.0,
                    count: 0,
                });
            }
            slot_split[slot] = Some((feature, c.threshold, l_slot, l_slot + 1));
        }
        if next_active.is_empty() {
            break;
        }
        // rows of unsplit nodes become final; their leaf values come from `rows` below
        let mut final_sum: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for &r in rows {
            let Some(slot) = node_of[r] else { continue };
            match slot_split[slot] {
                Some((f, t, l, rt)) => {
                    let s = if cols[f][r] < t { l } else { rt };
                    node_of[r] = Some(s);
                    next_stats[s].sum += residual[r];
                    next_stats[s].sumsq += residual[r] * residual[r];
                    next_stats[s].count += 1;
                }
                None => {
                    node_of[r] = None;
                    let e = final_sum.entry(active[slot]).or_insert((0.0, 0));
                    e.0 += residual[r];
                    e.1 += 1;
                }
            }
        }
        for (node, (s, n)) in final_sum {
            nodes[node] = Node::Leaf { value: s / n as f64 };
        }
        active = next_active;
        stats = next_stats;
    }
    for (slot, &node) in active.iter().enumerate() {
        let st = &stats[slot];
        let value = if st.count > 0 { st.sum / st.count as f64 } else { 0.0 };
        nodes[node] = Node::Leaf { value };
    }
    Tree { nodes }
}

fn checked_columns<'a>(x: &'a FeatureMatrix, names: &[String]) -> Result<Vec<&'a [f64]>> {
    names
        .iter()
        .map(|n| {
            let col = x
                .column_by_name(n)
                .ok_or_else(|| Error::Validation(format!("model feature {n:?} not in matrix")))?;
            if col.iter().any(|v| v.is_nan()) {
                return Err(Error::Validation(format!(
                    "column {n:?} has missing cells; impute first"
                )));
            }
            Ok(col)
        })
        .collect()
}

/// Gradient-boosted regression trees on squared error.
pub fn fit_gbrt(x: &FeatureMatrix, y: &[f64], params: &GbrtParams) -> Result<GbrtModel> {
    fit_gbrt_traced(x, y, params, |_, _| {})
}

/// As `fit_gbrt`, calling `on_round(round, training_predictions)` after
/// every boosting round.
pub fn fit_gbrt_traced(
    x: &FeatureMatrix,
    y: &[f64],
    params: &GbrtParams,
    mut on_round: impl FnMut(usize, &[f64]),
) -> Result<GbrtModel> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Validation("empty training set".into()));
    }
    if y.len() != n {
        return Err(Error::Validation(format!("{} labels for {n} rows", y.len())));
    }
    let features: Vec<String> = x.column_names().iter().map(|s| s.to_string()).collect();
    let cols = checked_columns(x, &features)?;
    let base = y.iter().sum::<f64>() / n as f64;
    let mut model = GbrtModel {
        params: params.clone(),
        features,
        base_prediction: base,
        trees: Vec::new(),
    };
    if n < 2 || cols.is_empty() {
        return Ok(model);
    }
    let orders: Vec<Vec<usize>> = cols
        .par_iter()
        .map(|c| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
            o
        })
        .collect();
    let n_rows = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((params.colsample_bytree * cols.len() as f64).round() as usize).clamp(1, cols.len());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pred = vec![base; n];
    let mut residual = vec![0.0; n];
    for round in 0..params.n_estimators {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let mut rows: Vec<usize> = if n_rows == n {
            (0..n).collect()
        } else {
            sample(&mut rng, n, n_rows).into_vec()
        };
        rows.sort_unstable();
        let mut feats: Vec<usize> = if n_cols == cols.len() {
            (0..cols.len()).collect()
        } else {
            sample(&mut rng, cols.len(), n_cols).into_vec()
        };
        feats.sort_unstable();
        let tree = fit_tree(&cols, &orders, &feats, &rows, &residual, n, params);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.eval(&|f| cols[f][i]);
        }
        model.trees.push(tree);
        on_round(round, &pred);
    }
    Ok(model)
}

impl GbrtModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let cols = checked_columns(x, &self.features)?;
        Ok((0..x.n_rows())
            .map(|i| {
                let mut p = self.base_prediction;
                for t in &self.trees {
                    p += self.params.learning_rate * t.eval(&|f| cols[f][i]);
                }
                p
            })
            .collect())
    }

    /// Summed split gain per feature, normalized to 1, largest first (ties
    /// by name). Empty when the model never split.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut gain = vec![0.0; self.features.len()];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split { feature, gain: g, .. } = node {
                    gain[*feature] += g;
                }
            }
        }
        let total: f64 = gain.iter().sum();
        if total <= 0.0 {
            return Vec::new();
        }
        let mut out: Vec<(String, f64)> = self
            .features
            .iter()
            .zip(gain)
            .filter(|(_, g)| *g > 0.0)
            .map(|(n, g)| (n.clone(), g / total))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

pub fn predict_gbrt(model: &GbrtModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(x)
}

pub fn feature_importance(model: &GbrtModel) -> Vec<(String, f64)> {
    model.feature_importance()
}
