//! Prediction sets, ensembling rules, correlation metrics and evaluation
//! reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::complex_data::{bin_complexity, Corpus, Sample};
use crate::error::{Error, Result};
use crate::stats::{pearson, spearman};

/// Predictions keyed by sample id, in insertion order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub label: String,
    values: IndexMap<String, f64>,
}

impl PredictionSet {
    pub fn new(label: impl Into<String>) -> Self {
        PredictionSet {
            label: label.into(),
            values: IndexMap::new(),
        }
    }

    pub fn from_pairs(label: impl Into<String>, pairs: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut set = PredictionSet::new(label);
        for (id, v) in pairs {
            set.insert(id, v)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, id: String, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Validation(format!("prediction for {id} is not finite")));
        }
        if self.values.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate id {id} in {}", self.label)));
        }
        self.values.insert(id, value);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Clamp every prediction to [0, 1].
    pub fn clipped(mut self) -> Self {
        for v in self.values.values_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// "id<TAB>prediction" lines with a header.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "id\tprediction")?;
        for (id, v) in &self.values {
            writeln!(w, "{id}\t{v}")?;
        }
        Ok(())
    }

    /// Reads "id<TAB>prediction"; a first line whose second field is not a
    /// number is taken as a header.
    pub fn read_tsv(r: impl BufRead, label: &str, origin: &str) -> Result<Self> {
        let mut set = PredictionSet::new(label);
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected 2 fields, got {}", fields.len()),
                ));
            }
            let value = match fields[1].trim().parse::<f64>() {
                Ok(v) => v,
                Err(_) if i == 0 => continue,
                Err(_) => return Err(Error::parse(origin, i + 1, format!("bad prediction {:?}", fields[1]))),
            };
            set.insert(fields[0].trim().to_string(), value)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        Ok(set)
    }
}

pub fn write_predictions(set: &PredictionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    set.write_tsv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>, label: &str) -> Result<PredictionSet> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    PredictionSet::read_tsv(BufReader::new(f), label, &path.display().to_string())
}

fn check_same_ids(a: &PredictionSet, b: &PredictionSet) -> Result<()> {
    if a.len() != b.len() || a.ids().any(|id| b.get(id).is_none()) {
        return Err(Error::Validation(format!(
            "prediction sets {} and {} cover different ids",
            a.label, b.label
        )));
    }
    Ok(())
}

/// Keeps `full` except where it exceeds `threshold`, where the reduced
/// model's prediction is used.
pub fn threshold_combine(full: &PredictionSet, reduced: &PredictionSet, threshold: f64) -> Result<PredictionSet> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} not in [0, 1]")));
    }
    check_same_ids(full, reduced)?;
    let mut out = PredictionSet::new("threshold");
    for (id, f) in full.iter() {
        let v = if f > threshold { reduced.get(id).unwrap() } else { f };
        out.insert(id.to_string(), v)?;
    }
    Ok(out)
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(Error::Config("ensemble weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ensemble weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Per-id weighted sum; ids follow the first set's order.
pub fn weighted_average(sets: &[&PredictionSet], weights: &[f64]) -> Result<PredictionSet> {
    if sets.is_empty() || sets.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} prediction sets but {} weights",
            sets.len(),
            weights.len()
        )));
    }
    check_weights(weights)?;
    for s in &sets[1..] {
        check_same_ids(sets[0], s)?;
    }
    let mut out = PredictionSet::new("weighted");
    for id in sets[0].ids() {
        let parts: Vec<f64> = sets.iter().map(|s| s.get(id).unwrap()).collect();
        let v: f64 = parts.iter().zip(weights).map(|(p, w)| p * w).sum();
        let lo = parts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = parts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // rounding must not leave the convex hull
        out.insert(id.to_string(), v.clamp(lo, hi))?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    pub threshold: f64,
    pub single: SingleWeights,
    pub mwe: MweWeights,
    pub clip: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleWeights {
    pub engineered: f64,
    pub neural: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MweWeights {
    pub head: f64,
    pub tail: f64,
    pub neural: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            threshold: 0.59,
            single: SingleWeights {
                engineered: 0.5,
                neural: 0.5,
            },
            mwe: MweWeights {
                head: 0.28,
                tail: 0.17,
                neural: 0.55,
            },
            clip: false,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} not in [0, 1]", self.threshold)));
        }
        check_weights(&[self.single.engineered, self.single.neural])?;
        check_weights(&[self.mwe.head, self.mwe.tail, self.mwe.neural])
    }
}

/// Single-word ensemble: threshold overwrite of the full model by the
/// reduced model, then averaged with the neural predictions when present.
pub fn single_word_pipeline(
    full: &PredictionSet,
    reduced: &PredictionSet,
    neural: Option<&PredictionSet>,
    spec: &EnsembleSpec,
) -> Result<PredictionSet> {
    spec.validate()?;
    let engineered = threshold_combine(full, reduced, spec.threshold)?;
    let out = match neural {
        Some(n) => weighted_average(&[&engineered, n], &[spec.single.engineered, spec.single.neural])?,
        None => {
            log::warn!("no neural predictions; ensemble uses the engineered model only");
            engineered
        }
    };
    Ok(finish(out, "ensemble", spec))
}

/// Multi-word ensemble of head-word, tail-word and neural predictions.
pub fn mwe_pipeline(
    head: &PredictionSet,
    tail: &PredictionSet,
    neural: Option<&PredictionSet>,
    spec: &EnsembleSpec,
) -> Result<PredictionSet> {
    spec.validate()?;
    let w = &spec.mwe;
    let out = match neural {
        Some(n) => weighted_average(&[head, tail, n], &[w.head, w.tail, w.neural])?,
        None => {
            log::warn!("no neural predictions; MWE ensemble renormalizes the head and tail weights");
            let total = w.head + w.tail;
            if total <= 0.0 {
                return Err(Error::Config("head and tail weights are both zero".into()));
            }
            weighted_average(&[head, tail], &[w.head / total, w.tail / total])?
        }
    };
    Ok(finish(out, "ensemble_mwe", spec))
}

fn finish(set: PredictionSet, label: &str, spec: &EnsembleSpec) -> PredictionSet {
    let set = set.relabel(label);
    if spec.clip {
        set.clipped()
    } else {
        set
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub mae: f64,
    pub mse: f64,
}

/// Metrics over the ids present in both `pred` and `truth`.
pub fn correlation_metrics(pred: &PredictionSet, truth: &HashMap<String, f64>) -> Result<Metrics> {
    let (p, t): (Vec<f64>, Vec<f64>) = pred.iter().filter_map(|(id, v)| truth.get(id).map(|&t| (v, t))).unzip();
    metrics_of(&p, &t)
}

fn metrics_of(p: &[f64], t: &[f64]) -> Result<Metrics> {
    if p.len() < 2 {
        return Err(Error::Validation(format!(
            "{} overlapping samples; need at least 2",
            p.len()
        )));
    }
    let n = p.len() as f64;
    Ok(Metrics {
        n: p.len(),
        pearson: pearson(p, t),
        spearman: spearman(p, t),
        mae: p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
        mse: p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub n: usize,
    /// Missing when the group has fewer than two samples.
    pub metrics: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub predictions: String,
    pub overall: Metrics,
    pub per_corpus: Vec<GroupMetrics>,
    pub per_class: Vec<GroupMetrics>,
    pub unmatched_predictions: usize,
}

/// Overall, per-corpus and per-class metrics of `pred` against labeled
/// `samples`.
pub fn evaluation_report(pred: &PredictionSet, samples: &[Sample]) -> Result<EvaluationReport> {
    let mut overall = (Vec::new(), Vec::new());
    let mut by_corpus: BTreeMap<Corpus, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut by_class: BTreeMap<u8, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut matched = 0;
    for s in samples {
        let Some(p) = pred.get(&s.id) else { continue };
        let t = s.label()?;
        matched += 1;
        overall.0.push(p);
        overall.1.push(t);
        let c = by_corpus.entry(s.corpus).or_default();
        c.0.push(p);
        c.1.push(t);
        let k = by_class.entry(bin_complexity(t)?.get()).or_default();
        k.0.push(p);
        k.1.push(t);
    }
    if matched == 0 {
        return Err(Error::Validation(format!(
            "no predictions in {} match a labeled sample",
            pred.label
        )));
    }
    let group = |name: String, (p, t): &(Vec<f64>, Vec<f64>)| GroupMetrics {
        group: name,
        n: p.len(),
        metrics: metrics_of(p, t).ok(),
    };
    Ok(EvaluationReport {
        predictions: pred.label.clone(),
        overall: metrics_of(&overall.0, &overall.1)?,
        per_corpus: by_corpus.iter().map(|(c, v)| group(c.to_string(), v)).collect(),
        per_class: by_class.iter().map(|(c, v)| group(c.to_string(), v)).collect(),
        unmatched_predictions: pred.len() - matched,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

impl EvaluationReport {
    /// Fixed-width text tables.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "predictions: {}", self.predictions);
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>8} {:>8} {:>8} {:>8}",
            "group", "n", "pearson", "spearman", "mae", "mse"
        );
        let row = |s: &mut String, name: &str, n: usize, m: Option<&Metrics>| {
            let _ = match m {
                Some(m) => writeln!(
                    s,
                    "{:<12} {:>6} {:>8} {:>8} {:>8.4} {:>8.4}",
                    name,
                    n,
                    fmt_opt(m.pearson),
                    fmt_opt(m.spearman),
                    m.mae,
                    m.mse
                ),
                None => writeln!(
                    s,
                    "{:<12} {:>6} {:>8} {:>8} {:>8} {:>8}",
                    name, n, "n/a", "n/a", "n/a", "n/a"
                ),
            };
        };
        row(&mut s, "overall", self.overall.n, Some(&self.overall));
        for g in &self.per_corpus {
            row(&mut s, &g.group, g.n, g.metrics.as_ref());
        }
        for g in &self.per_class {
            row(&mut s, &format!("class {}", g.group), g.n, g.metrics.as_ref());
        }
        if self.unmatched_predictions > 0 {
            let _ = writeln!(s, "{} predictions had no labeled sample", self.unmatched_predictions);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex_data::Target;

    fn set(label: &str, vals: &[(&str, f64)]) -> PredictionSet {
        PredictionSet::from_pairs(label, vals.iter().map(|(k, v)| (k.to_string(), *v))).unwrap()
    }

    #[test]
    fn threshold_rule() {
        let full = set("full", &[("a", 0.63), ("b", 0.59), ("c", 0.2)]);
        let reduced = set("reduced", &[("a", 0.70), ("b", 0.9), ("c", 0.1)]);
        let out = threshold_combine(&full, &reduced, 0.59).unwrap();
        assert_eq!(out.get("a"), Some(0.70));
        assert_eq!(out.get("b"), Some(0.59));
        assert_eq!(out.get("c"), Some(0.2));
        let none = threshold_combine(&full, &reduced, 1.0).unwrap();
        assert!(full.iter().all(|(id, v)| none.get(id) == Some(v)));
        assert!(threshold_combine(&full, &set("r", &[("a", 0.1)]), 0.59).is_err());
    }

    #[test]
    fn weighted_rules() {
        let h = set("h", &[("x", 0.4)]);
        let t = set("t", &[("x", 0.5)]);
        let n = set("n", &[("x", 0.6)]);
        assert_eq!(
            weighted_average(&[&h, &t, &n], &[0.28, 0.17, 0.55]).unwrap().get("x"),
            Some(0.527)
        );
        assert_eq!(weighted_average(&[&h], &[1.0]).unwrap(), h.clone().relabel("weighted"));
        let p = 0.3;
        let same: Vec<PredictionSet> = (0..3).map(|i| set(&i.to_string(), &[("x", p)])).collect();
        let refs: Vec<&PredictionSet> = same.iter().collect();
        assert_eq!(weighted_average(&refs, &[0.28, 0.17, 0.55]).unwrap().get("x"), Some(p));
        assert!(weighted_average(&[&h, &t], &[1.0]).is_err());
        assert!(weighted_average(&[&h, &t], &[0.6, 0.6]).is_err());
    }

    #[test]
    fn mwe_pipeline_is_keyed() {
        let spec = EnsembleSpec::default();
        let h = set("h", &[("a", 0.4), ("b", 0.1)]);
        let t = set("t", &[("b", 0.2), ("a", 0.5)]);
        let n = set("n", &[("a", 0.6), ("b", 0.3)]);
        let out = mwe_pipeline(&h, &t, Some(&n), &spec).unwrap();
        assert_eq!(out.get("a"), Some(0.527));
        let neural_only = EnsembleSpec {
            mwe: MweWeights {
                head: 0.0,
                tail: 0.0,
                neural: 1.0,
            },
            ..EnsembleSpec::default()
        };
        let out = mwe_pipeline(&h, &t, Some(&n), &neural_only).unwrap();
        assert!(n.iter().all(|(id, v)| out.get(id) == Some(v)));
    }

    #[test]
    fn single_word_pipeline_and_degradation() {
        let spec = EnsembleSpec::default();
        let full = set("f", &[("a", 0.63)]);
        let reduced = set("r", &[("a", 0.70)]);
        let neural = set("n", &[("a", 0.63)]);
        let out = single_word_pipeline(&full, &reduced, Some(&neural), &spec).unwrap();
        assert_eq!(out.get("a"), Some(0.5 * 0.70 + 0.5 * 0.63));
        let alone = single_word_pipeline(&full, &reduced, None, &spec).unwrap();
        assert_eq!(alone.get("a"), Some(0.70));
    }

    #[test]
    fn metric_examples() {
        let truth: HashMap<String, f64> = [("a", 2.0), ("b", 4.0), ("c", 6.0)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let m = correlation_metrics(&set("p", &[("a", 1.0), ("b", 2.0), ("c", 3.0)]), &truth).unwrap();
        assert_eq!((m.pearson, m.spearman), (Some(1.0), Some(1.0)));
        let rev = correlation_metrics(&set("p", &[("a", 3.0), ("b", 2.0), ("c", 1.0)]), &truth).unwrap();
        assert_eq!(rev.pearson, Some(-1.0));
        let flat = correlation_metrics(&set("p", &[("a", 1.0), ("b", 1.0)]), &truth).unwrap();
        assert_eq!(flat.pearson, None);
        assert!(correlation_metrics(&set("p", &[("z", 1.0)]), &truth).is_err());
    }

    #[test]
    fn tsv_round_trip_and_header_detection() {
        let s = set("p", &[("b", 0.1), ("a", 1.0 / 3.0)]);
        let mut buf = Vec::new();
        s.write_tsv(&mut buf).unwrap();
        let back = PredictionSet::read_tsv(buf.as_slice(), "p", "mem").unwrap();
        assert_eq!(back, s);
        let plain = PredictionSet::read_tsv("x\t0.5\ny\t0.25\n".as_bytes(), "p", "mem").unwrap();
        assert_eq!(plain.len(), 2);
        assert!(PredictionSet::read_tsv("x\t0.5\nx\t0.25\n".as_bytes(), "p", "mem").is_err());
        assert!(PredictionSet::read_tsv("x\t0.5\ny\tfoo\n".as_bytes(), "p", "mem").is_err());
    }

    fn sample(id: &str, corpus: Corpus, label: f64) -> Sample {
        Sample {
            id: id.into(),
            corpus,
            sentence: "s".into(),
            target: Target::Single("s".into()),
            complexity: Some(label),
        }
    }

    #[test]
    fn report_partitions_and_oracle() {
        let samples = vec![
            sample("a", Corpus::Bible, 0.1),
            sample("b", Corpus::Bible, 0.3),
            sample("c", Corpus::Bible, 0.35),
            sample("d", Corpus::Bible, 0.9),
        ];
        let pred =
            PredictionSet::from_pairs("oracle", samples.iter().map(|s| (s.id.clone(), s.complexity.unwrap()))).unwrap();
        let r = evaluation_report(&pred, &samples).unwrap();
        assert_eq!(r.overall.pearson, Some(1.0));
        assert_eq!(r.per_corpus.len(), 1);
        assert_eq!(r.per_class.iter().map(|g| g.n).sum::<usize>(), 4);
        assert!(r.render_text().contains("overall"));
        assert!(evaluation_report(&set("p", &[("zz", 0.1)]), &samples).is_err());
    }
}
