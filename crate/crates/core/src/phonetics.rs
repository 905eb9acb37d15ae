//! Character and phoneme transition models.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::FeatureRecord;
use crate::stats::summarize;

pub const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH", "K",
    "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

/// Pronouncing dictionary keyed by lowercase word; variants in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PronDict {
    entries: BTreeMap<String, Vec<Vec<String>>>,
}

impl PronDict {
    pub fn insert(&mut self, word: &str, phones: Vec<String>) -> Result<()> {
        if phones.is_empty() {
            return Err(Error::Validation(format!("empty pronunciation for {word:?}")));
        }
        if let Some(p) = phones.iter().find(|p| !ARPABET.contains(&p.as_str())) {
            return Err(Error::Validation(format!("unknown phoneme {p:?} for {word:?}")));
        }
        self.entries.entry(word.to_lowercase()).or_default().push(phones);
        Ok(())
    }

    pub fn variants(&self, word: &str) -> Option<&[Vec<String>]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    /// First listed pronunciation.
    pub fn first(&self, word: &str) -> Option<&[String]> {
        self.variants(word).and_then(|v| v.first()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse cmudict plain text. Lines with unknown phonemes are skipped with a
/// warning.
pub fn parse_pron_dict(reader: impl BufRead, origin: &str) -> Result<PronDict> {
    let mut dict = PronDict::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with(";;;") {
            continue;
        }
        // some releases carry trailing "# comment" annotations
        let line = line.split(" #").next().unwrap_or(line);
        let mut parts = line.split_whitespace();
        let Some(head) = parts.next() else { continue };
        let word = match head.find('(') {
            Some(p) if head.ends_with(')') => &head[..p],
            _ => head,
        };
        let phones: Vec<String> = parts
            .map(|p| p.trim_end_matches(|c: char| c.is_ascii_digit()).to_string())
            .collect();
        if let Err(e) = dict.insert(word, phones) {
            log::warn!("{origin}:{}: skipped: {e}", i + 1);
        }
    }
    Ok(dict)
}

pub fn load_pron_dict(path: impl AsRef<Path>) -> Result<PronDict> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pron_dict(BufReader::new(f), &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Character,
    Phoneme,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Character => "character",
            UnitKind::Phoneme => "phoneme",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "character" => Some(UnitKind::Character),
            "phoneme" => Some(UnitKind::Phoneme),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    TokenFrequency,
    Type,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::TokenFrequency => "token_frequency",
            Weighting::Type => "type",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "token_frequency" => Some(Weighting::TokenFrequency),
            "type" => Some(Weighting::Type),
            _ => None,
        }
    }
}

/// Row-stochastic unit-to-unit transition probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionModel {
    pub unit_kind: UnitKind,
    pub weighting: Weighting,
    pub source: String,
    alphabet: BTreeSet<String>,
    rows: BTreeMap<String, BTreeMap<String, f64>>,
}

fn units_of(kind: UnitKind, word: &str, pron: Option<&PronDict>) -> Option<Vec<String>> {
    match kind {
        UnitKind::Character => Some(word.to_lowercase().chars().map(String::from).collect()),
        UnitKind::Phoneme => pron?.first(word).map(<[String]>::to_vec),
    }
}

impl TransitionModel {
    /// Estimate P(u→v) from weighted unit bigram counts. For phoneme models
    /// `pron` must be given; words without a pronunciation are skipped.
    pub fn fit<'a>(
        vocab: impl IntoIterator<Item = (&'a str, u64)>,
        unit_kind: UnitKind,
        weighting: Weighting,
        pron: Option<&PronDict>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if unit_kind == UnitKind::Phoneme && pron.is_none() {
            return Err(Error::Config("phoneme model needs a pronouncing dictionary".into()));
        }
        let mut counts: BTreeMap<String, BTreeMap<String, u128>> = BTreeMap::new();
        let mut alphabet = BTreeSet::new();
        let mut seen_words = 0usize;
        for (word, count) in vocab {
            seen_words += 1;
            let w = match weighting {
                Weighting::TokenFrequency => count as u128,
                Weighting::Type => 1,
            };
            let Some(units) = units_of(unit_kind, word, pron) else {
                continue;
            };
            alphabet.extend(units.iter().cloned());
            if w == 0 {
                continue;
            }
            for pair in units.windows(2) {
                *counts
                    .entry(pair[0].clone())
                    .or_default()
                    .entry(pair[1].clone())
                    .or_insert(0) += w;
            }
        }
        if seen_words == 0 {
            return Err(Error::Validation("empty vocabulary".into()));
        }
        let rows = counts
            .into_iter()
            .map(|(u, row)| {
                let total: u128 = row.values().sum();
                let probs = row.into_iter().map(|(v, c)| (v, c as f64 / total as f64)).collect();
                (u, probs)
            })
            .collect();
        Ok(TransitionModel {
            unit_kind,
            weighting,
            source: source.into(),
            alphabet,
            rows,
        })
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    /// Outgoing distribution of `u`, if it was ever seen in non-final position.
    pub fn row(&self, u: &str) -> Option<&BTreeMap<String, f64>> {
        self.rows.get(u)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, f64>)> {
        self.rows.iter().map(|(u, r)| (u.as_str(), r))
    }

    /// `None` when `u` has no outgoing transitions; 0 for an unseen `v`.
    pub fn prob(&self, u: &str, v: &str) -> Option<f64> {
        self.rows.get(u).map(|r| r.get(v).copied().unwrap_or(0.0))
    }

    pub fn write(&self, w: impl Write) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "#lcp-transition-model\t1")?;
        writeln!(w, "#unit_kind\t{}", self.unit_kind.as_str())?;
        writeln!(w, "#weighting\t{}", self.weighting.as_str())?;
        writeln!(w, "#source\t{}", self.source)?;
        let alphabet: Vec<&str> = self.alphabet.iter().map(String::as_str).collect();
        writeln!(w, "#alphabet\t{}", alphabet.join(" "))?;
        for (u, row) in &self.rows {
            for (v, p) in row {
                writeln!(w, "{u}\t{v}\t{p}")?;
            }
        }
        w.flush()
    }

    pub fn read(r: impl BufRead, origin: &str) -> Result<Self> {
        let mut unit_kind = None;
        let mut weighting = None;
        let mut source = String::new();
        let mut alphabet = BTreeSet::new();
        let mut rows: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            let lineno = i + 1;
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta.split_once('\t').unwrap_or((meta, ""));
                match k {
                    "lcp-transition-model" if v != "1" => {
                        return Err(Error::parse(origin, lineno, format!("unsupported version {v}")))
                    }
                    "unit_kind" => unit_kind = UnitKind::parse(v),
                    "weighting" => weighting = Weighting::parse(v),
                    "source" => source = v.to_string(),
                    "alphabet" => alphabet = v.split(' ').filter(|s| !s.is_empty()).map(String::from).collect(),
                    _ => {}
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [u, v, p] = f[..] else {
                return Err(Error::parse(origin, lineno, "expected u<TAB>v<TAB>p"));
            };
            let p: f64 = p
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad probability {p:?}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parse(origin, lineno, format!("probability {p} outside [0,1]")));
            }
            rows.entry(u.to_string()).or_default().insert(v.to_string(), p);
        }
        let unit_kind = unit_kind.ok_or_else(|| Error::Format(format!("{origin}: missing #unit_kind")))?;
        let weighting = weighting.ok_or_else(|| Error::Format(format!("{origin}: missing #weighting")))?;
        Ok(TransitionModel {
            unit_kind,
            weighting,
            source,
            alphabet,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(f).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f), &path.display().to_string())
    }

    /// Looked-up probabilities of each adjacent pair in `units`; a unit
    /// without outgoing transitions contributes 0.
    pub fn bigram_probs(&self, units: &[String]) -> Vec<f64> {
        units
            .windows(2)
            .map(|w| self.prob(&w[0], &w[1]).unwrap_or(0.0))
            .collect()
    }
}

fn push_aggregates(rec: &mut FeatureRecord, prefix: &str, probs: Option<Vec<f64>>) {
    let s = probs.as_deref().and_then(summarize);
    for (i, stat) in ["min", "max", "mean", "std"].iter().enumerate() {
        rec.non_negative(format!("{prefix}_{stat}"), s.map(|s| s[i]));
    }
}

/// Min, max, mean and population std of the target's character and
/// (first-variant) phoneme transition probabilities.
pub fn phonetic_features(
    char_model: &TransitionModel,
    phon_model: &TransitionModel,
    pron: &PronDict,
    target: &str,
) -> FeatureRecord {
    let mut rec = FeatureRecord::new();
    let word = target.trim();
    let chars = units_of(UnitKind::Character, word, None).unwrap_or_default();
    push_aggregates(
        &mut rec,
        "char_transition",
        (chars.len() >= 2).then(|| char_model.bigram_probs(&chars)),
    );
    let phones = pron.first(word).filter(|p| p.len() >= 2);
    push_aggregates(
        &mut rec,
        "phoneme_transition",
        phones.map(|p| phon_model.bigram_probs(p)),
    );
    rec
}
