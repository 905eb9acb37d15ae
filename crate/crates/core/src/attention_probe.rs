//! Attention dumps exported by the neural regressor: validation, word-level
//! aggregation of BPE attention and per-head frequency correlations.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_index::{ExternalFreqTable, FrequencyIndex};
use crate::error::{Error, Result};
use crate::stats::{mean, pearson};
use crate::tokenize::normalize_word;

pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSample {
    pub id: String,
    pub bpe_tokens: Vec<String>,
    /// Word index of each BPE; -1 marks special tokens.
    pub word_alignment: Vec<i64>,
    /// `[layer][head][source][target]`.
    pub attention: Vec<Vec<Vec<Vec<f64>>>>,
    /// Optional surface words; rebuilt from the BPE pieces when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    #[serde(default)]
    pub model: serde_json::Value,
    pub samples: Vec<AttentionSample>,
}

impl AttentionSample {
    pub fn n_layers(&self) -> usize {
        self.attention.len()
    }

    pub fn n_heads(&self) -> usize {
        self.attention.first().map_or(0, Vec::len)
    }

    pub fn n_words(&self) -> usize {
        self.word_alignment
            .iter()
            .filter(|&&w| w >= 0)
            .max()
            .map_or(0, |&w| w as usize + 1)
    }

    fn validate(&self) -> Result<()> {
        let id = &self.id;
        let t = self.bpe_tokens.len();
        if t == 0 {
            return Err(Error::Validation(format!("sample {id}: no BPE tokens")));
        }
        if self.word_alignment.len() != t {
            return Err(Error::Validation(format!(
                "sample {id}: {} alignment entries for {t} tokens",
                self.word_alignment.len()
            )));
        }
        let mut expected = 0i64;
        for &w in &self.word_alignment {
            if w < -1 {
                return Err(Error::Validation(format!("sample {id}: alignment value {w} below -1")));
            }
            if w >= 0 {
                if w == expected {
                    expected += 1;
                } else if w != expected - 1 {
                    return Err(Error::Validation(format!(
                        "sample {id}: word alignment must be non-decreasing and cover every word (saw {w} after {})",
                        expected - 1
                    )));
                }
            }
        }
        if let Some(words) = &self.words {
            if words.len() != self.n_words() {
                return Err(Error::Validation(format!(
                    "sample {id}: {} words listed but alignment has {}",
                    words.len(),
                    self.n_words()
                )));
            }
        }
        let (l, h) = (self.n_layers(), self.n_heads());
        if l == 0 || h == 0 {
            return Err(Error::Validation(format!("sample {id}: empty attention tensor")));
        }
        for (li, layer) in self.attention.iter().enumerate() {
            if layer.len() != h {
                return Err(Error::Validation(format!(
                    "sample {id}: layer {li} has {} heads, expected {h}",
                    layer.len()
                )));
            }
            for (hi, m) in layer.iter().enumerate() {
                if m.len() != t {
                    return Err(Error::Validation(format!(
                        "sample {id} layer {li} head {hi}: {} rows, expected {t}",
                        m.len()
                    )));
                }
                for (r, row) in m.iter().enumerate() {
                    if row.len() != t {
                        return Err(Error::Validation(format!(
                            "sample {id} layer {li} head {hi} row {r}: {} columns, expected {t}",
                            row.len()
                        )));
                    }
                    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(Error::Validation(format!(
                            "sample {id} layer {li} head {hi} row {r}: weights must be finite and non-negative"
                        )));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(Error::Validation(format!(
                            "sample {id} layer {li} head {hi} row {r}: attention sums to {s}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Surface words, from `words` or by joining each word's BPE pieces
    /// with common subword markers removed.
    pub fn word_strings(&self) -> Vec<String> {
        if let Some(w) = &self.words {
            return w.clone();
        }
        let mut out = vec![String::new(); self.n_words()];
        for (tok, &w) in self.bpe_tokens.iter().zip(&self.word_alignment) {
            if w >= 0 {
                let piece = tok
                    .strip_prefix("##")
                    .or_else(|| tok.strip_prefix('\u{0120}'))
                    .or_else(|| tok.strip_prefix('\u{2581}'))
                    .unwrap_or(tok);
                out[w as usize].push_str(piece);
            }
        }
        out
    }

    fn matrix(&self, layer: usize, head: usize) -> Result<&Vec<Vec<f64>>> {
        self.attention.get(layer).and_then(|l| l.get(head)).ok_or_else(|| {
            Error::Validation(format!(
                "sample {}: no layer {layer} head {head} ({} x {})",
                self.id,
                self.n_layers(),
                self.n_heads()
            ))
        })
    }
}

impl AttentionDump {
    /// Shape and row-sum checks on every sample; all samples must share the
    /// same layer and head counts.
    pub fn validate(&self) -> Result<()> {
        let mut shape = None;
        for s in &self.samples {
            s.validate()?;
            let sh = (s.n_layers(), s.n_heads());
            if *shape.get_or_insert(sh) != sh {
                return Err(Error::Validation(format!(
                    "sample {}: {}x{} heads differs from {}x{}",
                    s.id,
                    sh.0,
                    sh.1,
                    shape.unwrap().0,
                    shape.unwrap().1
                )));
            }
        }
        for (key, got) in [("num_layers", shape.map(|s| s.0)), ("num_heads", shape.map(|s| s.1))] {
            if let (Some(declared), Some(got)) = (self.model.get(key).and_then(|v| v.as_u64()), got) {
                if declared as usize != got {
                    return Err(Error::Validation(format!(
                        "model declares {key}={declared} but tensors have {got}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|s| (s.n_layers(), s.n_heads()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: AttentionDump =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("attention dump: {e}")))?;
        dump.validate()?;
        Ok(dump)
    }
}

pub fn load_dump(path: impl AsRef<Path>) -> Result<AttentionDump> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AttentionDump::from_json(&text).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Validates before writing so no partial file is produced.
pub fn write_dump(dump: &AttentionDump, path: impl AsRef<Path>) -> Result<()> {
    dump.validate()?;
    let path = path.as_ref();
    let text = serde_json::to_string(dump).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Mean over source positions.
    #[default]
    Mean,
    /// Sum over source positions.
    Sum,
}

/// Attention received by each word: the attention every non-special source
/// position gives to the word's BPEs, summed over those BPEs and then
/// averaged (or summed) over sources.
pub fn word_received_attention(
    sample: &AttentionSample,
    layer: usize,
    head: usize,
    mode: Aggregation,
) -> Result<Vec<f64>> {
    let m = sample.matrix(layer, head)?;
    let mut received = vec![0.0; sample.n_words()];
    let mut sources = 0usize;
    for (src, row) in m.iter().enumerate() {
        if sample.word_alignment[src] < 0 {
            continue;
        }
        sources += 1;
        for (b, &a) in row.iter().enumerate() {
            let w = sample.word_alignment[b];
            if w >= 0 {
                received[w as usize] += a;
            }
        }
    }
    if mode == Aggregation::Mean && sources > 0 {
        for r in &mut received {
            *r /= sources as f64;
        }
    }
    Ok(received)
}

/// Attention that word positions send to special tokens, averaged over
/// those source positions. Together with the word totals this accounts
/// for the full mean row sum.
pub fn special_token_attention(sample: &AttentionSample, layer: usize, head: usize) -> Result<f64> {
    let m = sample.matrix(layer, head)?;
    let rows: Vec<f64> = m
        .iter()
        .enumerate()
        .filter(|(src, _)| sample.word_alignment[*src] >= 0)
        .map(|(_, row)| {
            row.iter()
                .zip(&sample.word_alignment)
                .filter(|(_, &w)| w < 0)
                .map(|(a, _)| a)
                .sum()
        })
        .collect();
    Ok(mean(&rows).unwrap_or(0.0))
}

/// Largest deviation from 1 of (word totals + special-token share) over
/// every head of every sample.
pub fn conservation_error(dump: &AttentionDump) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in &dump.samples {
        if s.n_words() == 0 {
            continue;
        }
        for l in 0..s.n_layers() {
            for h in 0..s.n_heads() {
                let words: f64 = word_received_attention(s, l, h, Aggregation::Mean)?.iter().sum();
                let special = special_token_attention(s, l, h)?;
                worst = worst.max((words + special - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

/// Per-word corpus frequency.
pub trait WordFrequency: Sync {
    fn frequency(&self, word: &str) -> f64;
}

impl WordFrequency for FrequencyIndex {
    fn frequency(&self, word: &str) -> f64 {
        normalize_word(word).map_or(0.0, |w| self.unigram(&w) as f64)
    }
}

/// One numeric field of an external table, looked up exact-case first.
pub struct TableFrequency<'a> {
    pub table: &'a ExternalFreqTable,
    pub field: usize,
}

impl WordFrequency for TableFrequency<'_> {
    fn frequency(&self, word: &str) -> f64 {
        self.table
            .lookup_cased(word)
            .and_then(|(row, _)| row.get(self.field).copied())
            .unwrap_or(0.0)
    }
}

impl WordFrequency for std::collections::HashMap<String, f64> {
    fn frequency(&self, word: &str) -> f64 {
        self.get(word).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
    /// Correlate against ln(1 + frequency) instead of the raw count.
    pub log_frequency: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            n_samples: 100,
            seed: 0,
            aggregation: Aggregation::Mean,
            log_frequency: true,
        }
    }
}

/// Layers x heads grid of mean per-sample Pearson correlations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadCorrelationGrid {
    pub layers: usize,
    pub heads: usize,
    pub cells: Vec<Vec<Option<f64>>>,
    /// Ids of the samples drawn, in dump order.
    pub samples: Vec<String>,
}

impl HeadCorrelationGrid {
    pub fn get(&self, layer: usize, head: usize) -> Option<f64> {
        self.cells.get(layer).and_then(|r| r.get(head)).copied().flatten()
    }

    /// One line per layer, one column per head; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.cells {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// For every head: Pearson between word frequency and received attention
/// within each sampled sentence, averaged over sentences. Sentences with
/// fewer than three words or an undefined correlation are skipped.
pub fn head_frequency_correlation(
    dumps: &[AttentionDump],
    freq: &dyn WordFrequency,
    config: &ProbeConfig,
) -> Result<HeadCorrelationGrid> {
    let all: Vec<&AttentionSample> = dumps.iter().flat_map(|d| d.samples.iter()).collect();
    let Some(first) = all.first() else {
        return Err(Error::Validation("no attention samples".into()));
    };
    let (layers, heads) = (first.n_layers(), first.n_heads());
    if let Some(bad) = all.iter().find(|s| (s.n_layers(), s.n_heads()) != (layers, heads)) {
        return Err(Error::Validation(format!(
            "sample {} has a different head layout",
            bad.id
        )));
    }
    let mut picked: Vec<usize> = if config.n_samples >= all.len() {
        (0..all.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        sample(&mut rng, all.len(), config.n_samples).into_vec()
    };
    picked.sort_unstable();
    let chosen: Vec<&AttentionSample> = picked.iter().map(|&i| all[i]).collect();
    let freqs: Vec<Vec<f64>> = chosen
        .iter()
        .map(|s| {
            s.word_strings()
                .iter()
                .map(|w| {
                    let f = freq.frequency(w);
                    if config.log_frequency {
                        f.ln_1p()
                    } else {
                        f
                    }
                })
                .collect()
        })
        .collect();
    let cells = (0..layers)
        .into_par_iter()
        .map(|l| {
            (0..heads)
                .map(|h| {
                    let mut rs = Vec::new();
                    for (s, f) in chosen.iter().zip(&freqs) {
                        if s.n_words() < 3 {
                            continue;
                        }
                        let received = word_received_attention(s, l, h, config.aggregation)?;
                        if let Some(r) = pearson(f, &received) {
                            rs.push(r);
                        }
                    }
                    Ok(mean(&rs).map(|m| m.clamp(-1.0, 1.0)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeadCorrelationGrid {
        layers,
        heads,
        cells,
        samples: chosen.iter().map(|s| s.id.clone()).collect(),
    })
}

fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `head_correlation.csv` and the BPE x BPE attention matrix of
/// `sample` at (layer, head), both 0-based. Returns the written paths.
pub fn export_figures(
    grid: &HeadCorrelationGrid,
    sample: &AttentionSample,
    layer: usize,
    head: usize,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    if layer >= grid.layers || head >= grid.heads {
        return Err(Error::Validation(format!(
            "layer {layer} head {head} outside the {}x{} grid",
            grid.layers, grid.heads
        )));
    }
    let m = sample.matrix(layer, head)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let grid_path = out_dir.join("head_correlation.csv");
    fs::write(&grid_path, grid.to_csv()).map_err(|e| Error::io(&grid_path, e))?;
    let heat_path = out_dir.join(format!("heatmap_{}_l{layer}_h{head}.csv", file_safe(&sample.id)));
    fs::write(&heat_path, matrix_csv(m)).map_err(|e| Error::io(&heat_path, e))?;
    let tok_path = out_dir.join(format!("heatmap_{}_tokens.txt", file_safe(&sample.id)));
    fs::write(&tok_path, sample.bpe_tokens.join("\n") + "\n").map_err(|e| Error::io(&tok_path, e))?;
    Ok(vec![grid_path, heat_path, tok_path])
}
