//! N-gram frequency and document-frequency indexes over raw corpora, plus the
//! word-frequency feature family built on top of them.

mod bpe;
mod external;
mod features;
mod lemma;
mod remote;

pub use bpe::{BpeCounts, BpeVocabulary};
pub use external::{
    external_frequency_features, load_bnc, load_google_local, load_subtlexus, ExternalFreqTable, FreqSource,
    SUBTLEX_FIELDS,
};
pub use features::{frequency_features, google_ngram_features, FrequencyResources};
pub use lemma::Lemmatizer;
pub(crate) use remote::find_string;
pub use remote::{NgramCountSource, RemoteNgramClient, RemoteNgramConfig};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::{tokenize, TOKENIZER_ID};

pub const MAX_ORDER: usize = 3;
const TEXT_MAGIC: &str = "#lcp-frequency-index";
const BINARY_MAGIC: &[u8; 8] = b"LCPINDEX";
const FORMAT_VERSION: u32 = 1;

/// What counts as one document for document frequencies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocUnit {
    /// Every line is a document.
    #[default]
    Line,
    /// Documents are separated by blank lines.
    Document,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub documents: u64,
    pub skipped_undecodable: u64,
}

/// Unigram/bigram/trigram counts and document frequencies. Absent keys mean
/// zero; stored counts are always at least one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyIndex {
    tokenizer_id: String,
    n_docs: u64,
    n_tokens: u64,
    counts: [HashMap<String, u64>; MAX_ORDER],
    doc_freq: [HashMap<String, u64>; MAX_ORDER],
}

impl Default for FrequencyIndex {
    fn default() -> Self {
        Self::new()
    }
}

fn ngram_key(tokens: &[String]) -> String {
    tokens.join(" ")
}

impl FrequencyIndex {
    pub fn new() -> Self {
        FrequencyIndex {
            tokenizer_id: TOKENIZER_ID.to_string(),
            n_docs: 0,
            n_tokens: 0,
            counts: Default::default(),
            doc_freq: Default::default(),
        }
    }

    /// Index each item of `docs` as one document.
    pub fn from_documents<I, S>(docs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut index = Self::new();
        for d in docs {
            index.add_document(std::iter::once(d.as_ref()));
        }
        index
    }

    /// Add one document made of `lines`. N-grams do not cross line boundaries.
    pub fn add_document<'a>(&mut self, lines: impl IntoIterator<Item = &'a str>) {
        let mut seen: [std::collections::HashSet<String>; MAX_ORDER] = Default::default();
        for line in lines {
            let tokens = tokenize(line);
            self.n_tokens += tokens.len() as u64;
            for order in 1..=MAX_ORDER {
                for window in tokens.windows(order) {
                    let key = ngram_key(window);
                    *self.counts[order - 1].entry(key.clone()).or_insert(0) += 1;
                    seen[order - 1].insert(key);
                }
            }
        }
        for (order, keys) in seen.into_iter().enumerate() {
            for key in keys {
                *self.doc_freq[order].entry(key).or_insert(0) += 1;
            }
        }
        self.n_docs += 1;
    }

    /// Fold `other` into `self`. Both must use the same tokenizer.
    pub fn merge(&mut self, other: FrequencyIndex) -> Result<()> {
        if self.tokenizer_id != other.tokenizer_id {
            return Err(Error::Validation(format!(
                "cannot merge indexes built with tokenizers {} and {}",
                self.tokenizer_id, other.tokenizer_id
            )));
        }
        self.n_docs += other.n_docs;
        self.n_tokens += other.n_tokens;
        for (mine, theirs) in self.counts.iter_mut().zip(other.counts) {
            for (k, v) in theirs {
                *mine.entry(k).or_insert(0) += v;
            }
        }
        for (mine, theirs) in self.doc_freq.iter_mut().zip(other.doc_freq) {
            for (k, v) in theirs {
                *mine.entry(k).or_insert(0) += v;
            }
        }
        Ok(())
    }

    pub fn tokenizer_id(&self) -> &str {
        &self.tokenizer_id
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn n_tokens(&self) -> u64 {
        self.n_tokens
    }

    pub fn is_empty(&self) -> bool {
        self.n_docs == 0 && self.counts.iter().all(HashMap::is_empty)
    }

    /// Count of the n-gram formed by `tokens` (order = `tokens.len()`).
    pub fn count(&self, tokens: &[&str]) -> u64 {
        match tokens.len() {
            1..=MAX_ORDER => self.count_key(tokens.len(), &tokens.join(" ")),
            _ => 0,
        }
    }

    pub fn count_key(&self, order: usize, key: &str) -> u64 {
        self.counts
            .get(order.wrapping_sub(1))
            .and_then(|m| m.get(key))
            .copied()
            .unwrap_or(0)
    }

    pub fn unigram(&self, token: &str) -> u64 {
        self.count_key(1, token)
    }

    pub fn doc_freq(&self, tokens: &[&str]) -> u64 {
        self.doc_freq_key(tokens.len(), &tokens.join(" "))
    }

    pub fn doc_freq_key(&self, order: usize, key: &str) -> u64 {
        self.doc_freq
            .get(order.wrapping_sub(1))
            .and_then(|m| m.get(key))
            .copied()
            .unwrap_or(0)
    }

    /// Smoothed inverse document frequency: `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf_from_df(&self, df: u64) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    pub fn idf(&self, tokens: &[&str]) -> f64 {
        self.idf_from_df(self.doc_freq(tokens))
    }

    pub fn tfidf(&self, tokens: &[&str]) -> f64 {
        self.count(tokens) as f64 * self.idf(tokens)
    }

    /// Iterate over `(ngram, count)` for one order, unordered.
    pub fn ngrams(&self, order: usize) -> impl Iterator<Item = (&str, u64)> {
        self.counts[order - 1].iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts[0].len()
    }

    fn sorted_records(&self) -> Vec<(String, &str, u64)> {
        let mut out = Vec::new();
        for order in 1..=MAX_ORDER {
            for (k, &v) in &self.counts[order - 1] {
                out.push((format!("tf{order}"), k.as_str(), v));
            }
            for (k, &v) in &self.doc_freq[order - 1] {
                out.push((format!("df{order}"), k.as_str(), v));
            }
        }
        out.sort_unstable_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        out
    }

    fn insert_record(&mut self, section: &str, key: &str, value: u64) -> std::result::Result<(), String> {
        let (kind, order) = section.split_at(2);
        let order: usize = order.parse().map_err(|_| format!("bad section {section:?}"))?;
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(format!("bad n-gram order in {section:?}"));
        }
        if value == 0 {
            return Err(format!("zero count stored for {key:?}"));
        }
        let map = match kind {
            "tf" => &mut self.counts[order - 1],
            "df" => &mut self.doc_freq[order - 1],
            _ => return Err(format!("bad section {section:?}")),
        };
        if map.insert(key.to_string(), value).is_some() {
            return Err(format!("duplicate entry {section} {key:?}"));
        }
        Ok(())
    }

    /// Write the sorted text interchange format.
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        let records = self.sorted_records();
        writeln!(w, "{TEXT_MAGIC}\t{FORMAT_VERSION}")?;
        writeln!(w, "#tokenizer\t{}", self.tokenizer_id)?;
        writeln!(w, "#n_docs\t{}", self.n_docs)?;
        writeln!(w, "#n_tokens\t{}", self.n_tokens)?;
        for (section, key, value) in &records {
            writeln!(w, "{section}\t{key}\t{value}")?;
        }
        writeln!(w, "#end\t{}", records.len())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("index truncated before {what}")))?
                .map_err(|e| Error::Format(format!("index unreadable: {e}")))
        };
        let header = next("header")?;
        let version = header
            .strip_prefix(TEXT_MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::Format(format!("not a frequency index: {header:?}")))?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "index format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let mut index = FrequencyIndex::new();
        let meta = |line: String, name: &str| -> Result<String> {
            line.strip_prefix(&format!("#{name}\t"))
                .map(str::to_string)
                .ok_or_else(|| Error::Format(format!("expected #{name}, got {line:?}")))
        };
        index.tokenizer_id = meta(next("tokenizer")?, "tokenizer")?;
        let num = |s: String| s.parse::<u64>().map_err(|e| Error::Format(e.to_string()));
        index.n_docs = num(meta(next("n_docs")?, "n_docs")?)?;
        index.n_tokens = num(meta(next("n_tokens")?, "n_tokens")?)?;

        let mut n_records = 0u64;
        loop {
            let line = next("#end footer")?;
            if let Some(total) = line.strip_prefix("#end\t") {
                if num(total.to_string())? != n_records {
                    return Err(Error::Format("record count mismatch in footer".into()));
                }
                break;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(section), Some(key), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Format(format!("malformed index record {line:?}")));
            };
            let value = num(value.to_string())?;
            index.insert_record(section, key, value).map_err(Error::Format)?;
            n_records += 1;
        }
        Ok(index)
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let payload = BinaryIndex {
            tokenizer_id: self.tokenizer_id.clone(),
            n_docs: self.n_docs,
            n_tokens: self.n_tokens,
            records: self
                .sorted_records()
                .into_iter()
                .map(|(s, k, v)| (s, k.to_string(), v))
                .collect(),
        };
        let body = bincode::serialize(&payload).map_err(|e| Error::Format(e.to_string()))?;
        let io = |e| Error::Format(format!("write failed: {e}"));
        w.write_all(BINARY_MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(body.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&body).map_err(io)
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("index unreadable: {e}")))?;
        if bytes.len() < 20 || &bytes[..8] != BINARY_MAGIC {
            return Err(Error::Format("not a binary frequency index".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "index format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() - 20 != len {
            return Err(Error::Format(format!(
                "binary index truncated: {} of {len} payload bytes",
                bytes.len() - 20
            )));
        }
        let payload: BinaryIndex = bincode::deserialize(&bytes[20..]).map_err(|e| Error::Format(e.to_string()))?;
        let mut index = FrequencyIndex::new();
        index.tokenizer_id = payload.tokenizer_id;
        index.n_docs = payload.n_docs;
        index.n_tokens = payload.n_tokens;
        for (s, k, v) in payload.records {
            index.insert_record(&s, &k, v).map_err(Error::Format)?;
        }
        Ok(index)
    }
}

#[derive(Serialize, Deserialize)]
struct BinaryIndex {
    tokenizer_id: String,
    n_docs: u64,
    n_tokens: u64,
    records: Vec<(String, String, u64)>,
}

fn is_binary_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

/// Persist to `path`; a `.bin` extension selects the binary format.
pub fn persist_index(index: &FrequencyIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    if is_binary_path(path) {
        index.write_binary(&mut w)?;
    } else {
        index.write_text(&mut w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<FrequencyIndex> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_binary_path(path) {
        FrequencyIndex::read_binary(BufReader::new(file))
    } else {
        FrequencyIndex::read_text(BufReader::new(file))
    }
}

/// Split a byte stream into documents. Documents containing invalid UTF-8
/// are dropped and counted.
pub fn read_documents(mut reader: impl BufRead, unit: DocUnit) -> std::io::Result<(Vec<Vec<String>>, u64)> {
    let mut docs = Vec::new();
    let mut skipped = 0u64;
    let mut current: Vec<String> = Vec::new();
    let mut current_bad = false;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        let line = std::str::from_utf8(&buf).map(str::to_string);
        match unit {
            DocUnit::Line => match line {
                Ok(l) => docs.push(vec![l]),
                Err(_) => skipped += 1,
            },
            DocUnit::Document => {
                let blank = line.as_ref().is_ok_and(|l| l.trim().is_empty());
                if blank {
                    flush_document(&mut docs, &mut current, &mut current_bad, &mut skipped);
                } else {
                    match line {
                        Ok(l) => current.push(l),
                        Err(_) => current_bad = true,
                    }
                }
            }
        }
    }
    if unit == DocUnit::Document {
        flush_document(&mut docs, &mut current, &mut current_bad, &mut skipped);
    }
    Ok((docs, skipped))
}

fn flush_document(docs: &mut Vec<Vec<String>>, current: &mut Vec<String>, bad: &mut bool, skipped: &mut u64) {
    if *bad {
        *skipped += 1;
    } else if !current.is_empty() {
        docs.push(std::mem::take(current));
    }
    current.clear();
    *bad = false;
}

/// Build an index from a stream. Documents are indexed in parallel shards
/// and merged.
pub fn build_index(reader: impl BufRead, unit: DocUnit) -> Result<(FrequencyIndex, BuildStats)> {
    let (docs, skipped) = read_documents(reader, unit).map_err(|e| Error::Format(format!("corpus unreadable: {e}")))?;
    if skipped > 0 {
        log::warn!("skipped {skipped} undecodable document(s)");
    }
    let stats = BuildStats {
        documents: docs.len() as u64,
        skipped_undecodable: skipped,
    };
    Ok((index_documents(&docs)?, stats))
}

const SHARD_DOCS: usize = 4096;

fn index_documents(docs: &[Vec<String>]) -> Result<FrequencyIndex> {
    docs.par_chunks(SHARD_DOCS)
        .map(|shard| {
            let mut idx = FrequencyIndex::new();
            for d in shard {
                idx.add_document(d.iter().map(String::as_str));
            }
            Ok(idx)
        })
        .try_reduce(FrequencyIndex::new, |mut a, b| {
            a.merge(b)?;
            Ok(a)
        })
}

/// Build one index over several corpus files.
pub fn build_index_from_files(paths: &[impl AsRef<Path>], unit: DocUnit) -> Result<(FrequencyIndex, BuildStats)> {
    let mut index = FrequencyIndex::new();
    let mut stats = BuildStats::default();
    for p in paths {
        let p = p.as_ref();
        let file = File::open(p).map_err(|e| Error::io(p, e))?;
        let (part, s) = build_index(BufReader::new(file), unit)?;
        index.merge(part)?;
        stats.documents += s.documents;
        stats.skipped_undecodable += s.skipped_undecodable;
    }
    Ok((index, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_docs() -> FrequencyIndex {
        FrequencyIndex::from_documents(["the cat sat", "the cat"])
    }

    #[test]
    fn counts_small_fixture() {
        let idx = two_docs();
        assert_eq!(idx.unigram("the"), 2);
        assert_eq!(idx.unigram("cat"), 2);
        assert_eq!(idx.unigram("sat"), 1);
        assert_eq!(idx.count(&["the", "cat"]), 2);
        assert_eq!(idx.count(&["cat", "sat"]), 1);
        assert_eq!(idx.count(&["the", "cat", "sat"]), 1);
        assert_eq!(idx.doc_freq(&["the"]), 2);
        assert_eq!(idx.doc_freq(&["sat"]), 1);
        assert_eq!(idx.n_docs(), 2);
        assert_eq!(idx.n_tokens(), 5);
    }

    #[test]
    fn empty_index_answers_zero() {
        let (idx, stats) = build_index("".as_bytes(), DocUnit::Line).unwrap();
        assert_eq!(idx.n_docs(), 0);
        assert_eq!(idx.unigram("the"), 0);
        assert_eq!(idx.doc_freq(&["the"]), 0);
        assert_eq!(stats.documents, 0);
    }

    #[test]
    fn idf_formula_and_monotonicity() {
        let idx = two_docs();
        assert_eq!(idx.idf(&["the"]), (3.0f64 / 3.0).ln() + 1.0);
        assert_eq!(idx.idf(&["sat"]), (3.0f64 / 2.0).ln() + 1.0);
        assert_eq!(idx.idf(&["dog"]), (3.0f64 / 1.0).ln() + 1.0);
        assert!(idx.idf(&["the"]) < idx.idf(&["sat"]));
        assert_eq!(idx.tfidf(&["cat"]), 2.0 * idx.idf(&["cat"]));
        assert_eq!(idx.tfidf(&["dog"]), 0.0);
    }

    #[test]
    fn document_mode_groups_lines() {
        let text = "the cat\nsat down\n\nthe dog\n";
        let (idx, stats) = build_index(text.as_bytes(), DocUnit::Document).unwrap();
        assert_eq!(stats.documents, 2);
        assert_eq!(idx.n_docs(), 2);
        assert_eq!(idx.doc_freq(&["the"]), 2);
        // no n-gram across the line break
        assert_eq!(idx.count(&["cat", "sat"]), 0);
    }

    #[test]
    fn undecodable_lines_are_skipped_and_counted() {
        let mut bytes = b"the cat\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe, b'\n']);
        bytes.extend_from_slice(b"a dog\n");
        let (idx, stats) = build_index(&bytes[..], DocUnit::Line).unwrap();
        assert_eq!(stats.skipped_undecodable, 1);
        assert_eq!(idx.n_docs(), 2);
    }

    #[test]
    fn text_round_trip_and_truncation() {
        let idx = two_docs();
        let mut buf = Vec::new();
        idx.write_text(&mut buf).unwrap();
        let back = FrequencyIndex::read_text(&buf[..]).unwrap();
        assert_eq!(back, idx);

        let cut = &buf[..buf.len() - 12];
        assert!(matches!(FrequencyIndex::read_text(cut), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let bad = "#lcp-frequency-index\t99\n";
        assert!(matches!(
            FrequencyIndex::read_text(bad.as_bytes()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn binary_round_trip_and_truncation() {
        let idx = two_docs();
        let mut buf = Vec::new();
        idx.write_binary(&mut buf).unwrap();
        assert_eq!(FrequencyIndex::read_binary(&buf[..]).unwrap(), idx);
        assert!(matches!(
            FrequencyIndex::read_binary(&buf[..buf.len() - 3]),
            Err(Error::Format(_))
        ));
        let empty = FrequencyIndex::new();
        let mut buf = Vec::new();
        empty.write_binary(&mut buf).unwrap();
        assert!(FrequencyIndex::read_binary(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn merge_rejects_other_tokenizer() {
        let mut a = two_docs();
        let mut b = two_docs();
        b.tokenizer_id = "other".into();
        assert!(a.merge(b).is_err());
    }
}
