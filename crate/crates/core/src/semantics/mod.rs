//! Word-vector features, precomputed per-sample vectors, and WordNet sense
//! statistics.

mod wordnet;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::record::{FeatureKind, FeatureRecord};
use crate::tokenize::{normalize_word, tokenize};

pub use wordnet::{
    lesk_disambiguate, load_wordnet, wordnet_counts, wordnet_features, HypernymCounting, LeskOptions, SenseInventory,
    Synset,
};

/// Word vectors of a fixed dimension, stored as f32.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

/// Read a whitespace-separated `word v1 ... vd` table. The first valid line
/// fixes `d`; malformed or mismatched lines are skipped with a warning.
pub fn parse_embedding_table(reader: impl BufRead, origin: &str) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: std::result::Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
        let values = match values {
            Ok(v) if !v.is_empty() => v,
            _ => {
                log::warn!("{origin}:{}: skipped row with non-numeric or no components", i + 1);
                continue;
            }
        };
        if table.dim == 0 {
            table.dim = values.len();
        } else if values.len() != table.dim {
            log::warn!(
                "{origin}:{}: skipped row of dimension {} (expected {})",
                i + 1,
                values.len(),
                table.dim
            );
            continue;
        }
        if table.vectors.insert(word.to_string(), values).is_some() {
            log::warn!("{origin}:{}: duplicate word {word:?}, keeping the later vector", i + 1);
        }
    }
    if table.vectors.is_empty() {
        return Err(Error::Format(format!("{origin}: no embedding rows")));
    }
    Ok(table)
}

pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_table(BufReader::new(f), &path.display().to_string())
}

fn push_vector(rec: &mut FeatureRecord, prefix: &str, v: &[f64]) {
    for (i, x) in v.iter().enumerate() {
        rec.push(format!("{prefix}_{i}"), Some(*x), FeatureKind::Embedding);
    }
}

/// Target vector and mean context vector; out-of-vocabulary gives a zero
/// vector with the matching `_missing` flag set.
pub fn embedding_features(table: &EmbeddingTable, sentence: &str, target: &str) -> FeatureRecord {
    let dim = table.dim();
    let mut rec = FeatureRecord::new();
    let word = normalize_word(target).unwrap_or_else(|| target.trim().to_lowercase());
    let word_vec = table.get(&word);
    let v: Vec<f64> = match word_vec {
        Some(v) => v.iter().map(|&x| x as f64).collect(),
        None => vec![0.0; dim],
    };
    push_vector(&mut rec, "glove_word", &v);

    // sorted so the mean does not depend on token order
    let mut toks = tokenize(sentence);
    toks.sort();
    let known: Vec<&[f32]> = toks.iter().filter_map(|t| table.get(t)).collect();
    let mut ctx = vec![0.0f64; dim];
    for v in &known {
        for (s, x) in ctx.iter_mut().zip(v.iter()) {
            *s += *x as f64;
        }
    }
    if !known.is_empty() {
        let n = known.len() as f64;
        ctx.iter_mut().for_each(|s| *s /= n);
    }
    push_vector(&mut rec, "glove_context", &ctx);
    rec.flag("glove_word_missing", Some(word_vec.is_none()));
    rec.flag("glove_context_missing", Some(known.is_empty()));
    rec
}

/// Per-sample vectors produced elsewhere, keyed by sample id.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedEmbeddingFile {
    pub prefix: String,
    dim: usize,
    rows: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddingFile {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.get(id).map(Vec::as_slice)
    }
}

/// Read `id<TAB>v1 v2 ... vd`. Every row must have the same `d` and ids are
/// unique.
pub fn parse_precomputed(reader: impl BufRead, origin: &str, prefix: &str) -> Result<PrecomputedEmbeddingFile> {
    let mut dim = 0;
    let mut rows = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "expected id<TAB>vector"))?;
        let v = rest
            .split_whitespace()
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|_| Error::parse(origin, lineno, format!("not a number: {x:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if dim == 0 {
            dim = v.len();
        }
        if v.len() != dim || dim == 0 {
            return Err(Error::Format(format!(
                "{origin}:{lineno}: vector of dimension {} in a file of dimension {dim}",
                v.len()
            )));
        }
        if rows.insert(id.to_string(), v).is_some() {
            return Err(Error::parse(origin, lineno, format!("duplicate id {id:?}")));
        }
    }
    Ok(PrecomputedEmbeddingFile {
        prefix: prefix.to_string(),
        dim,
        rows,
    })
}

pub fn load_precomputed(path: impl AsRef<Path>, prefix: &str) -> Result<PrecomputedEmbeddingFile> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_precomputed(BufReader::new(f), &path.display().to_string(), prefix)
}

/// One record per id with columns `{prefix}_{i}`; absent ids are all missing.
pub fn attach_precomputed<'a>(
    file: &PrecomputedEmbeddingFile,
    ids: impl IntoIterator<Item = &'a str>,
) -> Vec<FeatureRecord> {
    ids.into_iter()
        .map(|id| {
            let mut rec = FeatureRecord::new();
            let row = file.get(id);
            for i in 0..file.dim {
                rec.push(
                    format!("{}_{i}", file.prefix),
                    row.map(|r| r[i]),
                    FeatureKind::Embedding,
                );
            }
            rec
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> EmbeddingTable {
        parse_embedding_table(text.as_bytes(), "fixture").unwrap()
    }

    #[test]
    fn loader_rules() {
        let t = table("cat 1 2 3\ndog 4 5 6\n");
        assert_eq!((t.len(), t.dim()), (2, 3));
        let t = table("cat 1 2 3\nbad 1 2\nx 1 two 3\n");
        assert_eq!(t.len(), 1);
        let t = table("cat 1 2 3\ncat 7 8 9\n");
        assert_eq!(t.get("cat").unwrap(), [7.0, 8.0, 9.0]);
        assert!(parse_embedding_table("".as_bytes(), "empty").is_err());
    }

    #[test]
    fn context_means() {
        let t = table("a 1 0\nb 0 1\n");
        let r = embedding_features(&t, "a b", "a");
        assert_eq!(r.get("glove_context_0"), Some(Some(0.5)));
        assert_eq!(r.get("glove_context_1"), Some(Some(0.5)));
        assert_eq!(r.get("glove_word_0"), Some(Some(1.0)));

        let r = embedding_features(&t, "b", "b");
        assert_eq!(r.get("glove_context_1"), Some(Some(1.0)));

        let r = embedding_features(&t, "x y", "x");
        assert_eq!(r.get("glove_context_0"), Some(Some(0.0)));
        assert_eq!(r.get("glove_context_missing"), Some(Some(1.0)));
        assert_eq!(r.get("glove_word_missing"), Some(Some(1.0)));
        assert_eq!(r.len(), 2 * 2 + 2);
    }

    #[test]
    fn context_mean_ignores_order() {
        let t = table("a 0.1 0.7\nb 0.2 0.3\nc 0.3 0.9\n");
        let x = embedding_features(&t, "a b c a", "b");
        let y = embedding_features(&t, "c a b a", "b");
        assert_eq!(x, y);
    }

    #[test]
    fn precomputed_join() {
        let f = parse_precomputed("s1\t1 2\ns2\t3 4\n".as_bytes(), "x", "elmo").unwrap();
        let recs = attach_precomputed(&f, ["s2", "s3", "s1"]);
        assert_eq!(recs[0].get("elmo_1"), Some(Some(4.0)));
        assert!(recs[1].iter().all(|c| c.value.is_none()));
        let g = parse_precomputed("s2\t3 4\ns1\t1 2\n".as_bytes(), "x", "elmo").unwrap();
        assert_eq!(attach_precomputed(&g, ["s2", "s3", "s1"]), recs);
        assert!(matches!(
            parse_precomputed("s1\t1 2\ns2\t3\n".as_bytes(), "x", "elmo"),
            Err(Error::Format(_))
        ));
    }
}
