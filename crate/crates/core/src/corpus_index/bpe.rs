use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::FrequencyIndex;

/// Byte-pair merge rules applied in rank order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BpeVocabulary {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    alphabet: BTreeSet<char>,
}

impl BpeVocabulary {
    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let ranks = merges.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        let alphabet = merges.iter().flat_map(|(a, b)| a.chars().chain(b.chars())).collect();
        BpeVocabulary {
            merges,
            ranks,
            alphabet,
        }
    }

    /// Learn up to `n_merges` merges from weighted words. At each step the
    /// most frequent adjacent pair is merged; ties go to the
    /// lexicographically smallest pair.
    pub fn train<'a>(words: impl IntoIterator<Item = (&'a str, u64)>, n_merges: usize) -> Self {
        let mut alphabet = BTreeSet::new();
        let mut entries: Vec<(Vec<String>, u64)> = words
            .into_iter()
            .filter(|(w, c)| !w.is_empty() && *c > 0)
            .map(|(w, c)| {
                alphabet.extend(w.chars());
                (w.chars().map(String::from).collect(), c)
            })
            .collect();
        entries.sort();

        let mut merges = Vec::new();
        for _ in 0..n_merges {
            let mut pairs: HashMap<(&str, &str), u64> = HashMap::new();
            for (syms, c) in &entries {
                for w in syms.windows(2) {
                    *pairs.entry((w[0].as_str(), w[1].as_str())).or_insert(0) += c;
                }
            }
            let best = pairs
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .map(|((a, b), _)| (a.to_string(), b.to_string()));
            let Some(pair) = best else { break };
            for (syms, _) in &mut entries {
                apply_merge(syms, &pair);
            }
            merges.push(pair);
        }
        let mut vocab = Self::from_merges(merges);
        vocab.alphabet.extend(alphabet);
        vocab
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn alphabet(&self) -> &BTreeSet<char> {
        &self.alphabet
    }

    /// Split `word` into pieces. Always non-empty for a non-empty word.
    pub fn encode(&self, word: &str) -> Vec<String> {
        let mut syms: Vec<String> = word.chars().map(String::from).collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, w)))
                .min_by_key(|(r, _)| *r)
                .map(|(_, w)| (w[0].clone(), w[1].clone()));
            match best {
                Some(pair) => apply_merge(&mut syms, &pair),
                None => return syms,
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut merges = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_string(), b.to_string()))
                }
                _ => {
                    return Err(Error::parse(
                        path.display().to_string(),
                        i + 1,
                        "expected two space-separated symbols",
                    ))
                }
            }
        }
        Ok(Self::from_merges(merges))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "#version: lcp-bpe 1").map_err(io)?;
        for (a, b) in &self.merges {
            writeln!(w, "{a} {b}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn apply_merge(syms: &mut Vec<String>, pair: &(String, String)) {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == pair.0 && syms[i + 1] == pair.1 {
            out.push(format!("{}{}", pair.0, pair.1));
            i += 2;
        } else {
            out.push(std::mem::take(&mut syms[i]));
            i += 1;
        }
    }
    *syms = out;
}

/// Corpus counts of BPE pieces: every word occurrence contributes one count
/// to each of its pieces.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BpeCounts {
    counts: HashMap<String, u64>,
}

impl BpeCounts {
    pub fn from_index(index: &FrequencyIndex, bpe: &BpeVocabulary) -> Self {
        let mut counts = HashMap::new();
        for (word, c) in index.ngrams(1) {
            for piece in bpe.encode(word) {
                *counts.entry(piece).or_insert(0) += c;
            }
        }
        BpeCounts { counts }
    }

    pub fn count(&self, piece: &str) -> u64 {
        self.counts.get(piece).copied().unwrap_or(0)
    }

    /// Sum of piece counts over the BPE split of `word`.
    pub fn summed(&self, bpe: &BpeVocabulary, word: &str) -> u64 {
        bpe.encode(word).iter().map(|p| self.count(p)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn training_merges_most_frequent_pair_first() {
        let bpe = BpeVocabulary::train([("low", 5), ("lower", 2), ("newest", 6), ("widest", 3)], 3);
        // "es" (9) then "est" (9) then "lo" (7)
        assert_eq!(
            bpe.merges(),
            &[
                ("e".to_string(), "s".to_string()),
                ("es".to_string(), "t".to_string()),
                ("l".to_string(), "o".to_string()),
            ]
        );
        assert_eq!(bpe.encode("newest"), vec!["n", "e", "w", "est"]);
        assert_eq!(bpe.encode("lowest"), vec!["lo", "w", "est"]);
    }

    #[test]
    fn word_learned_whole_is_a_single_piece() {
        let bpe = BpeVocabulary::train([("ab", 10)], 5);
        assert_eq!(bpe.encode("ab"), vec!["ab"]);
        let idx = FrequencyIndex::from_documents(["ab ab ba"]);
        let counts = BpeCounts::from_index(&idx, &bpe);
        assert_eq!(counts.summed(&bpe, "ab"), counts.count("ab"));
        assert_eq!(counts.count("ab"), 2);
    }

    #[test]
    fn save_and_load_preserve_merges() {
        let bpe = BpeVocabulary::train([("banana", 3), ("bandana", 2)], 6);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("merges.txt");
        bpe.save(&p).unwrap();
        let back = BpeVocabulary::load(&p).unwrap();
        assert_eq!(back.merges(), bpe.merges());
        assert_eq!(back.encode("bandanas"), bpe.encode("bandanas"));
    }

    proptest! {
        #[test]
        fn encoding_is_nonempty_and_concatenates(word in "[a-z]{1,12}") {
            let bpe = BpeVocabulary::train([("abc", 4), ("cab", 3), ("bca", 2)], 8);
            let pieces = bpe.encode(&word);
            prop_assert!(!pieces.is_empty());
            prop_assert_eq!(pieces.concat(), word);
        }
    }
}
