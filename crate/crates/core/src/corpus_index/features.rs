use crate::record::FeatureRecord;
use crate::stats::summarize;
use crate::tokenize::{find_token, normalize_word, tokenize};

use super::bpe::{BpeCounts, BpeVocabulary};
use super::lemma::Lemmatizer;
use super::remote::NgramCountSource;
use super::FrequencyIndex;

pub struct FrequencyResources<'a> {
    pub index: &'a FrequencyIndex,
    pub bpe: &'a BpeVocabulary,
    pub bpe_counts: &'a BpeCounts,
    pub lemmatizer: &'a Lemmatizer,
}

/// Windows of length `order` over `tokens` that contain position `pos`,
/// ordered from the one ending at `pos` to the one starting at `pos`.
/// Windows that would run past either edge are `None`.
fn windows_at(tokens: &[String], pos: usize, order: usize) -> Vec<Option<Vec<&str>>> {
    (0..order)
        .rev()
        .map(|before| {
            let start = pos.checked_sub(before)?;
            let end = start + order;
            (end <= tokens.len()).then(|| tokens[start..end].iter().map(String::as_str).collect())
        })
        .collect()
}

/// Corpus word-frequency features for `target` in `sentence`.
pub fn frequency_features(res: &FrequencyResources<'_>, sentence: &str, target: &str) -> FeatureRecord {
    let mut rec = FeatureRecord::new();
    let tokens = tokenize(sentence);
    let idx = res.index;
    let word = normalize_word(target);
    let pos = word.as_deref().and_then(|w| find_token(&tokens, w));

    match &word {
        Some(w) => {
            let tf = idx.unigram(w);
            let lemma = res.lemmatizer.lemmatize(w, |c| idx.unigram(c) > 0);
            rec.non_negative("tf", Some(tf as f64));
            rec.non_negative("tf_lemma", Some(idx.unigram(&lemma) as f64));
            rec.non_negative("tf_summed_bpe", Some(res.bpe_counts.summed(res.bpe, w) as f64));
        }
        None => {
            rec.note_issue(format!("target {target:?} is not a single token"));
            for name in ["tf", "tf_lemma", "tf_summed_bpe"] {
                rec.non_negative(name, None);
            }
        }
    }

    match pos {
        Some(p) => {
            for order in [2, 3] {
                let (mut tf_sum, mut tfidf_sum) = (0.0, 0.0);
                for gram in windows_at(&tokens, p, order).into_iter().flatten() {
                    tf_sum += idx.count(&gram) as f64;
                    tfidf_sum += idx.tfidf(&gram);
                }
                rec.non_negative(format!("tf_ngram_{order}"), Some(tf_sum));
                rec.non_negative(format!("tfidf_ngram_{order}"), Some(tfidf_sum));
            }
        }
        None => {
            if word.is_some() {
                rec.note_issue(format!("target {target:?} not found in context"));
            }
            for name in ["tf_ngram_2", "tfidf_ngram_2", "tf_ngram_3", "tfidf_ngram_3"] {
                rec.non_negative(name, None);
            }
        }
    }
    rec.non_negative("tfidf", word.as_deref().map(|w| idx.tfidf(&[w])));

    let oov = tokens.iter().filter(|t| idx.unigram(t) == 0).count();
    rec.non_negative("num_OOV", Some(oov as f64));
    rec
}

/// Phrase-count features around the target from a (remote or local) n-gram
/// source. Edge positions and failed lookups are missing.
pub fn google_ngram_features(source: &dyn NgramCountSource, sentence: &str, target: &str) -> FeatureRecord {
    let mut rec = FeatureRecord::new();
    let tokens = tokenize(sentence);
    let word = normalize_word(target);
    let pos = word.as_deref().and_then(|w| find_token(&tokens, w));

    rec.non_negative("google_ngram_1", word.as_deref().and_then(|w| source.ngram_count(w)));

    let positions: [(usize, &[&str]); 2] = [(2, &["head", "tail"]), (3, &["head", "mid", "tail"])];
    for (order, names) in positions {
        let counts: Vec<Option<f64>> = match pos {
            Some(p) => windows_at(&tokens, p, order)
                .into_iter()
                .map(|g| g.and_then(|g| source.ngram_count(&g.join(" "))))
                .collect(),
            None => vec![None; order],
        };
        for (name, c) in names.iter().zip(&counts) {
            rec.non_negative(format!("google_ngram_{order}_{name}"), *c);
        }
        let present: Vec<f64> = counts.iter().flatten().copied().collect();
        let summary = summarize(&present);
        for (i, stat) in ["min", "max", "mean"].iter().enumerate() {
            rec.non_negative(format!("google_ngram_{order}_{stat}"), summary.map(|s| s[i]));
        }
        rec.non_negative(format!("google_ngram_{order}_std"), summary.map(|s| s[3]));
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::super::{ExternalFreqTable, FreqSource};
    use super::*;

    fn resources<'a>(
        idx: &'a FrequencyIndex,
        bpe: &'a BpeVocabulary,
        counts: &'a BpeCounts,
        lem: &'a Lemmatizer,
    ) -> FrequencyResources<'a> {
        FrequencyResources {
            index: idx,
            bpe,
            bpe_counts: counts,
            lemmatizer: lem,
        }
    }

    #[test]
    fn ngram_sums_on_two_doc_fixture() {
        let idx = FrequencyIndex::from_documents(["the cat sat", "the cat"]);
        let bpe = BpeVocabulary::default();
        let counts = BpeCounts::from_index(&idx, &bpe);
        let lem = Lemmatizer::default();
        let rec = frequency_features(&resources(&idx, &bpe, &counts, &lem), "the cat sat", "cat");
        assert_eq!(rec.get("tf"), Some(Some(2.0)));
        // count("the cat") + count("cat sat")
        assert_eq!(rec.get("tf_ngram_2"), Some(Some(3.0)));
        // only "the cat sat" fits
        assert_eq!(rec.get("tf_ngram_3"), Some(Some(1.0)));
        assert_eq!(rec.get("num_OOV"), Some(Some(0.0)));
        let expect = 2.0 * idx.idf(&["the", "cat"]) + 1.0 * idx.idf(&["cat", "sat"]);
        assert_eq!(rec.get("tfidf_ngram_2"), Some(Some(expect)));
    }

    #[test]
    fn unseen_target_and_absent_target() {
        let idx = FrequencyIndex::from_documents(["the cat sat", "the cat"]);
        let bpe = BpeVocabulary::default();
        let counts = BpeCounts::from_index(&idx, &bpe);
        let lem = Lemmatizer::default();
        let res = resources(&idx, &bpe, &counts, &lem);

        let rec = frequency_features(&res, "the dog sat", "dog");
        assert_eq!(rec.get("tf"), Some(Some(0.0)));
        assert_eq!(rec.get("tfidf"), Some(Some(0.0)));
        assert_eq!(rec.get("num_OOV"), Some(Some(1.0)));

        let rec = frequency_features(&res, "the cat sat", "dog");
        assert_eq!(rec.get("tf_ngram_2"), Some(None));
        assert_eq!(rec.issues().len(), 1);
    }

    #[test]
    fn lemma_frequency_uses_vocabulary() {
        let idx = FrequencyIndex::from_documents(["a cat", "the cat", "cats"]);
        let bpe = BpeVocabulary::default();
        let counts = BpeCounts::from_index(&idx, &bpe);
        let lem = Lemmatizer::default();
        let rec = frequency_features(&resources(&idx, &bpe, &counts, &lem), "many cats", "cats");
        assert_eq!(rec.get("tf"), Some(Some(1.0)));
        assert_eq!(rec.get("tf_lemma"), Some(Some(2.0)));
    }

    fn table(entries: &[(&str, f64)]) -> ExternalFreqTable {
        let mut t = ExternalFreqTable::new(FreqSource::GoogleLocal, vec!["count".into()]);
        for (k, v) in entries {
            t.insert(*k, vec![*v]).unwrap();
        }
        t
    }

    #[test]
    fn google_bigram_statistics() {
        let t = table(&[("a b", 4.0), ("b c", 2.0)]);
        let rec = google_ngram_features(&t, "a b c", "b");
        assert_eq!(rec.get("google_ngram_2_head"), Some(Some(4.0)));
        assert_eq!(rec.get("google_ngram_2_tail"), Some(Some(2.0)));
        assert_eq!(rec.get("google_ngram_2_min"), Some(Some(2.0)));
        assert_eq!(rec.get("google_ngram_2_max"), Some(Some(4.0)));
        assert_eq!(rec.get("google_ngram_2_mean"), Some(Some(3.0)));
        assert_eq!(rec.get("google_ngram_2_std"), Some(Some(1.0)));
        // only the middle trigram fits in a 3-token sentence
        assert_eq!(rec.get("google_ngram_3_head"), Some(None));
        assert_eq!(rec.get("google_ngram_3_mid"), Some(Some(0.0)));
        assert_eq!(rec.get("google_ngram_3_tail"), Some(None));
    }

    #[test]
    fn google_edges_and_constant_sets() {
        let t = table(&[("a b", 5.0), ("b c", 5.0), ("a b c", 5.0)]);
        let rec = google_ngram_features(&t, "a b c", "a");
        assert_eq!(rec.get("google_ngram_2_head"), Some(None));
        assert_eq!(rec.get("google_ngram_2_tail"), Some(Some(5.0)));
        let rec = google_ngram_features(&t, "a b c", "b");
        assert_eq!(rec.get("google_ngram_2_std"), Some(Some(0.0)));
    }
}
