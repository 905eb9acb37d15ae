use serde::Serialize;

use crate::record::FeatureKind;
use crate::syntax::PENN_TAGS;

use super::{ColumnMeta, FeatureMatrix};

/// Scalar feature families, with the number of named features in each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Lexical,
    Semantic,
    Phonetic,
    CorpusFrequency,
    GoogleNgram,
    Subtlex,
    Bnc,
    Syntactic,
    Readability,
    Context,
}

const LEXICAL: &[&str] = &["word_len", "num_syllables", "is_acronym"];
const SEMANTIC: &[&str] = &["num_hypernyms", "num_hyponyms"];
const PHONETIC: &[&str] = &[
    "char_transition_min",
    "char_transition_max",
    "char_transition_mean",
    "char_transition_std",
    "phoneme_transition_min",
    "phoneme_transition_max",
    "phoneme_transition_mean",
    "phoneme_transition_std",
];
const CORPUS_FREQUENCY: &[&str] = &[
    "tf",
    "tf_lemma",
    "tf_summed_bpe",
    "tf_ngram_2",
    "tf_ngram_3",
    "tfidf",
    "tfidf_ngram_2",
    "tfidf_ngram_3",
];
const GOOGLE: &[&str] = &[
    "google_ngram_1",
    "google_ngram_2_head",
    "google_ngram_2_tail",
    "google_ngram_2_min",
    "google_ngram_2_max",
    "google_ngram_2_mean",
    "google_ngram_2_std",
    "google_ngram_3_head",
    "google_ngram_3_mid",
    "google_ngram_3_tail",
    "google_ngram_3_min",
    "google_ngram_3_max",
    "google_ngram_3_mean",
    "google_ngram_3_std",
];
const SUBTLEX: &[&str] = &["FREQcount", "CDcount", "FREQlow", "CDlow", "SUBTLWF", "SUBTLCD"];
const BNC: &[&str] = &["bnc_frequency"];
const SYNTACTIC_BASE: &[&str] = &["parse_tree_depth", "token_depth", "num_words_at_depth", "is_proper"];
const CONTEXT: &[&str] = &[
    "ppl",
    "ppl_aspect_only",
    "num_OOV",
    "corpus_bible",
    "corpus_biomed",
    "corpus_europarl",
];

/// The 110 named scalar features with their family.
pub static CORE_FEATURES: std::sync::LazyLock<Vec<(FeatureGroup, String)>> = std::sync::LazyLock::new(|| {
    let mut v = Vec::new();
    let mut add = |g: FeatureGroup, names: &[&str]| v.extend(names.iter().map(|n| (g, n.to_string())));
    add(FeatureGroup::Lexical, LEXICAL);
    add(FeatureGroup::Semantic, SEMANTIC);
    add(FeatureGroup::Phonetic, PHONETIC);
    add(FeatureGroup::CorpusFrequency, CORPUS_FREQUENCY);
    add(FeatureGroup::GoogleNgram, GOOGLE);
    add(FeatureGroup::Subtlex, SUBTLEX);
    add(FeatureGroup::Bnc, BNC);
    add(FeatureGroup::Syntactic, SYNTACTIC_BASE);
    let pos: Vec<String> = PENN_TAGS.iter().map(|t| format!("POS_{t}")).collect();
    let pos: Vec<&str> = pos.iter().map(String::as_str).collect();
    add(FeatureGroup::Syntactic, &pos);
    add(FeatureGroup::Readability, &crate::surface::READABILITY_FEATURES);
    add(FeatureGroup::Context, CONTEXT);
    v
});

#[derive(Clone, Debug, Serialize)]
pub struct GroupCount {
    pub group: FeatureGroup,
    pub expected: usize,
    pub present: usize,
}

/// Column accounting of an assembled matrix.
#[derive(Clone, Debug, Serialize)]
pub struct FeatureManifest {
    pub core_expected: usize,
    pub core_present: usize,
    pub core_missing: Vec<String>,
    pub groups: Vec<GroupCount>,
    pub log_variant_columns: usize,
    pub embedding_columns: usize,
    /// Scalar columns outside the named set (missing/case flags).
    pub auxiliary_columns: Vec<String>,
    pub total_columns: usize,
    pub columns: Vec<ColumnMeta>,
}

fn base_name(name: &str) -> &str {
    name.strip_suffix("_head")
        .or_else(|| name.strip_suffix("_tail"))
        .filter(|b| !b.ends_with("google_ngram_2") && !b.ends_with("google_ngram_3"))
        .unwrap_or(name)
}

pub fn feature_manifest(matrix: &FeatureMatrix) -> FeatureManifest {
    let names: std::collections::HashSet<&str> = matrix
        .columns()
        .iter()
        .filter(|c| !c.is_log_variant && c.kind != FeatureKind::Embedding)
        .map(|c| base_name(&c.name))
        .collect();
    let mut groups: Vec<GroupCount> = Vec::new();
    let mut core_missing = Vec::new();
    for (g, n) in CORE_FEATURES.iter() {
        if groups.last().is_none_or(|last| last.group != *g) {
            groups.push(GroupCount {
                group: *g,
                expected: 0,
                present: 0,
            });
        }
        let last = groups.last_mut().unwrap();
        last.expected += 1;
        if names.contains(n.as_str()) {
            last.present += 1;
        } else {
            core_missing.push(n.clone());
        }
    }
    let core: std::collections::HashSet<&str> = CORE_FEATURES.iter().map(|(_, n)| n.as_str()).collect();
    let auxiliary = matrix
        .columns()
        .iter()
        .filter(|c| !c.is_log_variant && c.kind != FeatureKind::Embedding && !core.contains(base_name(&c.name)))
        .map(|c| c.name.clone())
        .collect();
    FeatureManifest {
        core_expected: CORE_FEATURES.len(),
        core_present: CORE_FEATURES.len() - core_missing.len(),
        core_missing,
        groups,
        log_variant_columns: matrix.columns().iter().filter(|c| c.is_log_variant).count(),
        embedding_columns: matrix
            .columns()
            .iter()
            .filter(|c| c.kind == FeatureKind::Embedding)
            .count(),
        auxiliary_columns: auxiliary,
        total_columns: matrix.n_cols(),
        columns: matrix.columns().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_set_has_110_unique_names() {
        assert_eq!(CORE_FEATURES.len(), 110);
        let unique: std::collections::HashSet<_> = CORE_FEATURES.iter().map(|c| &c.1).collect();
        assert_eq!(unique.len(), 110);
    }

    #[test]
    fn suffix_stripping_keeps_position_names() {
        assert_eq!(base_name("tf_head"), "tf");
        assert_eq!(base_name("google_ngram_2_head"), "google_ngram_2_head");
        assert_eq!(base_name("google_ngram_2_head_tail"), "google_ngram_2_head");
    }
}
