use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

// (suffix, replacement) in the order they are tried; nouns, verbs, adjectives
const RULES: &[(&str, &str)] = &[
    ("ses", "s"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("men", "man"),
    ("ies", "y"),
    ("s", ""),
    ("es", "e"),
    ("es", ""),
    ("ed", "e"),
    ("ed", ""),
    ("ing", "e"),
    ("ing", ""),
    ("er", ""),
    ("est", ""),
    ("er", "e"),
    ("est", "e"),
];

const EXCEPTIONS: &[(&str, &str)] = &[
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("oxen", "ox"),
    ("lice", "louse"),
    ("data", "datum"),
    ("criteria", "criterion"),
    ("phenomena", "phenomenon"),
    ("analyses", "analysis"),
    ("diagnoses", "diagnosis"),
    ("theses", "thesis"),
    ("crises", "crisis"),
    ("bacteria", "bacterium"),
    ("fungi", "fungus"),
    ("nuclei", "nucleus"),
    ("stimuli", "stimulus"),
    ("indices", "index"),
    ("matrices", "matrix"),
    ("vertebrae", "vertebra"),
    ("was", "be"),
    ("were", "be"),
    ("is", "be"),
    ("are", "be"),
    ("been", "be"),
    ("am", "be"),
    ("had", "have"),
    ("has", "have"),
    ("did", "do"),
    ("does", "do"),
    ("done", "do"),
    ("went", "go"),
    ("gone", "go"),
    ("said", "say"),
    ("made", "make"),
    ("took", "take"),
    ("taken", "take"),
    ("came", "come"),
    ("saw", "see"),
    ("seen", "see"),
    ("gave", "give"),
    ("given", "give"),
    ("knew", "know"),
    ("known", "know"),
    ("spoke", "speak"),
    ("spoken", "speak"),
    ("wrote", "write"),
    ("written", "write"),
    ("began", "begin"),
    ("begun", "begin"),
    ("brought", "bring"),
    ("thought", "think"),
    ("bought", "buy"),
    ("sought", "seek"),
    ("taught", "teach"),
    ("found", "find"),
    ("held", "hold"),
    ("led", "lead"),
    ("left", "leave"),
    ("kept", "keep"),
    ("slept", "sleep"),
    ("fell", "fall"),
    ("rose", "rise"),
    ("drank", "drink"),
    ("ate", "eat"),
    ("ran", "run"),
    ("sat", "sit"),
    ("stood", "stand"),
    ("better", "good"),
    ("best", "good"),
    ("worse", "bad"),
    ("worst", "bad"),
];

/// Suffix-stripping lemmatizer with an irregular-form exception table.
///
/// Candidates are produced by the exception table first, then by the suffix
/// rules; a candidate is accepted only when `is_known` says it belongs to the
/// vocabulary. Among accepted forms (the word itself included when known)
/// the shortest wins, earliest on ties.
#[derive(Clone, Debug)]
pub struct Lemmatizer {
    exceptions: HashMap<String, String>,
}

impl Default for Lemmatizer {
    fn default() -> Self {
        Lemmatizer {
            exceptions: EXCEPTIONS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }
}

impl Lemmatizer {
    /// Add exceptions from WordNet-style `.exc` files (`inflected base ...`).
    pub fn with_exception_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            if let (Some(form), Some(base)) = (parts.next(), parts.next()) {
                self.exceptions
                    .entry(form.to_lowercase())
                    .or_insert_with(|| base.to_lowercase());
            }
        }
        Ok(self)
    }

    pub fn lemmatize(&self, word: &str, is_known: impl Fn(&str) -> bool) -> String {
        let word = word.to_lowercase();
        if let Some(base) = self.exceptions.get(&word) {
            return base.clone();
        }
        let mut best: Option<String> = is_known(&word).then(|| word.clone());
        for (suffix, repl) in RULES {
            if let Some(stem) = word.strip_suffix(suffix) {
                if stem.is_empty() {
                    continue;
                }
                let cand = format!("{stem}{repl}");
                if cand != word
                    && is_known(&cand)
                    && best.as_ref().is_none_or(|b| cand.chars().count() < b.chars().count())
                {
                    best = Some(cand);
                }
            }
        }
        best.unwrap_or(word)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known<'a>(words: &'a [&'a str]) -> impl Fn(&str) -> bool + 'a {
        move |w| words.contains(&w)
    }

    #[test]
    fn strips_regular_suffixes_against_vocabulary() {
        let l = Lemmatizer::default();
        let vocab = ["cat", "box", "city", "bless", "glass", "run", "hope"];
        assert_eq!(l.lemmatize("cats", known(&vocab)), "cat");
        assert_eq!(l.lemmatize("boxes", known(&vocab)), "box");
        assert_eq!(l.lemmatize("cities", known(&vocab)), "city");
        assert_eq!(l.lemmatize("blessed", known(&vocab)), "bless");
        assert_eq!(l.lemmatize("hoped", known(&vocab)), "hope");
        assert_eq!(l.lemmatize("Glasses", known(&vocab)), "glass");
    }

    #[test]
    fn exceptions_win() {
        let l = Lemmatizer::default();
        assert_eq!(l.lemmatize("children", |_| false), "child");
        assert_eq!(l.lemmatize("Mice", |_| false), "mouse");
    }

    #[test]
    fn unknown_candidates_leave_word_unchanged() {
        let l = Lemmatizer::default();
        assert_eq!(l.lemmatize("zorbs", |_| false), "zorbs");
        assert_eq!(l.lemmatize("s", |_| true), "s");
    }
}
