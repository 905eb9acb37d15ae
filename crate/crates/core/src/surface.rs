//! Word-shape features and sentence readability metrics.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::record::FeatureRecord;
use crate::tokenize::tokenize_cased;

const BUNDLED_FAMILIAR: &str = include_str!("../data/dale_chall_familiar.txt");

pub const READABILITY_FEATURES: [&str; 22] = [
    "automated_readability_index",
    "avg_character_per_word",
    "avg_letter_per_word",
    "avg_syllables_per_word",
    "char_count",
    "coleman_liau_index",
    "crawford",
    "fernandez_huerta",
    "flesch_kincaid_grade",
    "flesch_reading_ease",
    "gutierrez_polini",
    "letter_count",
    "lexicon_count",
    "linsear_write_formula",
    "lix",
    "polysyllabcount",
    "reading_time",
    "rix",
    "syllable_count",
    "szigriszt_pazos",
    "SMOGIndex",
    "DaleChallIndex",
];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group syllable estimate, never below 1.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word.to_lowercase().chars().collect();
    let mut groups: usize = 0;
    let mut prev_vowel = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = w.len();
    let lone_final_e = n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]);
    let consonant_le = n >= 3 && w[n - 1] == 'e' && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
    if lone_final_e && !consonant_le {
        groups = groups.saturating_sub(1);
    }
    groups.max(1)
}

pub fn is_acronym(word: &str) -> bool {
    word.chars().count() >= 2 && word.chars().all(|c| c.is_alphabetic() && c.is_uppercase())
}

pub fn lexical_features(target: &str) -> FeatureRecord {
    let mut rec = FeatureRecord::new();
    let t = target.trim();
    rec.non_negative("word_len", Some(t.chars().count() as f64));
    rec.non_negative("num_syllables", Some(count_syllables(t) as f64));
    rec.flag("is_acronym", Some(is_acronym(t)));
    rec
}

/// Dale-Chall familiar-word list.
#[derive(Clone, Debug)]
pub struct FamiliarWords {
    words: HashSet<String>,
}

impl Default for FamiliarWords {
    fn default() -> Self {
        Self::parse(BUNDLED_FAMILIAR)
    }
}

impl FamiliarWords {
    pub fn parse(text: &str) -> Self {
        FamiliarWords {
            words: text
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The 22 readability metrics of one sentence, in `READABILITY_FEATURES`
/// order. Every context counts as a single sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadabilityRecord {
    pub values: [f64; 22],
}

impl ReadabilityRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        READABILITY_FEATURES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        READABILITY_FEATURES.iter().copied().zip(self.values.iter().copied())
    }
}

const NON_NEGATIVE: [&str; 13] = [
    "avg_character_per_word",
    "avg_letter_per_word",
    "avg_syllables_per_word",
    "char_count",
    "letter_count",
    "lexicon_count",
    "lix",
    "polysyllabcount",
    "reading_time",
    "rix",
    "syllable_count",
    "SMOGIndex",
    "DaleChallIndex",
];

/// `None` when the sentence has no words.
pub fn readability(sentence: &str, familiar: &FamiliarWords) -> Option<ReadabilityRecord> {
    let tokens = tokenize_cased(sentence);
    if tokens.is_empty() {
        return None;
    }
    let s = 1.0;
    let w = tokens.len() as f64;
    let syll: Vec<usize> = tokens.iter().map(|t| count_syllables(t)).collect();
    let y = syll.iter().sum::<usize>() as f64;
    let l = tokens
        .iter()
        .flat_map(|t| t.chars())
        .filter(|c| c.is_alphabetic())
        .count() as f64;
    let p = syll.iter().filter(|&&n| n >= 3).count() as f64;
    let chars = sentence.chars().filter(|c| !c.is_whitespace()).count() as f64;
    let long = tokens.iter().filter(|t| t.chars().count() > 6).count() as f64;
    let difficult = tokens.iter().filter(|t| !familiar.contains(t)).count() as f64;

    let easy = syll.iter().filter(|&&n| n < 3).count() as f64;
    let linsear = {
        let r = (easy + 3.0 * p) / s;
        if r > 20.0 {
            r / 2.0
        } else {
            (r - 2.0) / 2.0
        }
    };
    let pct_difficult = 100.0 * difficult / w;
    let dale_chall = 0.1579 * pct_difficult + 0.0496 * (w / s) + if pct_difficult > 5.0 { 3.6365 } else { 0.0 };

    let values = [
        4.71 * (l / w) + 0.5 * (w / s) - 21.43,
        chars / w,
        l / w,
        y / w,
        chars,
        0.0588 * (100.0 * l / w) - 0.296 * (100.0 * s / w) - 15.8,
        // Crawford (1984)
        -0.205 * (100.0 * s / w) + 0.049 * (100.0 * y / w) - 3.407,
        // Fernandez Huerta (1959), corrected form
        206.84 - 60.0 * (y / w) - 1.02 * (w / s),
        0.39 * (w / s) + 11.8 * (y / w) - 15.59,
        206.835 - 1.015 * (w / s) - 84.6 * (y / w),
        // Gutierrez de Polini (1972)
        95.2 - 9.7 * (l / w) - 0.35 * (w / s),
        l,
        w,
        linsear,
        w / s + 100.0 * long / w,
        p,
        chars * 14.69,
        long / s,
        y,
        // Szigriszt Pazos (1993) perspicuity
        206.835 - 62.3 * (y / w) - (w / s),
        1.0430 * (p * 30.0 / s).sqrt() + 3.1291,
        dale_chall,
    ];
    Some(ReadabilityRecord { values })
}

pub fn readability_features(sentence: &str, familiar: &FamiliarWords) -> FeatureRecord {
    let mut rec = FeatureRecord::new();
    let r = readability(sentence, familiar);
    for (i, name) in READABILITY_FEATURES.iter().enumerate() {
        let v = r.as_ref().map(|r| r.values[i]);
        if NON_NEGATIVE.contains(name) {
            rec.non_negative(*name, v);
        } else {
            rec.real(*name, v);
        }
    }
    rec
}
