use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_index::Lemmatizer;
use crate::error::{Error, Result};
use crate::record::FeatureRecord;
use crate::tokenize::tokenize;

// (file suffix, synset pos letter), in lookup order
const POS_FILES: [(&str, char); 4] = [("noun", 'n'), ("verb", 'v'), ("adj", 'a'), ("adv", 'r')];

const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Synset {
    /// `{offset:08}-{pos}` with pos one of n, v, a, r.
    pub id: String,
    pub lemmas: Vec<String>,
    pub definition: String,
    pub examples: Vec<String>,
    pub hypernyms: Vec<usize>,
    pub hyponyms: Vec<usize>,
}

/// Synsets with direct hypernym/hyponym edges and a lemma index.
#[derive(Clone, Debug, Default)]
pub struct SenseInventory {
    synsets: Vec<Synset>,
    by_id: HashMap<String, usize>,
    index: HashMap<String, Vec<usize>>,
    lemmatizer: Lemmatizer,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypernymCounting {
    #[default]
    Direct,
    Closure,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeskOptions {
    pub drop_stopwords: bool,
}

fn data_pos(p: &str) -> Option<char> {
    match p {
        "n" => Some('n'),
        "v" => Some('v'),
        "a" | "s" => Some('a'),
        "r" => Some('r'),
        _ => None,
    }
}

fn synset_id(offset: &str, pos: char) -> String {
    format!("{offset}-{pos}")
}

fn split_gloss(gloss: &str) -> (String, Vec<String>) {
    let mut definition = Vec::new();
    let mut examples = Vec::new();
    for part in gloss.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        if part.starts_with('"') {
            examples.push(part.trim_matches('"').to_string());
        } else {
            definition.push(part);
        }
    }
    (definition.join("; "), examples)
}

struct RawSynset {
    id: String,
    lemmas: Vec<String>,
    gloss: String,
    pointers: Vec<(String, String)>,
}

fn parse_data_line(line: &str, origin: &str, lineno: usize) -> Result<RawSynset> {
    let bad = |m: &str| Error::parse(origin, lineno, m.to_string());
    let (head, gloss) = line.split_once(" | ").unwrap_or((line, ""));
    let f: Vec<&str> = head.split_whitespace().collect();
    if f.len() < 4 {
        return Err(bad("truncated synset record"));
    }
    let pos = data_pos(f[2]).ok_or_else(|| bad("unknown synset type"))?;
    let w_cnt = usize::from_str_radix(f[3], 16).map_err(|_| bad("bad word count"))?;
    let mut i = 4;
    let mut lemmas = Vec::with_capacity(w_cnt);
    for _ in 0..w_cnt {
        let w = f.get(i).ok_or_else(|| bad("missing lemma"))?;
        // adjective markers such as "(a)" or "(ip)"
        let w = w.split('(').next().unwrap_or(w);
        lemmas.push(w.to_lowercase());
        i += 2;
    }
    let p_cnt: usize = f
        .get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad pointer count"))?;
    i += 1;
    let mut pointers = Vec::with_capacity(p_cnt);
    for _ in 0..p_cnt {
        if i + 3 >= f.len() {
            return Err(bad("truncated pointer list"));
        }
        let target_pos = data_pos(f[i + 2]).ok_or_else(|| bad("unknown pointer part of speech"))?;
        pointers.push((f[i].to_string(), synset_id(f[i + 1], target_pos)));
        i += 4;
    }
    Ok(RawSynset {
        id: synset_id(f[0], pos),
        lemmas,
        gloss: gloss.trim().to_string(),
        pointers,
    })
}

fn is_record(line: &str) -> bool {
    line.as_bytes().first().is_some_and(u8::is_ascii_digit)
}

/// Load a WordNet 3.0 database directory (`data.*`, `index.*`, optional
/// `*.exc`). Records are located by their leading offset field, so files
/// with either line ending work.
pub fn load_wordnet(dir: impl AsRef<Path>) -> Result<SenseInventory> {
    let dir = dir.as_ref();
    let mut raw = Vec::new();
    let mut found_any = false;
    for (name, _) in POS_FILES {
        let path = dir.join(format!("data.{name}"));
        if !path.exists() {
            log::debug!("{} not present", path.display());
            continue;
        }
        found_any = true;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let origin = path.display().to_string();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if is_record(line) {
                raw.push(parse_data_line(line, &origin, i + 1)?);
            }
        }
    }
    if !found_any {
        return Err(Error::Config(format!("no WordNet data files in {}", dir.display())));
    }

    let by_id: HashMap<String, usize> = raw.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
    let mut dangling = 0usize;
    let mut synsets: Vec<Synset> = raw
        .iter()
        .map(|r| {
            let (definition, examples) = split_gloss(&r.gloss);
            let mut s = Synset {
                id: r.id.clone(),
                lemmas: r.lemmas.clone(),
                definition,
                examples,
                hypernyms: Vec::new(),
                hyponyms: Vec::new(),
            };
            for (sym, target) in &r.pointers {
                let list = match sym.as_str() {
                    "@" => &mut s.hypernyms,
                    "~" => &mut s.hyponyms,
                    _ => continue,
                };
                match by_id.get(target) {
                    Some(&t) => list.push(t),
                    None => dangling += 1,
                }
            }
            s
        })
        .collect();
    for s in &mut synsets {
        s.hypernyms.dedup();
        s.hyponyms.dedup();
    }

    let mut index: HashMap<String, Vec<usize>> = HashMap::new();
    let mut lemmatizer = Lemmatizer::default();
    for (name, pos) in POS_FILES {
        let path = dir.join(format!("index.{name}"));
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for line in text.lines() {
                let line = line.trim_end_matches('\r');
                if line.starts_with(' ') || line.is_empty() {
                    continue;
                }
                let f: Vec<&str> = line.split_whitespace().collect();
                let Some(n) = f.get(2).and_then(|s| s.parse::<usize>().ok()) else {
                    continue;
                };
                if f.len() < n + 4 {
                    continue;
                }
                let entry = index.entry(f[0].to_lowercase()).or_default();
                for off in &f[f.len() - n..] {
                    match by_id.get(&synset_id(off, pos)) {
                        Some(&i) if !entry.contains(&i) => entry.push(i),
                        Some(_) => {}
                        None => dangling += 1,
                    }
                }
            }
        }
        let exc = dir.join(format!("{name}.exc"));
        if exc.exists() {
            lemmatizer = lemmatizer.with_exception_file(&exc)?;
        }
    }
    if dangling > 0 {
        log::warn!("dropped {dangling} pointers to synsets not in the inventory");
    }
    Ok(SenseInventory {
        synsets,
        by_id,
        index,
        lemmatizer,
    })
}

impl SenseInventory {
    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn synset(&self, id: &str) -> Option<&Synset> {
        self.by_id.get(id).map(|&i| &self.synsets[i])
    }

    /// Synsets for `word` in noun, verb, adjective, adverb order. Inflected
    /// forms fall back to their base form.
    pub fn synsets_for(&self, word: &str) -> Vec<&Synset> {
        let key = word
            .trim()
            .to_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join("_");
        let hits = self.index.get(&key).or_else(|| {
            let base = self.lemmatizer.lemmatize(&key, |c| self.index.contains_key(c));
            self.index.get(&base)
        });
        hits.map(|v| v.iter().map(|&i| &self.synsets[i]).collect())
            .unwrap_or_default()
    }

    fn closure(&self, start: usize, edges: impl Fn(&Synset) -> &[usize]) -> usize {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for &n in edges(&self.synsets[s]) {
                if n != start && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len()
    }
}

/// Sense whose definition and examples share the most tokens with the
/// context; ties keep the earlier sense.
pub fn lesk_disambiguate<'a>(
    inventory: &'a SenseInventory,
    target: &str,
    sentence: &str,
    opts: LeskOptions,
) -> Option<&'a Synset> {
    let keep = |t: &String| !opts.drop_stopwords || !STOPWORDS.contains(&t.as_str());
    let context: HashSet<String> = tokenize(sentence).into_iter().filter(keep).collect();
    let mut best: Option<(&Synset, usize)> = None;
    for s in inventory.synsets_for(target) {
        let mut text = s.definition.clone();
        for e in &s.examples {
            text.push(' ');
            text.push_str(e);
        }
        let sig: HashSet<String> = tokenize(&text).into_iter().filter(keep).collect();
        let overlap = context.intersection(&sig).count();
        if best.is_none_or(|(_, b)| overlap > b) {
            best = Some((s, overlap));
        }
    }
    best.map(|(s, _)| s)
}

/// `(hypernyms, hyponyms)` of a synset.
pub fn wordnet_counts(inventory: &SenseInventory, id: &str, counting: HypernymCounting) -> Option<(usize, usize)> {
    let &i = inventory.by_id.get(id)?;
    let s = &inventory.synsets[i];
    Some(match counting {
        HypernymCounting::Direct => (s.hypernyms.len(), s.hyponyms.len()),
        HypernymCounting::Closure => (
            inventory.closure(i, |s| &s.hypernyms),
            inventory.closure(i, |s| &s.hyponyms),
        ),
    })
}

pub fn wordnet_features(
    inventory: &SenseInventory,
    sentence: &str,
    target: &str,
    opts: LeskOptions,
    counting: HypernymCounting,
) -> FeatureRecord {
    let counts =
        lesk_disambiguate(inventory, target, sentence, opts).and_then(|s| wordnet_counts(inventory, &s.id, counting));
    let mut rec = FeatureRecord::new();
    rec.non_negative("num_hypernyms", counts.map(|c| c.0 as f64));
    rec.non_negative("num_hyponyms", counts.map(|c| c.1 as f64));
    rec
}
