//! CompLex-format datasets: loading, complexity classes, stratified folds and
//! the reduced training set.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corpus {
    Bible,
    Biomed,
    Europarl,
}

impl Corpus {
    pub const ALL: [Corpus; 3] = [Corpus::Bible, Corpus::Biomed, Corpus::Europarl];

    pub fn as_str(self) -> &'static str {
        match self {
            Corpus::Bible => "bible",
            Corpus::Biomed => "biomed",
            Corpus::Europarl => "europarl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bible" => Some(Corpus::Bible),
            "biomed" => Some(Corpus::Biomed),
            "europarl" => Some(Corpus::Europarl),
            _ => None,
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subtask {
    Single,
    Mwe,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Single(String),
    Mwe { head: String, tail: String },
}

impl Target {
    /// The target as written in the dataset.
    pub fn surface(&self) -> String {
        match self {
            Target::Single(w) => w.clone(),
            Target::Mwe { head, tail } => format!("{head} {tail}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub corpus: Corpus,
    pub sentence: String,
    pub target: Target,
    pub complexity: Option<f64>,
}

impl Sample {
    pub fn label(&self) -> Result<f64> {
        self.complexity
            .ok_or_else(|| Error::Validation(format!("sample {} has no complexity label", self.id)))
    }

    pub fn class(&self) -> Result<ComplexityClass> {
        bin_complexity(self.label()?)
    }
}

/// Five-way bin of a complexity label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComplexityClass(u8);

impl ComplexityClass {
    pub const ALL: [ComplexityClass; 5] = [
        ComplexityClass(1),
        ComplexityClass(2),
        ComplexityClass(3),
        ComplexityClass(4),
        ComplexityClass(5),
    ];

    pub fn new(class: u8) -> Result<Self> {
        if (1..=5).contains(&class) {
            Ok(ComplexityClass(class))
        } else {
            Err(Error::Domain(format!("complexity class {class} not in 1..=5")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for ComplexityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `[0,0.2)→1, [0.2,0.4)→2, [0.4,0.6)→3, [0.6,0.8)→4, [0.8,1]→5`.
pub fn bin_complexity(label: f64) -> Result<ComplexityClass> {
    if !(0.0..=1.0).contains(&label) {
        return Err(Error::Domain(format!("complexity {label} outside [0,1]")));
    }
    let class = if label < 0.2 {
        1
    } else if label < 0.4 {
        2
    } else if label < 0.6 {
        3
    } else if label < 0.8 {
        4
    } else {
        5
    };
    Ok(ComplexityClass(class))
}

const EXPECTED_HEADER: [&str; 5] = ["id", "corpus", "sentence", "token", "complexity"];

pub fn load_complex_tsv(path: impl AsRef<Path>, subtask: Subtask) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_complex_tsv(BufReader::new(file), &path.display().to_string(), subtask)
}

/// Parse CompLex TSV from any reader. `origin` names the source in errors.
pub fn parse_complex_tsv(reader: impl BufRead, origin: &str, subtask: Subtask) -> Result<Vec<Sample>> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "missing header row"))?;
    let header = header.map_err(|e| Error::parse(origin, 1, e.to_string()))?;
    let columns: Vec<String> = header
        .trim_end_matches('\r')
        .split('\t')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let ncols = columns.len();
    if !(ncols == 4 || ncols == 5) || columns[..] != EXPECTED_HEADER[..ncols] {
        return Err(Error::parse(
            origin,
            1,
            format!("expected header id, corpus, sentence, token[, complexity], got {columns:?}"),
        ));
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != ncols {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected {ncols} columns, found {}", fields.len()),
            ));
        }
        let corpus = Corpus::parse(fields[1])
            .ok_or_else(|| Error::Validation(format!("{origin}:{lineno}: unknown corpus {:?}", fields[1])))?;
        let target =
            parse_target(fields[3], subtask).map_err(|m| Error::Validation(format!("{origin}:{lineno}: {m}")))?;
        let complexity = match fields.get(4).map(|s| s.trim()) {
            None | Some("") => None,
            Some(raw) => {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("complexity {raw:?} is not a number")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Validation(format!(
                        "{origin}:{lineno}: complexity {v} outside [0,1]"
                    )));
                }
                Some(v)
            }
        };
        samples.push(Sample {
            id: fields[0].trim().to_string(),
            corpus,
            sentence: fields[2].to_string(),
            target,
            complexity,
        });
    }
    Ok(samples)
}

fn parse_target(raw: &str, subtask: Subtask) -> std::result::Result<Target, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err("empty target".into());
    }
    match subtask {
        Subtask::Single => {
            if raw.chars().any(char::is_whitespace) {
                return Err(format!("single-word target {raw:?} contains whitespace"));
            }
            Ok(Target::Single(raw.to_string()))
        }
        Subtask::Mwe => {
            let parts: Vec<&str> = raw.split(' ').collect();
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty() || p.contains('\t')) {
                return Err(format!("MWE target {raw:?} is not two tokens separated by one space"));
            }
            Ok(Target::Mwe {
                head: parts[0].to_string(),
                tail: parts[1].to_string(),
            })
        }
    }
}

/// Removal fractions for the reduced training set, keyed by class 1..=3.
pub type RemovalFractions = BTreeMap<u8, f64>;

/// Drop `round_half_even(fraction * n_c)` samples of each class `c` listed in
/// `fractions`, uniformly at random under `seed`. Survivors keep input order.
pub fn make_reduced(train: &[Sample], fractions: &RemovalFractions, seed: u64) -> Result<Vec<Sample>> {
    for (&class, &frac) in fractions {
        if !(1..=3).contains(&class) {
            return Err(Error::Config(format!(
                "removal fraction given for class {class}; only classes 1-3 may be reduced"
            )));
        }
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::Config(format!(
                "removal fraction {frac} for class {class} outside [0,1]"
            )));
        }
    }
    let classes: Vec<u8> = train
        .iter()
        .map(|s| s.class().map(|c| c.get()))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut removed = vec![false; train.len()];
    for (&class, &frac) in fractions {
        let mut members: Vec<usize> = (0..train.len()).filter(|&i| classes[i] == class).collect();
        let n_remove = (frac * members.len() as f64).round_ties_even() as usize;
        members.shuffle(&mut rng);
        for &i in members.iter().take(n_remove) {
            removed[i] = true;
        }
    }
    Ok(train
        .iter()
        .zip(removed)
        .filter(|(_, r)| !r)
        .map(|(s, _)| s.clone())
        .collect())
}

/// One cross-validation split, as indices into the input sample list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// k-fold split stratified by (corpus, complexity class).
///
/// Strata with fewer than `k` members are pooled per corpus. Members of each
/// stratum are shuffled under `seed` and dealt round-robin, with the dealing
/// position carried across strata so fold sizes differ by at most one.
pub fn stratified_folds(train: &[Sample], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold requires k >= 2, got {k}")));
    }
    if train.len() < k {
        return Err(Error::Config(format!("{} samples cannot fill {k} folds", train.len())));
    }
    let mut strata: BTreeMap<(Corpus, u8), Vec<usize>> = BTreeMap::new();
    for (i, s) in train.iter().enumerate() {
        strata.entry((s.corpus, s.class()?.get())).or_default().push(i);
    }

    // class 0 marks a corpus-level pool of undersized strata
    let mut pooled: BTreeMap<(Corpus, u8), Vec<usize>> = BTreeMap::new();
    for ((corpus, class), members) in strata {
        if members.len() < k {
            log::warn!(
                "stratum ({corpus}, class {class}) has {} samples < k={k}; pooling with corpus {corpus}",
                members.len()
            );
            pooled.entry((corpus, 0)).or_default().extend(members);
        } else {
            pooled.insert((corpus, class), members);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; train.len()];
    let mut cursor = 0usize;
    for members in pooled.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = cursor % k;
            cursor += 1;
        }
    }

    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: usize, corpus: Corpus, label: f64) -> Sample {
        Sample {
            id: format!("s{id}"),
            corpus,
            sentence: "the cat sat".into(),
            target: Target::Single("cat".into()),
            complexity: Some(label),
        }
    }

    #[test]
    fn bins_follow_the_mapping() {
        let cases = [
            (0.0, 1),
            (0.2, 2),
            (1.0, 5),
            (0.395, 2),
            (0.79999, 4),
            (0.8, 5),
            (0.6, 4),
            (0.4, 3),
        ];
        for (label, class) in cases {
            assert_eq!(bin_complexity(label).unwrap().get(), class, "label {label}");
        }
        assert!(matches!(bin_complexity(1.01), Err(Error::Domain(_))));
        assert!(matches!(bin_complexity(-0.1), Err(Error::Domain(_))));
        assert!(bin_complexity(f64::NAN).is_err());
    }

    #[test]
    fn parses_fixture_rows() {
        let tsv = "id\tcorpus\tsentence\ttoken\tcomplexity\n\
                   a1\tbible\tAnd God said.\tGod\t0.25\n\
                   a2\tbiomed\tThe gene was expressed.\tgene\t0.5\n\
                   a3\teuroparl\tThe Council agreed.\tCouncil\t0.0\n";
        let got = parse_complex_tsv(tsv.as_bytes(), "fixture", Subtask::Single).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(
            got[1],
            Sample {
                id: "a2".into(),
                corpus: Corpus::Biomed,
                sentence: "The gene was expressed.".into(),
                target: Target::Single("gene".into()),
                complexity: Some(0.5),
            }
        );
        assert_eq!(got[2].corpus, Corpus::Europarl);
        assert_eq!(got[0].complexity, Some(0.25));
    }

    #[test]
    fn test_files_may_omit_complexity() {
        let tsv = "id\tcorpus\tsentence\ttoken\nx\tbible\tA b.\tb\n";
        let got = parse_complex_tsv(tsv.as_bytes(), "t", Subtask::Single).unwrap();
        assert_eq!(got[0].complexity, None);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_cols = "id\tcorpus\tsentence\ttoken\tcomplexity\na\tbible\tx\n";
        match parse_complex_tsv(bad_cols.as_bytes(), "f", Subtask::Single) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let out_of_range = "id\tcorpus\tsentence\ttoken\tcomplexity\na\tbible\tx y\tx\t1.01\n";
        assert!(matches!(
            parse_complex_tsv(out_of_range.as_bytes(), "f", Subtask::Single),
            Err(Error::Validation(_))
        ));
        let corpus = "id\tcorpus\tsentence\ttoken\tcomplexity\na\twiki\tx y\tx\t0.1\n";
        assert!(matches!(
            parse_complex_tsv(corpus.as_bytes(), "f", Subtask::Single),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn mwe_targets_split_on_one_space() {
        let tsv = "id\tcorpus\tsentence\ttoken\tcomplexity\na\tbiomed\tHigh blood pressure.\tblood pressure\t0.3\n";
        let got = parse_complex_tsv(tsv.as_bytes(), "f", Subtask::Mwe).unwrap();
        assert_eq!(
            got[0].target,
            Target::Mwe {
                head: "blood".into(),
                tail: "pressure".into()
            }
        );
        let double = "id\tcorpus\tsentence\ttoken\tcomplexity\na\tbiomed\tx\tblood  pressure\t0.3\n";
        assert!(parse_complex_tsv(double.as_bytes(), "f", Subtask::Mwe).is_err());
    }

    #[test]
    fn reduced_set_identity_and_total_removal() {
        let train: Vec<Sample> = (0..30)
            .map(|i| sample(i, Corpus::Bible, (i % 10) as f64 / 10.0))
            .collect();
        let zero: RemovalFractions = [(1, 0.0), (2, 0.0), (3, 0.0)].into();
        assert_eq!(make_reduced(&train, &zero, 1).unwrap(), train);

        let all1: RemovalFractions = [(1, 1.0)].into();
        let out = make_reduced(&train, &all1, 1).unwrap();
        assert!(out.iter().all(|s| s.class().unwrap().get() != 1));
        assert_eq!(out.len(), train.len() - 6);
    }

    #[test]
    fn reduced_set_removes_exact_count() {
        let train: Vec<Sample> = (0..10).map(|i| sample(i, Corpus::Biomed, 0.3)).collect();
        let half: RemovalFractions = [(2, 0.5)].into();
        let out = make_reduced(&train, &half, 7).unwrap();
        // independent count: filter on the label range directly
        let remaining = out
            .iter()
            .filter(|s| (0.2..0.4).contains(&s.complexity.unwrap()))
            .count();
        assert_eq!(remaining, 5);
    }

    #[test]
    fn reduced_set_rounds_half_to_even() {
        // 5 * 0.5 = 2.5 -> 2 ; 7 * 0.5 = 3.5 -> 4
        let five: Vec<Sample> = (0..5).map(|i| sample(i, Corpus::Bible, 0.1)).collect();
        let half: RemovalFractions = [(1, 0.5)].into();
        assert_eq!(make_reduced(&five, &half, 0).unwrap().len(), 3);
        let seven: Vec<Sample> = (0..7).map(|i| sample(i, Corpus::Bible, 0.1)).collect();
        assert_eq!(make_reduced(&seven, &half, 0).unwrap().len(), 3);
    }

    #[test]
    fn reduced_set_rejects_upper_classes() {
        let bad: RemovalFractions = [(4, 0.5)].into();
        assert!(matches!(make_reduced(&[], &bad, 0), Err(Error::Config(_))));
    }

    #[test]
    fn folds_balanced_and_deterministic() {
        let train: Vec<Sample> = (0..100)
            .map(|i| sample(i, Corpus::ALL[i % 3], (i % 50) as f64 / 50.0))
            .collect();
        let folds = stratified_folds(&train, 5, 42).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.validation.len()).collect();
        assert_eq!(sizes, vec![20; 5]);
        assert_eq!(folds, stratified_folds(&train, 5, 42).unwrap());
        assert_ne!(folds, stratified_folds(&train, 5, 43).unwrap());
    }

    #[test]
    fn small_stratum_spreads_by_pigeonhole() {
        let train: Vec<Sample> = (0..7).map(|i| sample(i, Corpus::Bible, 0.5)).collect();
        let folds = stratified_folds(&train, 5, 3).unwrap();
        for f in &folds {
            assert!((1..=2).contains(&f.validation.len()));
        }
    }

    #[test]
    fn undersized_strata_fall_back_to_corpus() {
        // two samples per class: every stratum is smaller than k=4
        let train: Vec<Sample> = (0..10)
            .map(|i| sample(i, Corpus::Europarl, (i / 2) as f64 / 5.0))
            .collect();
        let folds = stratified_folds(&train, 4, 9).unwrap();
        let mut seen = [0; 10];
        for f in &folds {
            for &i in &f.validation {
                seen[i] += 1;
            }
            assert!((2..=3).contains(&f.validation.len()));
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}
