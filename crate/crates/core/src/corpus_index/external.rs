use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::FeatureRecord;

use super::remote::NgramCountSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqSource {
    Subtlexus,
    Bnc,
    GoogleLocal,
}

/// SUBTLEXus columns emitted as features, in output order.
pub const SUBTLEX_FIELDS: [&str; 6] = ["FREQcount", "CDcount", "FREQlow", "CDlow", "SUBTLWF", "SUBTLCD"];

/// A word (or phrase) frequency list with one or more numeric fields.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalFreqTable {
    source: FreqSource,
    fields: Vec<String>,
    records: HashMap<String, Vec<f64>>,
}

impl ExternalFreqTable {
    pub fn new(source: FreqSource, fields: Vec<String>) -> Self {
        ExternalFreqTable {
            source,
            fields,
            records: HashMap::new(),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let key = key.into();
        if values.len() != self.fields.len() {
            return Err(Error::Validation(format!(
                "record for {key:?} has {} values, table has {} fields",
                values.len(),
                self.fields.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!(
                "negative or non-finite value {v} for {key:?}"
            )));
        }
        self.records.insert(key, values);
        Ok(())
    }

    pub fn source(&self) -> FreqSource {
        self.source
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.records.get(key).map(Vec::as_slice)
    }

    pub fn field(&self, key: &str, field: &str) -> Option<f64> {
        let i = self.fields.iter().position(|f| f == field)?;
        self.records.get(key).map(|r| r[i])
    }

    /// Exact-case lookup, then lowercase. The flag is true for exact hits.
    pub fn lookup_cased(&self, word: &str) -> Option<(&[f64], bool)> {
        if let Some(r) = self.get(word) {
            return Some((r, true));
        }
        let lower = word.to_lowercase();
        self.get(&lower).map(|r| (r, false))
    }
}

impl NgramCountSource for ExternalFreqTable {
    fn ngram_count(&self, phrase: &str) -> Option<f64> {
        Some(self.get(phrase).map(|r| r[0]).unwrap_or(0.0))
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(path, e)))))
}

fn parse_count(origin: &str, line: usize, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(origin, line, format!("not a number: {raw:?}")))
}

/// Load SUBTLEXus from its tab-separated release (header row with `Word`
/// and the frequency columns; header matching ignores case).
pub fn load_subtlexus(path: impl AsRef<Path>) -> Result<ExternalFreqTable> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let mut lines = open_lines(path)?;
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(&origin, 1, "empty SUBTLEXus file"))?;
    let header: Vec<String> = header?
        .trim_end_matches('\r')
        .split('\t')
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let word_col = header
        .iter()
        .position(|h| h == "word")
        .ok_or_else(|| Error::parse(&origin, 1, "no Word column"))?;
    let cols: Vec<usize> = SUBTLEX_FIELDS
        .iter()
        .map(|f| {
            header
                .iter()
                .position(|h| *h == f.to_ascii_lowercase())
                .ok_or_else(|| Error::parse(&origin, 1, format!("missing column {f}")))
        })
        .collect::<Result<_>>()?;

    let mut table = ExternalFreqTable::new(
        FreqSource::Subtlexus,
        SUBTLEX_FIELDS.iter().map(|s| s.to_string()).collect(),
    );
    for (lineno, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(Error::parse(
                &origin,
                lineno,
                format!("expected {} columns, found {}", header.len(), fields.len()),
            ));
        }
        let values = cols
            .iter()
            .map(|&c| parse_count(&origin, lineno, fields[c]))
            .collect::<Result<Vec<_>>>()?;
        table.insert(fields[word_col].trim(), values)?;
    }
    Ok(table)
}

fn load_two_column(path: &Path, source: FreqSource, field: &str) -> Result<ExternalFreqTable> {
    let origin = path.display().to_string();
    let mut table = ExternalFreqTable::new(source, vec![field.to_string()]);
    for (lineno, line) in open_lines(path)? {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, count)) = line.rsplit_once('\t') else {
            return Err(Error::parse(&origin, lineno, "expected key<TAB>count"));
        };
        let value = match parse_count(&origin, lineno, count) {
            Ok(v) => v,
            // tolerate a header row
            Err(_) if lineno == 1 => continue,
            Err(e) => return Err(e),
        };
        // repeated keys (e.g. one row per part of speech) are summed
        let total = table.get(key).map(|r| r[0]).unwrap_or(0.0) + value;
        table.insert(key, vec![total])?;
    }
    Ok(table)
}

/// `word<TAB>count` list.
pub fn load_bnc(path: impl AsRef<Path>) -> Result<ExternalFreqTable> {
    load_two_column(path.as_ref(), FreqSource::Bnc, "count")
}

/// `phrase<TAB>count` table of n-gram counts standing in for the remote service.
pub fn load_google_local(path: impl AsRef<Path>) -> Result<ExternalFreqTable> {
    load_two_column(path.as_ref(), FreqSource::GoogleLocal, "count")
}

/// SUBTLEXus fields and BNC frequency for `target`. Absent words give zeros
/// with the matching `_missing` flag set; a missing table gives missing cells.
pub fn external_frequency_features(tables: &[ExternalFreqTable], target: &str) -> FeatureRecord {
    let mut rec = FeatureRecord::new();
    let subtlex = tables.iter().find(|t| t.source == FreqSource::Subtlexus);
    match subtlex {
        Some(t) => {
            let hit = t.lookup_cased(target);
            for (i, f) in SUBTLEX_FIELDS.iter().enumerate() {
                rec.non_negative(*f, Some(hit.map(|(r, _)| r[i]).unwrap_or(0.0)));
            }
            rec.flag("subtlex_missing", Some(hit.is_none()));
            rec.flag("subtlex_exact_case", Some(hit.is_some_and(|(_, exact)| exact)));
        }
        None => {
            for f in SUBTLEX_FIELDS {
                rec.non_negative(f, None);
            }
            rec.flag("subtlex_missing", None);
            rec.flag("subtlex_exact_case", None);
        }
    }
    match tables.iter().find(|t| t.source == FreqSource::Bnc) {
        Some(t) => {
            let hit = t.lookup_cased(target);
            rec.non_negative("bnc_frequency", Some(hit.map(|(r, _)| r[0]).unwrap_or(0.0)));
            rec.flag("bnc_missing", Some(hit.is_none()));
        }
        None => {
            rec.non_negative("bnc_frequency", None);
            rec.flag("bnc_missing", None);
        }
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn subtlex_fixture() -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("subtlex.txt");
        let mut f = File::create(&p).unwrap();
        writeln!(
            f,
            "Word\tFREQcount\tCDcount\tFREQlow\tCdlow\tSUBTLWF\tLg10WF\tSUBTLCD\tLg10CD"
        )
        .unwrap();
        writeln!(f, "cat\t10\t4\t9\t3\t0.2\t1.04\t0.5\t0.7").unwrap();
        writeln!(f, "paris\t30\t12\t30\t12\t0.6\t1.49\t1.5\t1.1").unwrap();
        writeln!(f, "NATO\t5\t2\t0\t0\t0.1\t0.78\t0.2\t0.4").unwrap();
        (dir, p)
    }

    #[test]
    fn subtlex_fields_by_header_name() {
        let (_d, p) = subtlex_fixture();
        let t = load_subtlexus(&p).unwrap();
        assert_eq!(t.field("cat", "FREQcount"), Some(10.0));
        assert_eq!(t.field("cat", "CDlow"), Some(3.0));
        assert_eq!(t.field("cat", "SUBTLCD"), Some(0.5));
    }

    #[test]
    fn features_present_absent_and_lowercase_fallback() {
        let (_d, p) = subtlex_fixture();
        let t = load_subtlexus(&p).unwrap();
        let tables = [t];

        let rec = external_frequency_features(&tables, "cat");
        assert_eq!(rec.get("FREQcount"), Some(Some(10.0)));
        assert_eq!(rec.get("subtlex_exact_case"), Some(Some(1.0)));

        let rec = external_frequency_features(&tables, "zyzzyva");
        for f in SUBTLEX_FIELDS {
            assert_eq!(rec.get(f), Some(Some(0.0)));
        }
        assert_eq!(rec.get("subtlex_missing"), Some(Some(1.0)));
        // no BNC table supplied: cells missing, not zero
        assert_eq!(rec.get("bnc_frequency"), Some(None));

        let rec = external_frequency_features(&tables, "Paris");
        assert_eq!(rec.get("FREQlow"), Some(Some(30.0)));
        assert_eq!(rec.get("subtlex_exact_case"), Some(Some(0.0)));
        assert_eq!(rec.get("subtlex_missing"), Some(Some(0.0)));
    }

    #[test]
    fn two_column_tables_sum_duplicates_and_skip_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bnc.tsv");
        std::fs::write(&p, "word\tcount\nrun\t3\nrun\t4\nthe\t100\n").unwrap();
        let t = load_bnc(&p).unwrap();
        assert_eq!(t.field("run", "count"), Some(7.0));
        let rec = external_frequency_features(&[t], "The");
        assert_eq!(rec.get("bnc_frequency"), Some(Some(100.0)));
    }

    #[test]
    fn negative_counts_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        std::fs::write(&p, "a b\t-1\n").unwrap();
        assert!(matches!(load_google_local(&p), Err(Error::Validation(_))));
    }
}
