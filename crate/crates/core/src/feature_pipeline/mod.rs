//! Feature matrix assembly, preprocessing state and persistence.

mod manifest;
mod select;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complex_data::{Corpus, Sample};
use crate::error::{Error, Result};
use crate::record::{FeatureKind, FeatureRecord};

pub use manifest::{feature_manifest, FeatureGroup, FeatureManifest, CORE_FEATURES};
pub use select::{
    apply_standardizer, fit_standardizer, mi_select, mutual_information, quasi_constant_filter, PreprocessConfig,
    Preprocessor, SelectionState, StandardizerState,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: FeatureKind,
    /// Producing module or external file.
    pub source: String,
    pub is_log_variant: bool,
}

/// Named columns of reals per sample. Missing cells are stored as NaN and
/// never produced by arithmetic.
#[derive(Clone, Debug, Default)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    columns: Vec<ColumnMeta>,
    data: Vec<Vec<f64>>,
    /// Free-form provenance written into the file header.
    pub stamp: BTreeMap<String, String>,
}

impl PartialEq for FeatureMatrix {
    /// Bitwise comparison of values (so missing equals missing).
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.columns == other.columns
            && self.stamp == other.stamp
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(['\t', '\n', '\r']) {
        return Err(Error::Validation(format!("invalid column name {name:?}")));
    }
    Ok(())
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate row id {id:?}")));
            }
            if id.contains(['\t', '\n', '\r']) {
                return Err(Error::Validation(format!("invalid row id {id:?}")));
            }
        }
        Ok(FeatureMatrix {
            ids,
            ..Default::default()
        })
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Raw column values with NaN for missing cells.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|j| self.column(j))
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.data[col][row];
        (!v.is_nan()).then_some(v)
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.data[col][row].is_nan()
    }

    pub fn missing_count(&self) -> usize {
        self.data.iter().flatten().filter(|v| v.is_nan()).count()
    }

    /// Append a column; `values` uses `None` for missing.
    pub fn push_column(&mut self, meta: ColumnMeta, values: Vec<Option<f64>>) -> Result<()> {
        check_name(&meta.name)?;
        if self.column_index(&meta.name).is_some() {
            return Err(Error::Validation(format!("duplicate column {:?}", meta.name)));
        }
        if values.len() != self.ids.len() {
            return Err(Error::Validation(format!(
                "column {:?} has {} values for {} rows",
                meta.name,
                values.len(),
                self.ids.len()
            )));
        }
        self.columns.push(meta);
        self.data.push(
            values
                .into_iter()
                .map(|v| v.filter(|x| !x.is_nan()).unwrap_or(f64::NAN))
                .collect(),
        );
        Ok(())
    }

    /// Row-major copy with missing cells as NaN.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows())
            .map(|i| self.data.iter().map(|c| c[i]).collect())
            .collect()
    }

    /// Columns `names` in that order.
    pub fn select(&self, names: &[String]) -> Result<FeatureMatrix> {
        let mut out = FeatureMatrix {
            ids: self.ids.clone(),
            stamp: self.stamp.clone(),
            ..Default::default()
        };
        for n in names {
            let j = self
                .column_index(n)
                .ok_or_else(|| Error::Validation(format!("column {n:?} not in matrix")))?;
            out.columns.push(self.columns[j].clone());
            out.data.push(self.data[j].clone());
        }
        Ok(out)
    }

    /// Rows at `idx` in that order.
    pub fn subset_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            columns: self.columns.clone(),
            data: self.data.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            stamp: self.stamp.clone(),
        }
    }

    /// Single-target view of a multi-word matrix: columns ending in `suffix`
    /// lose it, columns of the other constituent are dropped, and the rest
    /// are shared.
    pub fn constituent_view(&self, suffix: &str) -> Result<FeatureMatrix> {
        let other = match suffix {
            "_head" => "_tail",
            "_tail" => "_head",
            _ => return Err(Error::Validation(format!("unknown constituent suffix {suffix:?}"))),
        };
        let mut view = FeatureMatrix {
            ids: self.ids.clone(),
            stamp: self.stamp.clone(),
            ..Default::default()
        };
        for (meta, col) in self.columns.iter().zip(&self.data) {
            if meta.name.ends_with(other) {
                continue;
            }
            let mut meta = meta.clone();
            if let Some(base) = meta.name.strip_suffix(suffix) {
                meta.name = base.to_string();
            }
            if view.column_index(&meta.name).is_some() {
                return Err(Error::Validation(format!(
                    "column {} appears twice in the {suffix} view",
                    meta.name
                )));
            }
            view.columns.push(meta);
            view.data.push(col.clone());
        }
        Ok(view)
    }

    /// Cells for `ids` from `other`, joined by id; unknown ids are missing.
    pub fn join(&mut self, other: &FeatureMatrix) -> Result<()> {
        let pos: HashMap<&str, usize> = other.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let unmatched = self.ids.iter().filter(|id| !pos.contains_key(id.as_str())).count();
        if unmatched > 0 {
            log::warn!("{unmatched} rows have no match in the joined columns");
        }
        for (j, meta) in other.columns.iter().enumerate() {
            let values = self
                .ids
                .iter()
                .map(|id| pos.get(id.as_str()).and_then(|&i| other.get(i, j)))
                .collect();
            self.push_column(meta.clone(), values)?;
        }
        Ok(())
    }

    /// Append `log1p_x` for every non-negative column `x` that is not itself
    /// a log variant.
    pub fn add_log_variants(&mut self) -> Result<()> {
        let bases: Vec<usize> = (0..self.n_cols())
            .filter(|&j| self.columns[j].kind == FeatureKind::NonNegative && !self.columns[j].is_log_variant)
            .collect();
        for j in bases {
            let meta = ColumnMeta {
                name: format!("log1p_{}", self.columns[j].name),
                kind: FeatureKind::Real,
                source: self.columns[j].source.clone(),
                is_log_variant: true,
            };
            let mut negative = 0;
            let values = self.data[j]
                .iter()
                .map(|&x| {
                    if x.is_nan() {
                        None
                    } else if x < 0.0 {
                        negative += 1;
                        None
                    } else {
                        Some(x.ln_1p())
                    }
                })
                .collect();
            if negative > 0 {
                log::warn!(
                    "{negative} negative values in {:?} left missing in its log variant",
                    self.columns[j].name
                );
            }
            self.push_column(meta, values)?;
        }
        Ok(())
    }

    pub fn write(&self, w: impl Write) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "#lcp-matrix\t1")?;
        for (k, v) in &self.stamp {
            writeln!(w, "#meta\t{k}\t{v}")?;
        }
        for c in &self.columns {
            writeln!(
                w,
                "#column\t{}\t{}\t{}\t{}",
                c.name,
                c.kind.as_str(),
                c.source,
                u8::from(c.is_log_variant)
            )?;
        }
        write!(w, "id")?;
        for c in &self.columns {
            write!(w, "\t{}", c.name)?;
        }
        writeln!(w)?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(w, "{id}")?;
            for col in &self.data {
                let v = col[i];
                if v.is_nan() {
                    write!(w, "\t")?;
                } else {
                    write!(w, "\t{v}")?;
                }
            }
            writeln!(w)?;
        }
        w.flush()
    }

    /// Read the matrix format. Files without `#column` metadata (plain
    /// external tables) get kinds inferred from their values.
    pub fn read(r: impl BufRead, origin: &str) -> Result<Self> {
        let mut stamp = BTreeMap::new();
        let mut metas: Vec<ColumnMeta> = Vec::new();
        let mut header: Option<Vec<String>> = None;
        let mut ids = Vec::new();
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.trim_end_matches('\r');
            if let Some(meta) = line.strip_prefix('#') {
                let f: Vec<&str> = meta.split('\t').collect();
                match f[0] {
                    "lcp-matrix" => {
                        if f.get(1) != Some(&"1") {
                            return Err(Error::Format(format!(
                                "{origin}: unsupported matrix version {:?}",
                                f.get(1).unwrap_or(&"")
                            )));
                        }
                    }
                    "meta" if f.len() == 3 => {
                        stamp.insert(f[1].to_string(), f[2].to_string());
                    }
                    "column" if f.len() == 5 => metas.push(ColumnMeta {
                        name: f[1].to_string(),
                        kind: FeatureKind::parse(f[2])
                            .ok_or_else(|| Error::parse(origin, lineno, format!("unknown kind {:?}", f[2])))?,
                        source: f[3].to_string(),
                        is_log_variant: f[4] == "1",
                    }),
                    _ => return Err(Error::parse(origin, lineno, "unrecognized metadata line")),
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let Some(h) = &header else {
                if f.first() != Some(&"id") {
                    return Err(Error::parse(origin, lineno, "header must start with \"id\""));
                }
                header = Some(f[1..].iter().map(|s| s.to_string()).collect());
                continue;
            };
            if f.len() != h.len() + 1 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected {} fields, found {}", h.len() + 1, f.len()),
                ));
            }
            ids.push(f[0].to_string());
            rows.push(
                f[1..]
                    .iter()
                    .map(|s| {
                        if s.is_empty() {
                            Ok(None)
                        } else {
                            s.parse::<f64>()
                                .map(Some)
                                .map_err(|_| Error::parse(origin, lineno, format!("not a number: {s:?}")))
                        }
                    })
                    .collect::<Result<_>>()?,
            );
        }
        let header = header.unwrap_or_default();
        if !metas.is_empty() {
            let names: Vec<&str> = metas.iter().map(|m| m.name.as_str()).collect();
            if names != header {
                return Err(Error::Format(format!(
                    "{origin}: column metadata does not match header"
                )));
            }
        }
        let mut m = FeatureMatrix::new(ids)?;
        m.stamp = stamp;
        for (j, name) in header.iter().enumerate() {
            let values: Vec<Option<f64>> = rows.iter().map(|r| r[j]).collect();
            let meta = match metas.get(j) {
                Some(meta) => meta.clone(),
                None => ColumnMeta {
                    name: name.clone(),
                    kind: infer_kind(&values),
                    source: "external".into(),
                    is_log_variant: false,
                },
            };
            m.push_column(meta, values)?;
        }
        Ok(m)
    }
}

fn infer_kind(values: &[Option<f64>]) -> FeatureKind {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if !present.is_empty() && present.iter().all(|&v| v == 0.0 || v == 1.0) {
        FeatureKind::Flag
    } else if present.iter().all(|&v| v >= 0.0) {
        FeatureKind::NonNegative
    } else {
        FeatureKind::Real
    }
}

pub fn persist_matrix(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    matrix.write(f).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::read(BufReader::new(f), &path.display().to_string())
}

/// Records from one extractor, aligned with the sample list.
pub struct ExtractorOutput {
    pub source: String,
    pub records: Vec<FeatureRecord>,
}

/// Join extractor records and external columns, then append log variants
/// and corpus one-hots.
pub fn assemble_matrix(
    samples: &[Sample],
    extractors: &[ExtractorOutput],
    external: &[FeatureMatrix],
) -> Result<FeatureMatrix> {
    let mut m = FeatureMatrix::new(samples.iter().map(|s| s.id.clone()).collect())?;
    for ex in extractors {
        if ex.records.len() != samples.len() {
            return Err(Error::Validation(format!(
                "extractor {} produced {} records for {} samples",
                ex.source,
                ex.records.len(),
                samples.len()
            )));
        }
        // union of names in first-seen order; absent cells are missing
        let mut order: Vec<(String, FeatureKind)> = Vec::new();
        let mut seen = HashSet::new();
        for r in &ex.records {
            for f in r.iter() {
                if seen.insert(f.name.as_str()) {
                    order.push((f.name.clone(), f.kind));
                }
            }
        }
        let lookup: Vec<HashMap<&str, Option<f64>>> = ex
            .records
            .iter()
            .map(|r| r.iter().map(|f| (f.name.as_str(), f.value)).collect())
            .collect();
        for (name, kind) in order {
            let values = lookup.iter().map(|l| l.get(name.as_str()).copied().flatten()).collect();
            m.push_column(
                ColumnMeta {
                    name,
                    kind,
                    source: ex.source.clone(),
                    is_log_variant: false,
                },
                values,
            )?;
        }
    }
    for e in external {
        m.join(e)?;
    }
    m.add_log_variants()?;
    for c in Corpus::ALL {
        m.push_column(
            ColumnMeta {
                name: format!("corpus_{}", c.as_str()),
                kind: FeatureKind::Flag,
                source: "complex_data".into(),
                is_log_variant: false,
            },
            samples
                .iter()
                .map(|s| Some(if s.corpus == c { 1.0 } else { 0.0 }))
                .collect(),
        )?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex_data::Target;

    fn sample(id: &str, corpus: Corpus) -> Sample {
        Sample {
            id: id.into(),
            corpus,
            sentence: "a b".into(),
            target: Target::Single("a".into()),
            complexity: Some(0.3),
        }
    }

    #[test]
    fn log_variant_values() {
        let mut m = FeatureMatrix::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let meta = |n: &str, kind| ColumnMeta {
            name: n.into(),
            kind,
            source: "t".into(),
            is_log_variant: false,
        };
        m.push_column(
            meta("x", FeatureKind::NonNegative),
            vec![Some(0.0), Some(std::f64::consts::E - 1.0), None],
        )
        .unwrap();
        m.push_column(meta("flag", FeatureKind::Flag), vec![Some(1.0), Some(0.0), Some(1.0)])
            .unwrap();
        m.add_log_variants().unwrap();
        assert_eq!(m.column_names(), ["x", "flag", "log1p_x"]);
        let l = m.column_by_name("log1p_x").unwrap();
        assert_eq!(l[0], 0.0);
        assert!((l[1] - 1.0).abs() < 1e-15);
        assert!(l[2].is_nan());
    }

    #[test]
    fn assembly_column_arithmetic() {
        let samples = vec![
            sample("s1", Corpus::Bible),
            sample("s2", Corpus::Biomed),
            sample("s3", Corpus::Europarl),
        ];
        let rec1 = |v: f64| {
            let mut r = FeatureRecord::new();
            r.non_negative("tf", Some(v));
            r.real("z", Some(-v));
            r
        };
        let rec2 = |v: f64| {
            let mut r = FeatureRecord::new();
            r.flag("f", Some(v > 1.0));
            r.non_negative("len", Some(v));
            r
        };
        let ex = vec![
            ExtractorOutput {
                source: "one".into(),
                records: (1..=3).map(|i| rec1(i as f64)).collect(),
            },
            ExtractorOutput {
                source: "two".into(),
                records: (1..=3).map(|i| rec2(i as f64)).collect(),
            },
        ];
        let m = assemble_matrix(&samples, &ex, &[]).unwrap();
        // 2 + 2 columns, 2 log variants, 3 corpus flags
        assert_eq!((m.n_rows(), m.n_cols()), (3, 9));
        assert_eq!(m.column_by_name("corpus_biomed").unwrap(), [0.0, 1.0, 0.0]);

        let dup = vec![
            ExtractorOutput {
                source: "one".into(),
                records: (1..=3).map(|i| rec1(i as f64)).collect(),
            },
            ExtractorOutput {
                source: "again".into(),
                records: (1..=3).map(|i| rec1(i as f64)).collect(),
            },
        ];
        assert!(assemble_matrix(&samples, &dup, &[]).is_err());
    }

    #[test]
    fn external_join_by_id() {
        let samples = vec![sample("s1", Corpus::Bible), sample("s2", Corpus::Bible)];
        let ext = FeatureMatrix::read("id\tppl\ns2\t12.5\nzz\t3\n".as_bytes(), "ext").unwrap();
        let m = assemble_matrix(&samples, &[], &[ext]).unwrap();
        let ppl = m.column_by_name("ppl").unwrap();
        assert!(ppl[0].is_nan());
        assert_eq!(ppl[1], 12.5);
        assert!(m.column_index("log1p_ppl").is_some());
    }

    #[test]
    fn persistence_round_trip() {
        let mut m = FeatureMatrix::new(vec!["a".into(), "b".into()]).unwrap();
        m.stamp.insert("seed".into(), "7".into());
        m.push_column(
            ColumnMeta {
                name: "x".into(),
                kind: FeatureKind::Real,
                source: "t".into(),
                is_log_variant: false,
            },
            vec![Some(0.1 + 0.2), None],
        )
        .unwrap();
        m.push_column(
            ColumnMeta {
                name: "log1p_y".into(),
                kind: FeatureKind::Real,
                source: "t".into(),
                is_log_variant: true,
            },
            vec![Some(-0.0), Some(1e-300)],
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = FeatureMatrix::read(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, m);
        assert!(back.is_missing(1, 0));

        let empty = FeatureMatrix::default();
        let mut buf = Vec::new();
        empty.write(&mut buf).unwrap();
        assert_eq!(FeatureMatrix::read(buf.as_slice(), "mem").unwrap(), empty);

        assert!(matches!(
            FeatureMatrix::read("#lcp-matrix\t2\nid\n".as_bytes(), "v2"),
            Err(Error::Format(_))
        ));
    }
}
