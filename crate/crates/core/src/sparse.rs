//! Sparse instance-by-feature matrices and their text cache format.
//!
//! The cache starts with a format line (`GRADRULES-FM v1` for feature
//! matrices, `GRADRULES-SM v1` for sign matrices), followed by a metadata
//! line, one `term<TAB>df` line per vocabulary entry and one
//! `label<TAB>idx:val idx:val ...` line per row. Values are written in
//! shortest round-trip form so a load/save cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &str = "GRADRULES-FM v1";
pub const SIGN_MAGIC: &str = "GRADRULES-SM v1";

/// Label written for rows without a gold label.
const NO_LABEL: &str = "-";

/// One sparse row: strictly increasing feature indices with their values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a row from `(index, value)` pairs, sorting by index and
    /// dropping explicit zeros.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut row = SparseRow::new();
        for (i, v) in pairs {
            if v != 0.0 {
                row.indices.push(i);
                row.values.push(v);
            }
        }
        row
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at `index`, zero when absent.
    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Instance-by-feature matrix with optional gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<SparseRow>,
    pub n_features: usize,
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(n_features: usize, class_names: Vec<String>) -> Self {
        FeatureMatrix {
            rows: Vec::new(),
            n_features,
            labels: None,
            class_names,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseRow::nnz).sum()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or(Error::MissingLabels("this operation"))
    }

    /// Checks the structural invariants: indices in range and strictly
    /// increasing, stored values nonzero and finite, labels in range.
    pub fn validate(&self) -> Result<()> {
        for (j, row) in self.rows.iter().enumerate() {
            if row.indices.len() != row.values.len() {
                return Err(Error::Shape(format!("row {j}: index/value length differ")));
            }
            for w in row.indices.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Shape(format!("row {j}: indices not increasing")));
                }
            }
            if let Some(&last) = row.indices.last() {
                if last >= self.n_features {
                    return Err(Error::Shape(format!(
                        "row {j}: feature {last} >= {}",
                        self.n_features
                    )));
                }
            }
            if row.values.iter().any(|v| *v == 0.0 || !v.is_finite()) {
                return Err(Error::Shape(format!("row {j}: zero or non-finite value")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.rows.len() {
                return Err(Error::Shape("label count differs from row count".into()));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= self.class_names.len()) {
                return Err(Error::Shape(format!("label {bad} out of range")));
            }
        }
        Ok(())
    }

    /// Renders the matrix in the cache text format.
    pub fn to_cache_string(&self, magic: &str, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        out.push_str(magic);
        out.push('\n');
        let _ = writeln!(
            out,
            "#terms={} docs={} rows={} classes={}",
            vocab.len(),
            vocab.n_docs,
            self.rows.len(),
            self.class_names.join(",")
        );
        for (term, df) in vocab.terms.iter().zip(&vocab.df) {
            let _ = writeln!(out, "{term}\t{df}");
        }
        for (j, row) in self.rows.iter().enumerate() {
            let label = match &self.labels {
                Some(l) => self.class_names[l[j]].as_str(),
                None => NO_LABEL,
            };
            out.push_str(label);
            out.push('\t');
            for (pos, (i, v)) in row.iter().enumerate() {
                if pos > 0 {
                    out.push(' ');
                }
                if magic == SIGN_MAGIC {
                    let _ = write!(out, "{i}:{}", v as i64);
                } else {
                    let _ = write!(out, "{i}:{v:?}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path, magic: &str, vocab: &Vocabulary) -> Result<()> {
        fs::write(path, self.to_cache_string(magic, vocab)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, magic: &str) -> Result<(FeatureMatrix, Vocabulary)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_cache(&text, magic)
    }

    pub fn parse_cache(text: &str, magic: &str) -> Result<(FeatureMatrix, Vocabulary)> {
        const WHAT: &str = "matrix cache";
        let mut lines = text.split('\n');
        if lines.next() != Some(magic) {
            return Err(Error::format(WHAT, format!("expected header {magic:?}")));
        }
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::format(WHAT, "missing metadata line"))?;
        let mut n_terms = None;
        let mut n_docs = None;
        let mut n_rows = None;
        let mut class_names = Vec::new();
        for field in meta.split(' ') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::format(WHAT, format!("bad metadata field {field:?}")))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::format(WHAT, format!("bad count {v:?}")))
            };
            match key {
                "terms" => n_terms = Some(parse(value)?),
                "docs" => n_docs = Some(parse(value)?),
                "rows" => n_rows = Some(parse(value)?),
                "classes" => {
                    class_names = if value.is_empty() {
                        Vec::new()
                    } else {
                        value.split(',').map(str::to_string).collect()
                    }
                }
                _ => return Err(Error::format(WHAT, format!("unknown key {key:?}"))),
            }
        }
        let (n_terms, n_docs, n_rows) = match (n_terms, n_docs, n_rows) {
            (Some(t), Some(d), Some(r)) => (t, d, r),
            _ => return Err(Error::format(WHAT, "incomplete metadata")),
        };

        let mut terms = Vec::with_capacity(n_terms);
        let mut df = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(WHAT, "truncated term list"))?;
            let (term, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(WHAT, format!("bad term line {line:?}")))?;
            terms.push(term.to_string());
            df.push(
                count
                    .parse::<usize>()
                    .map_err(|_| Error::format(WHAT, format!("bad df in {line:?}")))?,
            );
        }
        let vocab = Vocabulary::from_parts(terms, df, n_docs);

        let mut matrix = FeatureMatrix::new(n_terms, class_names);
        let mut labels = Vec::with_capacity(n_rows);
        let mut any_label = false;
        let mut any_missing = false;
        for _ in 0..n_rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(WHAT, "truncated row list"))?;
            let (label, body) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(WHAT, format!("bad row line {line:?}")))?;
            if label == NO_LABEL {
                any_missing = true;
            } else {
                any_label = true;
                let idx = matrix
                    .class_names
                    .iter()
                    .position(|c| c == label)
                    .ok_or_else(|| Error::format(WHAT, format!("unknown label {label:?}")))?;
                labels.push(idx);
            }
            let mut row = SparseRow::new();
            if !body.is_empty() {
                for item in body.split(' ') {
                    let (i, v) = item
                        .split_once(':')
                        .ok_or_else(|| Error::format(WHAT, format!("bad entry {item:?}")))?;
                    row.indices.push(
                        i.parse()
                            .map_err(|_| Error::format(WHAT, format!("bad index {i:?}")))?,
                    );
                    row.values.push(
                        v.parse()
                            .map_err(|_| Error::format(WHAT, format!("bad value {v:?}")))?,
                    );
                }
            }
            matrix.rows.push(row);
        }
        if lines.any(|l| !l.is_empty()) {
            return Err(Error::format(WHAT, "trailing content"));
        }
        if any_label && any_missing {
            return Err(Error::format(WHAT, "mixed labeled and unlabeled rows"));
        }
        // a matrix without rows counts as labeled
        if !any_missing {
            matrix.labels = Some(labels);
        }
        matrix.validate()?;
        Ok((matrix, vocab))
    }
}
