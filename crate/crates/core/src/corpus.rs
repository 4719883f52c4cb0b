//! Document loading, cleanup, tokenization and TF-IDF featurization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::{FeatureMatrix, SparseRow};

static STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub label: String,
    pub raw: String,
}

/// Reads `<root>/<label>/<file>` into documents sorted by id.
///
/// Empty class directories are kept as classes with no documents; the
/// returned class list always contains every subdirectory name, sorted.
pub fn load_corpus(root: &Path) -> Result<(Vec<Document>, Vec<String>)> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut class_dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            class_dirs.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    class_dirs.sort();
    if class_dirs.is_empty() {
        warn!("corpus root {} has no class directories", root.display());
    }

    let mut docs = Vec::new();
    let mut classes = Vec::with_capacity(class_dirs.len());
    for (label, dir) in class_dirs {
        let mut count = 0usize;
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if !path.is_file() {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            docs.push(Document {
                id: format!("{label}/{}", entry.file_name().to_string_lossy()),
                label: label.clone(),
                raw: String::from_utf8_lossy(&bytes).into_owned(),
            });
            count += 1;
        }
        if count == 0 {
            warn!("class directory {} is empty", dir.display());
        }
        classes.push(label);
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((docs, classes))
}

fn is_header_line(line: &str) -> bool {
    let Some((key, _)) = line.split_once(':') else {
        return false;
    };
    let mut chars = key.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn is_quote_line(line: &str) -> bool {
    let tail = line.trim_end();
    line.starts_with('>')
        || line.starts_with('|')
        || tail.ends_with("writes:")
        || tail.ends_with("wrote:")
}

fn strip_once(text: &str) -> String {
    let mut lines: Vec<&str> = text.split('\n').collect();

    if lines.first().is_some_and(|l| is_header_line(l)) {
        match lines.iter().position(|l| l.trim().is_empty()) {
            Some(blank) => {
                lines.drain(..=blank);
            }
            None => lines.clear(),
        }
    }

    if let Some(sig) = lines.iter().rposition(|l| l.trim_end() == "--") {
        lines.truncate(sig);
    }

    lines.retain(|l| !is_quote_line(l));
    lines.join("\n")
}

/// Removes the message header block, quotation lines and the trailing
/// signature.
///
/// A single pass can expose new metadata (a second header-like block, an
/// earlier `--` line), so passes repeat until nothing changes. Every
/// effective pass shortens the text, which bounds the loop.
pub fn strip_metadata(raw: &str) -> String {
    let mut current = raw.to_string();
    loop {
        let next = strip_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_EN
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercased alphanumeric runs of at least two characters, minus stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    let stop = stopwords();
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some())
        .map(str::to_lowercase)
        .filter(|t| !stop.contains(t.as_str()))
        .collect()
}

/// Term index with document frequencies from the training documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    pub df: Vec<usize>,
    pub n_docs: usize,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, df: Vec<usize>, n_docs: usize) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            df,
            n_docs,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    /// Smoothed inverse document frequency, `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df[index] as f64)).ln() + 1.0
    }
}

fn term_counts(doc: &Document) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for tok in tokenize(&strip_metadata(&doc.raw)) {
        *counts.entry(tok).or_insert(0) += 1;
    }
    counts
}

/// TF-IDF featurization with L2-normalized rows.
///
/// Without `vocab` the vocabulary is built from `docs` (sorted terms, so
/// indices are reproducible); with it, terms outside the vocabulary are
/// dropped. `classes` fixes the label index order.
pub fn featurize(
    docs: &[Document],
    classes: &[String],
    vocab: Option<&Vocabulary>,
) -> Result<(FeatureMatrix, Vocabulary)> {
    let counts: Vec<BTreeMap<String, usize>> = docs.par_iter().map(term_counts).collect();

    let vocab = match vocab {
        Some(v) => v.clone(),
        None => {
            let mut df: BTreeMap<&str, usize> = BTreeMap::new();
            for c in &counts {
                for term in c.keys() {
                    *df.entry(term.as_str()).or_insert(0) += 1;
                }
            }
            if df.is_empty() {
                return Err(Error::EmptyVocabulary);
            }
            let (terms, df): (Vec<String>, Vec<usize>) =
                df.into_iter().map(|(t, d)| (t.to_string(), d)).unzip();
            Vocabulary::from_parts(terms, df, docs.len())
        }
    };

    let rows: Vec<SparseRow> = counts
        .par_iter()
        .map(|c| {
            let pairs = c
                .iter()
                .filter_map(|(t, &tf)| vocab.get(t).map(|i| (i, tf as f64 * vocab.idf(i))))
                .collect();
            let mut row = SparseRow::from_pairs(pairs);
            let norm = row.norm();
            if norm > 0.0 {
                row.values.iter_mut().for_each(|v| *v /= norm);
            }
            row
        })
        .collect();

    let labels = docs
        .iter()
        .map(|d| {
            classes
                .iter()
                .position(|c| *c == d.label)
                .ok_or_else(|| Error::Config(format!("document {} has unknown label", d.id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let matrix = FeatureMatrix {
        rows,
        n_features: vocab.len(),
        labels: Some(labels),
        class_names: classes.to_vec(),
    };
    Ok((matrix, vocab))
}

/// Train, dev and test documents after the deterministic split.
#[derive(Debug, Clone)]
pub struct DocumentSplit {
    pub classes: Vec<String>,
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub test: Vec<Document>,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub vocab: Vocabulary,
    pub train: FeatureMatrix,
    pub dev: FeatureMatrix,
    pub test: FeatureMatrix,
}

fn per_class(docs: Vec<Document>, classes: &[String]) -> Vec<Vec<Document>> {
    let mut groups = vec![Vec::new(); classes.len()];
    for d in docs {
        if let Some(c) = classes.iter().position(|c| *c == d.label) {
            groups[c].push(d);
        }
    }
    groups
}

/// Splits a corpus directory into train/dev/test.
///
/// With `<root>/train` and `<root>/test` present, dev is the last 10% of
/// each training class by id. Otherwise every class is cut 70 / 7.5 / 22.5
/// by id order. No randomness is involved either way.
pub fn split_corpus(root: &Path) -> Result<DocumentSplit> {
    let train_root = root.join("train");
    let test_root = root.join("test");
    let mut split = DocumentSplit {
        classes: Vec::new(),
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    if train_root.is_dir() && test_root.is_dir() {
        let (train, classes) = load_corpus(&train_root)?;
        let (test, test_classes) = load_corpus(&test_root)?;
        for c in &test_classes {
            if !classes.contains(c) {
                warn!("test class {c} has no training directory; its documents are ignored");
            }
        }
        for mut group in per_class(train, &classes) {
            let n_dev = group.len() / 10;
            let dev = group.split_off(group.len() - n_dev);
            split.train.extend(group);
            split.dev.extend(dev);
        }
        split.test = test.into_iter().filter(|d| classes.contains(&d.label)).collect();
        split.classes = classes;
    } else {
        let (docs, classes) = load_corpus(root)?;
        for group in per_class(docs, &classes) {
            let n = group.len();
            let n_train = n * 700 / 1000;
            let n_dev = n * 75 / 1000;
            let mut it = group.into_iter();
            split.train.extend(it.by_ref().take(n_train));
            split.dev.extend(it.by_ref().take(n_dev));
            split.test.extend(it);
        }
        split.classes = classes;
    }
    for part in [&mut split.train, &mut split.dev, &mut split.test] {
        part.sort_by(|a, b| a.id.cmp(&b.id));
    }
    Ok(split)
}

impl DocumentSplit {
    pub fn featurize(&self) -> Result<DatasetSplit> {
        let (train, vocab) = featurize(&self.train, &self.classes, None)?;
        let (dev, _) = featurize(&self.dev, &self.classes, Some(&vocab))?;
        let (test, _) = featurize(&self.test, &self.classes, Some(&vocab))?;
        Ok(DatasetSplit {
            vocab,
            train,
            dev,
            test,
        })
    }
}
