//! Tagged documents and per-dimension corpora.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_string;
pub use crate::vocab::Vocab;

/// Default number of documents per dimension corpus.
pub const DEFAULT_CORPUS_SIZE: usize = 50;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub language: String,
    pub domain: String,
    pub task: String,
}

impl Document {
    pub fn tag(&self, axis: Axis) -> &str {
        match axis {
            Axis::Language => &self.language,
            Axis::Domain => &self.domain,
            Axis::Task => &self.task,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Language,
    Domain,
    Task,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Language, Axis::Domain, Axis::Task];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Language => "language",
            Axis::Domain => "domain",
            Axis::Task => "task",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lang" | "language" => Ok(Axis::Language),
            "domain" => Ok(Axis::Domain),
            "task" => Ok(Axis::Task),
            _ => Err(Error::Invalid(format!("unknown axis `{s}`"))),
        }
    }
}

/// Fixed axis values selecting one corpus, e.g. `{language: de}` or
/// `{domain: medical, task: mcq}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub fixed: BTreeMap<Axis, String>,
}

impl DimensionSpec {
    pub fn new(pairs: impl IntoIterator<Item = (Axis, String)>) -> Self {
        Self {
            fixed: pairs.into_iter().collect(),
        }
    }

    pub fn single(axis: Axis, value: impl Into<String>) -> Self {
        Self::new([(axis, value.into())])
    }

    pub fn matches(&self, doc: &Document) -> bool {
        self.fixed.iter().all(|(a, v)| doc.tag(*a) == v)
    }

    /// `language:de`, `domain-task:medical-mcq`.
    pub fn label(&self) -> String {
        let axes: Vec<&str> = self.fixed.keys().map(|a| a.name()).collect();
        let vals: Vec<&str> = self.fixed.values().map(String::as_str).collect();
        format!("{}:{}", axes.join("-"), vals.join("-"))
    }
}

impl fmt::Display for DimensionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `lang=de` or `domain=medical,task=mcq`.
impl FromStr for DimensionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fixed = BTreeMap::new();
        for part in s.split(',') {
            let (axis, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("dimension `{part}` is not axis=value")))?;
            let axis: Axis = axis.trim().parse()?;
            let value = value.trim();
            if value.is_empty() {
                return Err(Error::Invalid(format!("dimension `{part}` has an empty value")));
            }
            if fixed.insert(axis, value.to_string()).is_some() {
                return Err(Error::Invalid(format!("axis `{}` fixed twice", axis.name())));
            }
        }
        Ok(Self { fixed })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimensionCorpus {
    pub spec: DimensionSpec,
    pub documents: Vec<Document>,
}

impl DimensionCorpus {
    pub fn label(&self) -> String {
        self.spec.label()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// One message per free axis that shows fewer than two distinct values.
    pub fn variety_warnings(&self) -> Vec<String> {
        Axis::ALL
            .iter()
            .filter(|a| !self.spec.fixed.contains_key(a))
            .filter_map(|&a| {
                let distinct: BTreeSet<&str> = self.documents.iter().map(|d| d.tag(a)).collect();
                (distinct.len() < 2).then(|| {
                    format!(
                        "corpus {}: free axis {} has {} distinct value(s)",
                        self.label(),
                        a.name(),
                        distinct.len()
                    )
                })
            })
            .collect()
    }
}

/// Parse newline-delimited JSON documents, preserving file order.
pub fn parse_documents(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = n + 1;
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if doc.text.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("document `{}` has empty text", doc.id),
            });
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    parse_documents(&read_string(path)?)
}

/// Select the documents matching every fixed axis of `spec`.
pub fn build_dimension_corpus(docs: &[Document], spec: &DimensionSpec) -> Result<DimensionCorpus> {
    if spec.fixed.is_empty() {
        return Err(Error::Invalid("at least one axis must be fixed".into()));
    }
    let documents: Vec<Document> = docs.iter().filter(|d| spec.matches(d)).cloned().collect();
    if documents.is_empty() {
        return Err(Error::EmptyCorpus(spec.label()));
    }
    let corpus = DimensionCorpus {
        spec: spec.clone(),
        documents,
    };
    for w in corpus.variety_warnings() {
        log::warn!("{w}");
    }
    if corpus.len() < DEFAULT_CORPUS_SIZE {
        log::info!(
            "corpus {} has {} documents (default target {DEFAULT_CORPUS_SIZE})",
            corpus.label(),
            corpus.len()
        );
    }
    Ok(corpus)
}

pub fn tokenize(vocab: &Vocab, text: &str) -> Vec<u32> {
    vocab.tokenize(text)
}
