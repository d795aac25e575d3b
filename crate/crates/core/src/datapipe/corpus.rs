use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::split_sentences;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<String>,
    /// Original text when the record supplied one; paragraph breaks survive here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concepts: Option<BTreeSet<String>>,
}

impl Document {
    pub fn from_text(id: impl Into<String>, text: &str) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            sentences: split_sentences(text)?,
            text: Some(text.to_string()),
            category: None,
            hierarchy: None,
            concepts: None,
        })
    }

    /// Full text, reconstructed from sentences when no raw text was given.
    pub fn full_text(&self) -> String {
        match &self.text {
            Some(t) => t.clone(),
            None => self.sentences.join(" "),
        }
    }

    /// Label used as the category in scientific mode: the second hierarchy
    /// level when present, else the first, else the plain category.
    pub fn primary_category(&self) -> Option<&str> {
        if let Some(h) = &self.hierarchy {
            if let Some(l) = h.get(1).or_else(|| h.first()) {
                return Some(l);
            }
        }
        self.category.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    CustomerSupport,
    Scientific,
    Legal,
    Derived,
}

impl DomainMode {
    pub fn label(self) -> &'static str {
        match self {
            DomainMode::CustomerSupport => "customer_support",
            DomainMode::Scientific => "scientific",
            DomainMode::Legal => "legal",
            DomainMode::Derived => "derived",
        }
    }

    /// Whether mined triplets are emitted together with their swapped copy.
    pub fn doubles_triplets(self) -> bool {
        matches!(self, DomainMode::Scientific | DomainMode::Legal)
    }
}

impl fmt::Display for DomainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DomainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "customer_support" | "customer" => Ok(DomainMode::CustomerSupport),
            "scientific" => Ok(DomainMode::Scientific),
            "legal" => Ok(DomainMode::Legal),
            "derived" => Ok(DomainMode::Derived),
            _ => Err(Error::Config(format!("unknown domain mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub mode: DomainMode,
}

#[derive(Deserialize)]
struct Record {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    sentences: Option<Vec<String>>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    hierarchy: Option<Vec<String>>,
    #[serde(default)]
    concepts: Option<Vec<String>>,
}

impl Corpus {
    /// Builds a corpus after checking id uniqueness, non-empty documents and
    /// the metadata the mode needs.
    pub fn new(documents: Vec<Document>, mode: DomainMode) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, d) in documents.iter().enumerate() {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Validation(format!("duplicate document id {:?}", d.id)));
            }
            if d.sentences.is_empty() {
                return Err(Error::Validation(format!("document {:?} has no sentences", d.id)));
            }
            if let Some(missing) = missing_field(d, mode) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("document {:?} lacks {missing} required in {mode} mode", d.id),
                });
            }
        }
        Ok(Self { documents, mode })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&serde_json::to_string(d).expect("document serializes"));
            out.push('\n');
        }
        out
    }
}

fn missing_field(d: &Document, mode: DomainMode) -> Option<&'static str> {
    match mode {
        DomainMode::CustomerSupport if d.category.is_none() => Some("category"),
        DomainMode::Scientific if d.primary_category().is_none() => Some("category or hierarchy"),
        DomainMode::Legal if d.concepts.is_none() => Some("concepts"),
        _ => None,
    }
}

/// Parses line-delimited JSON records; blank lines are skipped.
pub fn parse_corpus(content: &str, mode: DomainMode) -> Result<Corpus> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line, message };
        let rec: Record = serde_json::from_str(raw).map_err(|e| parse_err(e.to_string()))?;
        let sentences = match (rec.sentences, &rec.text) {
            (Some(s), _) => s
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>(),
            (None, Some(t)) => split_sentences(t)
                .map_err(|_| parse_err(format!("document {:?} has empty text", rec.id)))?,
            (None, None) => {
                return Err(parse_err(format!(
                    "document {:?} needs \"text\" or \"sentences\"",
                    rec.id
                )))
            }
        };
        if sentences.is_empty() {
            return Err(parse_err(format!("document {:?} has no sentences", rec.id)));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate document id {:?} at line {line}",
                rec.id
            )));
        }
        let doc = Document {
            id: rec.id,
            sentences,
            text: rec.text,
            category: rec.category,
            hierarchy: rec.hierarchy,
            concepts: rec.concepts.map(|c| c.into_iter().collect()),
        };
        if let Some(missing) = missing_field(&doc, mode) {
            return Err(parse_err(format!(
                "document {:?} lacks {missing} required in {mode} mode",
                doc.id
            )));
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        log::warn!("corpus is empty");
    }
    Ok(Corpus {
        documents: docs,
        mode,
    })
}

pub fn load_corpus(path: impl AsRef<Path>, mode: DomainMode) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&content, mode)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor_id: String,
    pub positive_id: String,
    pub negative_id: String,
}

impl Triplet {
    pub fn new(a: &str, p: &str, n: &str) -> Self {
        Self {
            anchor_id: a.into(),
            positive_id: p.into(),
            negative_id: n.into(),
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            anchor_id: self.positive_id.clone(),
            positive_id: self.anchor_id.clone(),
            negative_id: self.negative_id.clone(),
        }
    }
}

pub fn write_triplets(path: impl AsRef<Path>, triplets: &[Triplet]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for t in triplets {
        let line = serde_json::to_string(t).expect("triplet serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_triplets(path: impl AsRef<Path>) -> Result<Vec<Triplet>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
