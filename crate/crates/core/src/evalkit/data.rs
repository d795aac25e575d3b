//! Fine-tuning datasets and their token-path encodings.
//!
//! Record formats, one JSON object per line:
//!
//! * span extraction: `{"question": str, "context": str, "answer": [start, end] | null}`
//!   where the span indexes context words inclusively;
//! * token classification: `{"tokens": [str], "labels": [int]}`;
//! * pair classification: `{"a": str, "b": str, "label": 0 | 1}`.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::metrics::Span;
use crate::encoder::text::words;
use crate::encoder::{Tokenizer, CLS_ID, SEP_ID};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanQaExample {
    pub question: Vec<String>,
    pub context: Vec<String>,
    /// Inclusive word span in `context`; `None` when unanswerable.
    pub answer: Option<(usize, usize)>,
}

impl SpanQaExample {
    pub fn new(question: &str, context: &str, answer: Option<(usize, usize)>) -> Result<Self> {
        let ex = Self {
            question: words(question),
            context: words(context),
            answer,
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context.is_empty() {
            return Err(Error::Validation("empty context".into()));
        }
        if let Some((s, e)) = self.answer {
            if s > e || e >= self.context.len() {
                return Err(Error::Validation(format!(
                    "answer span ({s}, {e}) invalid for a context of {} words",
                    self.context.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub tokens: Vec<String>,
    pub labels: Vec<usize>,
}

impl LabeledSequence {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.tokens.is_empty() || self.tokens.len() != self.labels.len() {
            return Err(Error::Validation(format!(
                "{} tokens but {} labels",
                self.tokens.len(),
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairExample {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub label: usize,
}

impl PairExample {
    pub fn new(a: &str, b: &str, label: usize) -> Result<Self> {
        let ex = Self {
            a: words(a),
            b: words(b),
            label,
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::Validation(format!("pair label {} is not 0/1", self.label)));
        }
        if self.a.is_empty() || self.b.is_empty() {
            return Err(Error::Validation("empty pair member".into()));
        }
        Ok(())
    }
}

/// Token ids of one example with its supervision in input positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSpan {
    pub ids: Vec<usize>,
    pub target: Span,
    /// Input positions holding context words.
    pub context: (usize, usize),
}

fn ids_of(tok: &Tokenizer, words: &[String]) -> Vec<usize> {
    words.iter().map(|w| tok.word_id(&w.to_lowercase())).collect()
}

/// `[CLS] question [SEP] context`, truncating the context to fit
/// `max_positions`. An answer cut off by truncation becomes no-answer.
pub fn encode_span(tok: &Tokenizer, ex: &SpanQaExample, max_positions: usize) -> Result<EncodedSpan> {
    let mut ids = vec![CLS_ID];
    ids.extend(ids_of(tok, &ex.question));
    ids.push(SEP_ID);
    let offset = ids.len();
    if offset >= max_positions {
        return Err(Error::Length {
            len: offset + 1,
            max: max_positions,
        });
    }
    let room = max_positions - offset;
    let keep = ex.context.len().min(room);
    if keep < ex.context.len() {
        log::warn!(
            "context of {} words truncated to {keep} to fit {max_positions} positions",
            ex.context.len()
        );
    }
    ids.extend(ids_of(tok, &ex.context[..keep]));
    let target = match ex.answer {
        Some((s, e)) if e < keep => (offset + s, offset + e),
        _ => (0, 0),
    };
    Ok(EncodedSpan {
        ids,
        target,
        context: (offset, offset + keep),
    })
}

/// `[CLS] tokens`, with labels shifted to input positions `1..`.
pub fn encode_tagged(
    tok: &Tokenizer,
    ex: &LabeledSequence,
    max_positions: usize,
) -> (Vec<usize>, Vec<usize>) {
    let keep = ex.tokens.len().min(max_positions.saturating_sub(1));
    if keep < ex.tokens.len() {
        log::warn!("sequence of {} tokens truncated to {keep}", ex.tokens.len());
    }
    let mut ids = vec![CLS_ID];
    ids.extend(ids_of(tok, &ex.tokens[..keep]));
    (ids, ex.labels[..keep].to_vec())
}

/// `[CLS] a [SEP] b`, truncated to `max_positions`.
pub fn encode_pair(tok: &Tokenizer, ex: &PairExample, max_positions: usize) -> Vec<usize> {
    let mut ids = vec![CLS_ID];
    ids.extend(ids_of(tok, &ex.a));
    ids.push(SEP_ID);
    ids.extend(ids_of(tok, &ex.b));
    if ids.len() > max_positions {
        log::warn!("pair of {} positions truncated to {max_positions}", ids.len());
        ids.truncate(max_positions);
    }
    ids
}

#[derive(Deserialize, Serialize)]
struct SpanRecord {
    question: String,
    context: String,
    answer: Option<(usize, usize)>,
}

#[derive(Deserialize, Serialize)]
struct TaggedRecord {
    tokens: Vec<String>,
    labels: Vec<usize>,
}

#[derive(Deserialize, Serialize)]
struct PairRecord {
    a: String,
    b: String,
    label: usize,
}

fn read_jsonl<R: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, R)>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|r| (i + 1, r))
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

fn at_line<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Validation(m) => Error::Parse { line, message: m },
        other => other,
    })
}

pub fn load_span_examples(path: impl AsRef<Path>) -> Result<Vec<SpanQaExample>> {
    read_jsonl::<SpanRecord>(path.as_ref())?
        .into_iter()
        .map(|(line, r)| at_line(line, SpanQaExample::new(&r.question, &r.context, r.answer)))
        .collect()
}

pub fn load_tagged(path: impl AsRef<Path>, num_classes: usize) -> Result<Vec<LabeledSequence>> {
    read_jsonl::<TaggedRecord>(path.as_ref())?
        .into_iter()
        .map(|(line, r)| {
            let ex = LabeledSequence {
                tokens: r.tokens,
                labels: r.labels,
            };
            at_line(line, ex.validate(num_classes)).map(|_| ex)
        })
        .collect()
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<PairExample>> {
    read_jsonl::<PairRecord>(path.as_ref())?
        .into_iter()
        .map(|(line, r)| at_line(line, PairExample::new(&r.a, &r.b, r.label)))
        .collect()
}

/// Serializes span examples in the loader's record format.
pub fn span_jsonl(examples: &[SpanQaExample]) -> String {
    examples
        .iter()
        .map(|e| {
            serde_json::to_string(&SpanRecord {
                question: e.question.join(" "),
                context: e.context.join(" "),
                answer: e.answer,
            })
            .expect("record serializes")
                + "\n"
        })
        .collect()
}

pub fn tagged_jsonl(examples: &[LabeledSequence]) -> String {
    examples
        .iter()
        .map(|e| {
            serde_json::to_string(&TaggedRecord {
                tokens: e.tokens.clone(),
                labels: e.labels.clone(),
            })
            .expect("record serializes")
                + "\n"
        })
        .collect()
}

pub fn pair_jsonl(examples: &[PairExample]) -> String {
    examples
        .iter()
        .map(|e| {
            serde_json::to_string(&PairRecord {
                a: e.a.join(" "),
                b: e.b.join(" "),
                label: e.label,
            })
            .expect("record serializes")
                + "\n"
        })
        .collect()
}
