use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::taxonomy::Taxonomy;
use crate::encoder::text::words;
use crate::error::{Error, Result};
use crate::numcore::kernels::cosine;

/// Static word vectors; out-of-vocabulary tokens read as zero.
#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
}

impl WordVectors {
    /// Parses `token v1 v2 ... vd` lines; every line must have the same `d`.
    pub fn parse(content: &str) -> Result<Self> {
        let mut dim = 0;
        let mut table = HashMap::new();
        for (i, line) in content.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f32> = parts
                .map(|p| {
                    p.parse::<f32>().map_err(|e| Error::Parse {
                        line: i + 1,
                        message: format!("bad value {p:?}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("token {token:?} has no values"),
                });
            }
            if dim == 0 {
                dim = values.len();
            } else if values.len() != dim {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {dim} values, found {}", values.len()),
                });
            }
            table.insert(token.to_lowercase(), values);
        }
        Ok(Self { dim, table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.table.get(token).map(Vec::as_slice)
    }

    /// Mean vector over the words of `text`, or `None` if no word is known.
    pub fn mean(&self, text: &str) -> Option<Vec<f32>> {
        let toks = words(text);
        let mut acc = vec![0.0f32; self.dim];
        let mut known = false;
        for t in &toks {
            if let Some(v) = self.table.get(t) {
                known = true;
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
        }
        if !known {
            return None;
        }
        let n = toks.len() as f32;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }
}

/// Maps a free-text product category onto a taxonomy path.
///
/// An exact (case-folded) leaf match wins outright; otherwise the path whose
/// last two labels have the most cosine-similar mean word vector is chosen,
/// ties going to the lexicographically smallest path.
pub fn map_category_to_hierarchy(
    category: &str,
    taxonomy: &Taxonomy,
    vectors: &WordVectors,
) -> Result<Vec<String>> {
    if taxonomy.paths().is_empty() {
        return Err(Error::Validation("taxonomy has no paths".into()));
    }
    let mut paths: Vec<&Vec<String>> = taxonomy.paths().iter().collect();
    paths.sort();

    let folded = category.trim().to_lowercase();
    if let Some(p) = paths
        .iter()
        .find(|p| p.last().is_some_and(|leaf| leaf.to_lowercase() == folded))
    {
        return Ok((*p).clone());
    }

    let query = vectors
        .mean(category)
        .ok_or_else(|| Error::UnmappableCategory(category.to_string()))?;
    let mut best: Option<(f32, &Vec<String>)> = None;
    for p in paths {
        let tail = p[p.len().saturating_sub(2)..].join(" ");
        let score = vectors
            .mean(&tail)
            .map(|v| cosine(&query, &v))
            .unwrap_or(0.0);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, p));
        }
    }
    Ok(best.expect("non-empty taxonomy").1.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oov_tokens_count_as_zero() {
        let wv = WordVectors::parse("red 1 0\nblue 0 1\n").unwrap();
        assert_eq!(wv.mean("red zzz").unwrap(), vec![0.5, 0.0]);
        assert!(wv.mean("zzz").is_none());
    }

    #[test]
    fn ragged_file_rejected() {
        assert!(matches!(
            WordVectors::parse("a 1 2\nb 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
