use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEVEL_SEPARATOR: &str = " > ";

/// Class vocabularies per level plus the set of known root→leaf paths.
///
/// Level `ℓ` has classes `0..C_ℓ` in first-appearance order; index `C_ℓ` is
/// the null class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    levels: Vec<Vec<String>>,
    paths: Vec<Vec<String>>,
    #[serde(skip)]
    index: Vec<HashMap<String, usize>>,
}

/// Per-level class indices, exactly one per taxonomy level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HierarchyLabels {
    pub levels: Vec<usize>,
}

impl Taxonomy {
    pub fn from_paths(paths: Vec<Vec<String>>) -> Result<Self> {
        let depth = paths.iter().map(Vec::len).max().unwrap_or(0);
        let mut levels: Vec<Vec<String>> = vec![Vec::new(); depth];
        let mut index: Vec<HashMap<String, usize>> = vec![HashMap::new(); depth];
        let mut unique = BTreeSet::new();
        let mut kept = Vec::new();
        for path in paths {
            if path.is_empty() {
                continue;
            }
            if let Some(bad) = path.iter().find(|l| l.trim().is_empty() || l.contains(LEVEL_SEPARATOR)) {
                return Err(Error::Validation(format!("invalid taxonomy label {bad:?}")));
            }
            for (l, label) in path.iter().enumerate() {
                if !index[l].contains_key(label) {
                    index[l].insert(label.clone(), levels[l].len());
                    levels[l].push(label.clone());
                }
            }
            if unique.insert(path.clone()) {
                kept.push(path);
            }
        }
        Ok(Self {
            levels,
            paths: kept,
            index,
        })
    }

    /// Parses one path per line with levels separated by `" > "`.
    pub fn parse(content: &str) -> Result<Self> {
        let mut paths = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let path: Vec<String> = line.split(LEVEL_SEPARATOR).map(|s| s.trim().to_string()).collect();
            if path.iter().any(String::is_empty) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty taxonomy level".into(),
                });
            }
            paths.push(path);
        }
        Self::from_paths(paths)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            out.push_str(&p.join(LEVEL_SEPARATOR));
            out.push('\n');
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn class_count(&self, level: usize) -> usize {
        self.levels[level].len()
    }

    /// Real class counts per level, the widths the heads need minus null.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn null_index(&self, level: usize) -> usize {
        self.levels[level].len()
    }

    pub fn index_of(&self, level: usize, label: &str) -> Option<usize> {
        if self.index.len() != self.levels.len() {
            // deserialized without the lookup table
            return self.levels.get(level)?.iter().position(|l| l == label);
        }
        self.index.get(level)?.get(label).copied()
    }

    pub fn label(&self, level: usize, index: usize) -> Option<&str> {
        self.levels.get(level)?.get(index).map(String::as_str)
    }

    pub fn labels(&self, level: usize) -> &[String] {
        &self.levels[level]
    }

    pub fn paths(&self) -> &[Vec<String>] {
        &self.paths
    }

    fn is_known_prefix(&self, prefix: &[String]) -> bool {
        prefix.is_empty() || self.paths.iter().any(|p| p.starts_with(prefix))
    }

    /// Converts a (possibly partial) root→leaf path to per-level indices,
    /// filling the remaining levels with null.
    pub fn pad_hierarchy(&self, path: &[String]) -> Result<HierarchyLabels> {
        if path.len() > self.depth() {
            return Err(Error::Validation(format!(
                "path of length {} exceeds taxonomy depth {}",
                path.len(),
                self.depth()
            )));
        }
        let mut levels = Vec::with_capacity(self.depth());
        for (l, label) in path.iter().enumerate() {
            let idx = self.index_of(l, label).ok_or_else(|| {
                Error::Validation(format!("label {label:?} not in level {} vocabulary", l + 1))
            })?;
            levels.push(idx);
        }
        if !self.is_known_prefix(path) {
            return Err(Error::Validation(format!(
                "path {:?} is not a prefix of any taxonomy path",
                path.join(LEVEL_SEPARATOR)
            )));
        }
        for l in path.len()..self.depth() {
            levels.push(self.null_index(l));
        }
        Ok(HierarchyLabels { levels })
    }
}

impl HierarchyLabels {
    /// Indices before the first null.
    pub fn strip_nulls(&self, taxonomy: &Taxonomy) -> Vec<usize> {
        self.levels
            .iter()
            .enumerate()
            .take_while(|&(l, &i)| i != taxonomy.null_index(l))
            .map(|(_, &i)| i)
            .collect()
    }

    /// True when no real class follows a null.
    pub fn is_gapless(&self, taxonomy: &Taxonomy) -> bool {
        let mut seen_null = false;
        for (l, &i) in self.levels.iter().enumerate() {
            let null = i == taxonomy.null_index(l);
            if seen_null && !null {
                return false;
            }
            seen_null |= null;
        }
        true
    }
}
