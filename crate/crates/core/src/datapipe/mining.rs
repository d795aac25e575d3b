//! Triplet miners: metadata-driven and ROUGE-L driven.

use std::thread;

use rand::Rng as _;

use super::corpus::{Corpus, Document, DomainMode, Triplet};
use super::rouge::{rouge_l, rouge_tokens};
use super::taxonomy::LEVEL_SEPARATOR;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

pub const DEFAULT_TRIPLET_COUNT: usize = 200;

/// Grouping key for category-based modes.
fn category_key(doc: &Document, mode: DomainMode) -> Option<String> {
    match mode {
        DomainMode::CustomerSupport => doc.category.clone(),
        DomainMode::Scientific => doc.primary_category().map(str::to_string),
        DomainMode::Derived => doc
            .hierarchy
            .as_ref()
            .filter(|h| !h.is_empty())
            .map(|h| h.join(LEVEL_SEPARATOR))
            .or_else(|| doc.category.clone()),
        DomainMode::Legal => None,
    }
}

/// Whether `b` may serve as a positive (`Some(true)`) or negative
/// (`Some(false)`) for anchor `a` under the corpus mode.
pub fn relation(a: &Document, b: &Document, mode: DomainMode) -> Option<bool> {
    if a.id == b.id {
        return None;
    }
    match mode {
        DomainMode::Legal => {
            let (ca, cb) = (a.concepts.as_ref()?, b.concepts.as_ref()?);
            Some(ca.intersection(cb).next().is_some())
        }
        _ => {
            let (ka, kb) = (category_key(a, mode)?, category_key(b, mode)?);
            Some(ka == kb)
        }
    }
}

/// True when `t` satisfies the mode's positive and negative constraints.
pub fn satisfies(corpus: &Corpus, t: &Triplet) -> bool {
    let (Some(a), Some(p), Some(n)) = (
        corpus.get(&t.anchor_id),
        corpus.get(&t.positive_id),
        corpus.get(&t.negative_id),
    ) else {
        return false;
    };
    p.id != n.id
        && relation(a, p, corpus.mode) == Some(true)
        && relation(a, n, corpus.mode) == Some(false)
}

struct Eligibility {
    anchors: Vec<usize>,
    positives: Vec<Vec<usize>>,
    /// Ascending indices per anchor.
    negatives: Vec<Vec<usize>>,
    /// Negatives must also be valid for the positive, so the swapped copy
    /// holds too.
    joint: bool,
}

impl Eligibility {
    fn negatives_for(&self, a: usize, p: usize) -> Vec<usize> {
        if !self.joint {
            return self.negatives[a].clone();
        }
        self.negatives[a]
            .iter()
            .copied()
            .filter(|n| self.negatives[p].binary_search(n).is_ok())
            .collect()
    }

    fn has_joint_negative(&self, a: usize, p: usize) -> bool {
        self.negatives[a]
            .iter()
            .any(|n| self.negatives[p].binary_search(n).is_ok())
    }

    /// Keeps only positives with a usable negative and anchors with a usable
    /// positive.
    fn restrict_to_joint(&mut self) {
        let n = self.positives.len();
        let filtered: Vec<Vec<usize>> = (0..n)
            .map(|a| {
                self.positives[a]
                    .iter()
                    .copied()
                    .filter(|&p| self.has_joint_negative(a, p))
                    .collect()
            })
            .collect();
        self.positives = filtered;
        let positives = &self.positives;
        self.anchors.retain(|&a| !positives[a].is_empty());
    }
}

fn sample(elig: &Eligibility, corpus: &Corpus, count: usize, double: bool, rng: &mut Rng) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(if double { 2 * count } else { count });
    for _ in 0..count {
        let a = elig.anchors[rng.random_range(0..elig.anchors.len())];
        let ps = &elig.positives[a];
        let p = ps[rng.random_range(0..ps.len())];
        let ns = elig.negatives_for(a, p);
        let n = ns[rng.random_range(0..ns.len())];
        let docs = &corpus.documents;
        let t = Triplet::new(&docs[a].id, &docs[p].id, &docs[n].id);
        if double {
            let s = t.swapped();
            out.push(t);
            out.push(s);
        } else {
            out.push(t);
        }
    }
    out
}

/// Mines `count` triplets from document metadata (doubled with swapped copies
/// in scientific and legal modes, where the negative must then be valid for
/// both anchor and positive). Anchors are uniform over documents that have at
/// least one valid positive and negative.
pub fn mine_triplets_metadata(corpus: &Corpus, count: usize, seed: u64) -> Result<Vec<Triplet>> {
    let docs = &corpus.documents;
    let n = docs.len();
    let mut positives = vec![Vec::new(); n];
    let mut negatives = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            match relation(&docs[i], &docs[j], corpus.mode) {
                Some(true) => positives[i].push(j),
                Some(false) => negatives[i].push(j),
                None => {}
            }
        }
    }
    let anchors: Vec<usize> = (0..n)
        .filter(|&i| !positives[i].is_empty() && !negatives[i].is_empty())
        .collect();
    if anchors.is_empty() {
        if negatives.iter().all(Vec::is_empty) {
            return Err(Error::NoNegativeAvailable(describe_groups(corpus)));
        }
        return Err(Error::NoPositiveAvailable(describe_groups(corpus)));
    }
    let double = corpus.mode.doubles_triplets();
    let mut elig = Eligibility {
        anchors,
        positives,
        negatives,
        joint: double,
    };
    if double {
        elig.restrict_to_joint();
        if elig.anchors.is_empty() {
            return Err(Error::NoNegativeAvailable(format!(
                "no negative is disjoint from both anchor and positive; {}",
                describe_groups(corpus)
            )));
        }
    }
    let mut rng = seeded(seed, "mining.metadata");
    Ok(sample(&elig, corpus, count, double, &mut rng))
}

fn describe_groups(corpus: &Corpus) -> String {
    let mut keys: Vec<String> = corpus
        .documents
        .iter()
        .filter_map(|d| match corpus.mode {
            DomainMode::Legal => d.concepts.as_ref().map(|c| {
                format!("{{{}}}", c.iter().cloned().collect::<Vec<_>>().join(", "))
            }),
            mode => category_key(d, mode),
        })
        .collect();
    keys.sort();
    keys.dedup();
    let what = if corpus.mode == DomainMode::Legal {
        "concept sets"
    } else {
        "categories"
    };
    format!("{what} [{}]", keys.join("; "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RougeMiningConfig {
    pub count: usize,
    pub seed: u64,
    pub pos_threshold: f64,
    pub neg_threshold: f64,
    pub truncate_tokens: usize,
    /// Worker threads for pairwise scoring; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for RougeMiningConfig {
    fn default() -> Self {
        Self {
            count: DEFAULT_TRIPLET_COUNT,
            seed: 0,
            pos_threshold: 0.35,
            neg_threshold: 0.10,
            truncate_tokens: 512,
            threads: 0,
        }
    }
}

/// Symmetric matrix of ROUGE-L F1 over all document pairs, row-major `n×n`,
/// with ones on the diagonal.
pub fn pairwise_rouge_f1(corpus: &Corpus, truncate_tokens: usize, threads: usize) -> Vec<f64> {
    let toks: Vec<Vec<String>> = corpus
        .documents
        .iter()
        .map(|d| {
            let mut t = rouge_tokens(&d.full_text());
            t.truncate(truncate_tokens);
            t
        })
        .collect();
    let n = toks.len();
    let threads = resolve_threads(threads).min(n.max(1));
    let rows: Vec<usize> = (0..n).collect();
    let chunk = n.div_ceil(threads).max(1);
    let mut partial: Vec<Vec<(usize, Vec<f64>)>> = Vec::new();
    thread::scope(|s| {
        let handles: Vec<_> = rows
            .chunks(chunk)
            .map(|rs| {
                let toks = &toks;
                s.spawn(move || {
                    rs.iter()
                        .map(|&i| {
                            let row: Vec<f64> =
                                ((i + 1)..n).map(|j| rouge_l(&toks[i], &toks[j]).f1).collect();
                            (i, row)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            partial.push(h.join().expect("scoring worker panicked"));
        }
    });
    let mut m = vec![0.0; n * n];
    for (i, row) in partial.into_iter().flatten() {
        m[i * n + i] = 1.0;
        for (k, f) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            m[i * n + j] = f;
            m[j * n + i] = f;
        }
    }
    m
}

pub(crate) fn resolve_threads(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Mines triplets for corpora without metadata: positives are documents with
/// ROUGE-L F1 at or above `pos_threshold`, negatives at or below
/// `neg_threshold`, both scored on truncated token lists.
pub fn mine_triplets_rouge(corpus: &Corpus, cfg: &RougeMiningConfig) -> Result<Vec<Triplet>> {
    if corpus.len() < 3 {
        return Err(Error::Validation(format!(
            "ROUGE-L mining needs at least 3 documents, got {}",
            corpus.len()
        )));
    }
    if cfg.pos_threshold <= cfg.neg_threshold {
        return Err(Error::Config(format!(
            "positive threshold {} must exceed negative threshold {}",
            cfg.pos_threshold, cfg.neg_threshold
        )));
    }
    if cfg.truncate_tokens == 0 {
        return Err(Error::Config("truncate_tokens must be positive".into()));
    }
    let n = corpus.len();
    let m = pairwise_rouge_f1(corpus, cfg.truncate_tokens, cfg.threads);
    let mut positives = vec![Vec::new(); n];
    let mut negatives = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let f = m[i * n + j];
            if f >= cfg.pos_threshold {
                positives[i].push(j);
            } else if f <= cfg.neg_threshold {
                negatives[i].push(j);
            }
        }
    }
    let anchors: Vec<usize> = (0..n)
        .filter(|&i| !positives[i].is_empty() && !negatives[i].is_empty())
        .collect();
    if anchors.is_empty() {
        return Err(Error::MiningExhausted(format!(
            "no document has both a positive (F1 ≥ {}) and a negative (F1 ≤ {})",
            cfg.pos_threshold, cfg.neg_threshold
        )));
    }
    let elig = Eligibility {
        anchors,
        positives,
        negatives,
        joint: false,
    };
    let mut rng = seeded(cfg.seed, "mining.rouge");
    Ok(sample(&elig, corpus, cfg.count, false, &mut rng))
}
