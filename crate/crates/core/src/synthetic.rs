//! Seeded synthetic corpora and task sets with planted lexical structure.

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::datapipe::{Corpus, Document, DomainMode, Taxonomy};
use crate::error::Result;
use crate::rng::{seeded, Rng};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "po", "si", "ve", "da", "go", "hu", "ji", "be", "fa", "zo",
    "wi", "xe", "cu", "ny", "pe", "qa", "ri", "so",
];

/// Two-level taxonomy the synthetic categories sit under.
pub const CATEGORY_PATHS: [[&str; 2]; 4] = [
    ["Electronics", "Audio"],
    ["Home", "Kitchen"],
    ["Home", "Garden"],
    ["Electronics", "Cameras"],
];

pub const SPAN_OPEN: &str = "qqopen";
pub const SPAN_CLOSE: &str = "qqclose";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub categories: usize,
    pub docs_per_category: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub words_per_sentence: usize,
    pub topic_words_per_category: usize,
    pub common_words: usize,
    /// Probability that a word is drawn from the category vocabulary.
    pub topic_ratio: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            categories: 3,
            docs_per_category: 20,
            min_sentences: 3,
            max_sentences: 6,
            words_per_sentence: 8,
            topic_words_per_category: 24,
            common_words: 40,
            topic_ratio: 0.5,
            seed: 0,
        }
    }
}

fn pseudo_word(rng: &mut Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
        .collect()
}

/// Disjoint vocabularies: one per category, then the common pool.
pub fn vocabularies(cfg: &SyntheticConfig) -> (Vec<Vec<String>>, Vec<String>) {
    let mut rng = seeded(cfg.seed, "synthetic.vocab");
    let mut seen = std::collections::HashSet::new();
    let mut fresh = |rng: &mut Rng| loop {
        let w = pseudo_word(rng, 3);
        if w != SPAN_OPEN && w != SPAN_CLOSE && seen.insert(w.clone()) {
            return w;
        }
    };
    let topics = (0..cfg.categories)
        .map(|_| (0..cfg.topic_words_per_category).map(|_| fresh(&mut rng)).collect())
        .collect();
    let common = (0..cfg.common_words).map(|_| fresh(&mut rng)).collect();
    (topics, common)
}

fn sentence(rng: &mut Rng, topic: &[String], common: &[String], n: usize, ratio: f64) -> String {
    let mut words: Vec<String> = (0..n)
        .map(|_| {
            let pool = if rng.random::<f64>() < ratio { topic } else { common };
            pool.choose(rng).expect("non-empty vocabulary").clone()
        })
        .collect();
    let mut first = words[0].chars();
    words[0] = match first.next() {
        Some(c) => c.to_uppercase().chain(first).collect(),
        None => String::new(),
    };
    format!("{}.", words.join(" "))
}

fn category_path(c: usize) -> Vec<String> {
    let p = &CATEGORY_PATHS[c % CATEGORY_PATHS.len()];
    let mut path = vec![p[0].to_string(), p[1].to_string()];
    if c >= CATEGORY_PATHS.len() {
        path[1] = format!("{} {}", p[1], c / CATEGORY_PATHS.len() + 1);
    }
    path
}

/// Taxonomy covering the first `categories` synthetic categories.
pub fn taxonomy(categories: usize) -> Result<Taxonomy> {
    Taxonomy::from_paths((0..categories).map(category_path).collect())
}

/// A corpus whose documents mix category-specific and shared words. Document
/// `i` of category `c` has id `c{c}-d{i}`.
pub fn corpus(cfg: &SyntheticConfig, mode: DomainMode) -> Result<Corpus> {
    let (topics, common) = vocabularies(cfg);
    let mut rng = seeded(cfg.seed, "synthetic.docs");
    let mut docs = Vec::new();
    for i in 0..cfg.docs_per_category {
        for (c, topic) in topics.iter().enumerate() {
            let n = rng.random_range(cfg.min_sentences..=cfg.max_sentences.max(cfg.min_sentences));
            let sentences: Vec<String> = (0..n)
                .map(|_| sentence(&mut rng, topic, &common, cfg.words_per_sentence, cfg.topic_ratio))
                .collect();
            let path = category_path(c);
            docs.push(Document {
                id: format!("c{c}-d{i}"),
                text: Some(sentences.join(" ")),
                sentences,
                category: Some(path[1].clone()),
                hierarchy: Some(path),
                concepts: Some([format!("concept-{c}")].into_iter().collect()),
            });
        }
    }
    Corpus::new(docs, mode)
}

/// Category index of a synthetic document id.
pub fn category_of(id: &str) -> Option<usize> {
    id.strip_prefix('c')?.split('-').next()?.parse().ok()
}

/// One span-extraction example: question and context words, and the inclusive
/// answer span over context word positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanExample {
    pub question: String,
    pub context: String,
    pub answer: Option<(usize, usize)>,
}

/// Contexts of shared-vocabulary words where the answer is the stretch from
/// an opening marker word to a closing one, markers included. Every fifth
/// example carries no markers and is unanswerable.
pub fn span_task(cfg: &SyntheticConfig, count: usize, context_words: usize, seed: u64) -> Vec<SpanExample> {
    let (_, common) = vocabularies(cfg);
    let mut rng = seeded(seed, "synthetic.span");
    (0..count)
        .map(|i| {
            let mut words: Vec<String> = (0..context_words)
                .map(|_| common.choose(&mut rng).expect("non-empty").clone())
                .collect();
            let answer = if i % 5 == 4 {
                None
            } else {
                let len = rng.random_range(3..=5.min(context_words));
                let start = rng.random_range(0..=context_words - len);
                let end = start + len - 1;
                words[start] = SPAN_OPEN.into();
                words[end] = SPAN_CLOSE.into();
                Some((start, end))
            };
            SpanExample {
                question: "where is the marked span".into(),
                context: words.join(" "),
                answer,
            }
        })
        .collect()
}

/// Word-level tagging where every word carries the category of its document.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedText {
    pub text: String,
    pub labels: Vec<usize>,
}

pub fn tagging_task(cfg: &SyntheticConfig, per_category: usize, seed: u64) -> Vec<TaggedText> {
    let (topics, common) = vocabularies(cfg);
    let mut rng = seeded(seed, "synthetic.tagging");
    let mut out = Vec::new();
    for _ in 0..per_category {
        for (c, topic) in topics.iter().enumerate() {
            let s = sentence(&mut rng, topic, &common, cfg.words_per_sentence, cfg.topic_ratio);
            let n = crate::encoder::text::words(&s).len();
            out.push(TaggedText {
                text: s,
                labels: vec![c; n],
            });
        }
    }
    out
}

/// Sentence pairs labelled 1 when both come from the same category.
#[derive(Debug, Clone, PartialEq)]
pub struct TextPair {
    pub a: String,
    pub b: String,
    pub label: usize,
}

pub fn pair_task(cfg: &SyntheticConfig, count: usize, seed: u64) -> Vec<TextPair> {
    let (topics, common) = vocabularies(cfg);
    let mut rng = seeded(seed, "synthetic.pairs");
    (0..count)
        .map(|i| {
            let ca = rng.random_range(0..topics.len());
            let same = i % 2 == 0;
            let cb = if same || topics.len() < 2 {
                ca
            } else {
                (ca + rng.random_range(1..topics.len())) % topics.len()
            };
            let n = cfg.words_per_sentence;
            TextPair {
                a: sentence(&mut rng, &topics[ca], &common, n, cfg.topic_ratio),
                b: sentence(&mut rng, &topics[cb], &common, n, cfg.topic_ratio),
                label: usize::from(ca == cb),
            }
        })
        .collect()
}
