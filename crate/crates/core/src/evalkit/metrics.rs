use serde::{Deserialize, Serialize};

/// `matrix[gold][pred]` counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, gold: &[usize], pred: &[usize]) -> Self {
        let mut m = Self::new(classes);
        for (&g, &p) in gold.iter().zip(pred) {
            m.add(g, p);
        }
        m
    }

    pub fn add(&mut self, gold: usize, pred: usize) {
        self.counts[gold][pred] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// `2·TP / (2·TP + FP + FN)`; 0 when the class never occurs nor is predicted.
    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.counts[class][class];
        let fn_ = self.support(class) - tp;
        let fp = (0..self.classes).map(|g| self.counts[g][class]).sum::<u64>() - tp;
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }

    /// Mean per-class F1 over classes that occur in the gold labels.
    pub fn macro_f1(&self) -> f64 {
        let present: Vec<usize> = (0..self.classes).filter(|&c| self.support(c) > 0).collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().map(|&c| self.f1(c)).sum::<f64>() / present.len() as f64
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let correct: u64 = (0..self.classes).map(|c| self.counts[c][c]).sum();
        correct as f64 / total as f64
    }
}

pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Inclusive token span; `(0, 0)` marks "no answer".
pub type Span = (usize, usize);

/// Token-overlap F1 between two inclusive spans, with the no-answer span
/// scoring 1 only against itself.
pub fn span_f1(pred: Span, gold: Span) -> f64 {
    let none = (0, 0);
    if pred == none || gold == none {
        return f64::from(u8::from(pred == gold));
    }
    let lo = pred.0.max(gold.0);
    let hi = pred.1.min(gold.1);
    if hi < lo {
        return 0.0;
    }
    let overlap = (hi - lo + 1) as f64;
    let p = overlap / (pred.1 - pred.0 + 1) as f64;
    let r = overlap / (gold.1 - gold.0 + 1) as f64;
    2.0 * p * r / (p + r)
}

/// Highest-scoring span `(s, e)` with `s ≤ e` inside `lo..hi`, or the
/// no-answer slot when its score `start[0] + end[0]` is at least as high.
pub fn best_span(start: &[f32], end: &[f32], lo: usize, hi: usize) -> Span {
    let mut best = (0, 0);
    let mut best_score = start[0] + end[0];
    for (s, &sv) in start.iter().enumerate().take(hi).skip(lo) {
        for (e, &ev) in end.iter().enumerate().take(hi).skip(s) {
            let score = sv + ev;
            if score > best_score {
                best_score = score;
                best = (s, e);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpanMetrics {
    pub exact_match: f64,
    pub f1: f64,
    pub examples: usize,
}

pub fn span_metrics(pred: &[Span], gold: &[Span]) -> SpanMetrics {
    let n = pred.len().min(gold.len());
    if n == 0 {
        return SpanMetrics::default();
    }
    let em = pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / n as f64;
    let f1 = pred.iter().zip(gold).map(|(&p, &g)| span_f1(p, g)).sum::<f64>() / n as f64;
    SpanMetrics {
        exact_match: em,
        f1,
        examples: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_predictor_macro_f1_is_one_third() {
        let gold = [0, 0, 1, 1];
        let m = ConfusionMatrix::from_pairs(2, &gold, &[0, 0, 0, 0]);
        assert!((m.macro_f1() - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.accuracy() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unsupported_class_excluded() {
        let m = ConfusionMatrix::from_pairs(3, &[0, 1], &[0, 1]);
        assert_eq!(m.macro_f1(), 1.0);
    }

    #[test]
    fn span_overlap() {
        assert_eq!(span_f1((3, 5), (3, 5)), 1.0);
        assert_eq!(span_f1((0, 0), (3, 5)), 0.0);
        assert!((span_f1((3, 4), (3, 5)) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn no_answer_wins_ties() {
        assert_eq!(best_span(&[1.0, 0.5, 0.5], &[1.0, 0.5, 1.5], 1, 3), (0, 0));
        assert_eq!(best_span(&[0.0, 0.5, 0.5], &[0.0, 0.5, 1.5], 1, 3), (1, 2));
    }
}
