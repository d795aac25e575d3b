use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Whitespace-split, case-folded tokens.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Length of the longest common subsequence.
pub fn lcs_len<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based scores with precision over `b` and recall over `a`.
pub fn rouge_l<S: PartialEq>(a: &[S], b: &[S]) -> RougeScores {
    if a.is_empty() || b.is_empty() {
        log::warn!("ROUGE-L on an empty token sequence");
        return RougeScores::default();
    }
    let lcs = lcs_len(a, b) as f64;
    if lcs == 0.0 {
        return RougeScores::default();
    }
    let precision = lcs / b.len() as f64;
    let recall = lcs / a.len() as f64;
    RougeScores {
        precision,
        recall,
        f1: 2.0 * precision * recall / (precision + recall),
    }
}
