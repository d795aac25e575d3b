//! Taxonomy derivation by divisive k-means over tf-idf document vectors.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng as _;

use super::corpus::Corpus;
use super::taxonomy::Taxonomy;
use crate::encoder::text::words;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};

const KMEANS_MAX_ITERS: usize = 50;
const LABEL_TERMS: usize = 3;

/// L2-normalized tf-idf vectors over a sorted vocabulary.
#[derive(Debug, Clone)]
pub struct TfIdf {
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl TfIdf {
    /// Raw term frequency times smoothed idf `ln((1+N)/(1+df)) + 1`.
    pub fn fit(texts: &[Vec<String>]) -> Self {
        let mut vocab: Vec<String> = texts
            .iter()
            .flatten()
            .cloned()
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        vocab.sort();
        let index: HashMap<&str, usize> =
            vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let n = texts.len() as f64;
        let mut df = vec![0usize; vocab.len()];
        for t in texts {
            let uniq: HashSet<&String> = t.iter().collect();
            for w in uniq {
                df[index[w.as_str()]] += 1;
            }
        }
        let idf: Vec<f64> = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let vectors = texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; vocab.len()];
                for w in t {
                    v[index[w.as_str()]] += 1.0;
                }
                for (x, w) in v.iter_mut().zip(&idf) {
                    *x *= w;
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect();
        Self {
            vocabulary: vocab,
            idf,
            vectors,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means++ followed by Lloyd iterations. Returns one cluster index
/// per point; cluster ids are renumbered by first member so the output does
/// not depend on centroid order.
pub fn kmeans(points: &[&[f64]], k: usize, rng: &mut Rng) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let dim = points[0].len();
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].to_vec()];
    while centroids.len() < k.min(n) {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, d) in d2.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(points[pick].to_vec());
    }

    let mut assign = vec![0usize; n];
    for iter in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = sq_dist(p, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed && iter > 0 {
            break;
        }
        for (c, cen) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64]> = points
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| *p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; dim];
            for m in &members {
                for (acc, x) in mean.iter_mut().zip(m.iter()) {
                    *acc += x;
                }
            }
            mean.iter_mut().for_each(|x| *x /= members.len() as f64);
            *cen = mean;
        }
    }

    let mut renumber = BTreeMap::new();
    let mut next = 0;
    assign
        .iter()
        .map(|&a| {
            *renumber.entry(a).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

struct Builder<'a> {
    tfidf: &'a TfIdf,
    levels: usize,
    branching: usize,
    seed: u64,
    used: Vec<HashSet<String>>,
    paths: Vec<Vec<String>>,
}

impl Builder<'_> {
    fn label(&mut self, level: usize, members: &[usize]) -> String {
        let v = &self.tfidf.vectors;
        let mut weight = vec![0.0; self.tfidf.vocabulary.len()];
        for &m in members {
            for (w, x) in weight.iter_mut().zip(&v[m]) {
                *w += x;
            }
        }
        let mut order: Vec<usize> = (0..weight.len()).filter(|&i| weight[i] > 0.0).collect();
        order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]).then(a.cmp(&b)));
        let base = order
            .iter()
            .take(LABEL_TERMS)
            .map(|&i| self.tfidf.vocabulary[i].as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let base = if base.is_empty() {
            "cluster".to_string()
        } else {
            base
        };
        let mut label = base.clone();
        let mut k = 2;
        while self.used[level].contains(&label) {
            label = format!("{base} {k}");
            k += 1;
        }
        self.used[level].insert(label.clone());
        label
    }

    fn split(&mut self, members: Vec<usize>, prefix: Vec<String>) {
        let depth = prefix.len();
        if depth == self.levels || members.len() < self.branching {
            for &m in &members {
                self.paths[m] = prefix.clone();
            }
            return;
        }
        let node_key = format!("derive/{}", prefix.join("/"));
        let mut rng = seeded(derive_seed(self.seed, "derive"), &node_key);
        let points: Vec<&[f64]> = members
            .iter()
            .map(|&m| self.tfidf.vectors[m].as_slice())
            .collect();
        let assign = kmeans(&points, self.branching, &mut rng);
        let clusters = assign.iter().copied().max().map_or(0, |c| c + 1);
        if clusters < 2 {
            for &m in &members {
                self.paths[m] = prefix.clone();
            }
            return;
        }
        for c in 0..clusters {
            let sub: Vec<usize> = members
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(&m, _)| m)
                .collect();
            let label = self.label(depth, &sub);
            let mut path = prefix.clone();
            path.push(label);
            self.split(sub, path);
        }
    }
}

/// Builds a taxonomy of at most `levels` levels by recursively splitting
/// documents into `branching` clusters. Nodes with fewer than `branching`
/// documents become leaves. Each level-ℓ label is the top tf-idf terms of its
/// cluster, suffixed with a counter when that label is already taken.
pub fn derive_taxonomy(
    corpus: &Corpus,
    levels: usize,
    branching: usize,
    seed: u64,
) -> Result<(Taxonomy, Vec<Vec<String>>)> {
    if levels < 1 {
        return Err(Error::Config("levels must be at least 1".into()));
    }
    if branching < 2 {
        return Err(Error::Config("branching must be at least 2".into()));
    }
    if corpus.len() < branching {
        return Err(Error::Validation(format!(
            "corpus of {} documents is smaller than branching {branching}",
            corpus.len()
        )));
    }
    let texts: Vec<Vec<String>> = corpus.documents.iter().map(|d| words(&d.full_text())).collect();
    let tfidf = TfIdf::fit(&texts);
    let mut b = Builder {
        tfidf: &tfidf,
        levels,
        branching,
        seed,
        used: vec![HashSet::new(); levels],
        paths: vec![Vec::new(); corpus.len()],
    };
    b.split((0..corpus.len()).collect(), Vec::new());
    let paths = b.paths;
    let taxonomy = Taxonomy::from_paths(paths.clone())?;
    Ok((taxonomy, paths))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tfidf_rows_are_unit_length() {
        let t = TfIdf::fit(&[
            vec!["a".into(), "b".into()],
            vec!["b".into(), "c".into(), "c".into()],
        ]);
        for v in &t.vectors {
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_separates_two_blobs() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let a = kmeans(&refs, 2, &mut seeded(1, "t"));
        assert_eq!(a[0], a[1]);
        assert_eq!(a[2], a[3]);
        assert_ne!(a[0], a[2]);
    }
}
