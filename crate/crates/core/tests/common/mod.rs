//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use fastdoc_core::datapipe::{Corpus, DomainMode, HierarchyLabels, Taxonomy, Triplet};
use fastdoc_core::encoder::{FastDocModel, ModelConfig, Phase};
use fastdoc_core::losses::LossFlags;
use fastdoc_core::numcore::{ParamId, Tape};
use fastdoc_core::synthetic;
use fastdoc_core::trainer::{batch_loss_on, hierarchy_labels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    out
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

pub fn cross_entropy(row: &[f64], target: usize) -> f64 {
    -softmax(row)[target].ln()
}

pub fn layer_norm(row: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    row.iter()
        .zip(gain.iter().zip(bias))
        .map(|(x, (g, b))| (x - mean) / (var + eps).sqrt() * g + b)
        .collect()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn triplet(d1: &[f64], d2: &[f64], d3: &[f64]) -> f64 {
    (euclid(d1, d2) - euclid(d1, d3) + 1.0).max(0.0)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Longest common subsequence length by enumerating every subsequence of `a`.
pub fn lcs_exhaustive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&T> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if sub.len() <= best {
            continue;
        }
        let mut j = 0;
        for x in b {
            if j < sub.len() && *sub[j] == *x {
                j += 1;
            }
        }
        if j == sub.len() {
            best = sub.len();
        }
    }
    best
}

/// Small synthetic setup: corpus, taxonomy, labels and mined triplets.
pub struct Setup {
    pub corpus: Corpus,
    pub taxonomy: Taxonomy,
    pub labels: HashMap<String, HierarchyLabels>,
    pub triplets: Vec<Triplet>,
}

pub fn setup(per_category: usize, triplets: usize, seed: u64) -> Setup {
    setup_with(
        &synthetic::SyntheticConfig {
            docs_per_category: per_category,
            ..Default::default()
        },
        triplets,
        seed,
    )
}

pub fn setup_with(cfg: &synthetic::SyntheticConfig, triplets: usize, seed: u64) -> Setup {
    let corpus = synthetic::corpus(cfg, DomainMode::CustomerSupport).unwrap();
    let taxonomy = synthetic::taxonomy(cfg.categories).unwrap();
    let labels = hierarchy_labels(&corpus, &taxonomy).unwrap();
    let triplets =
        fastdoc_core::datapipe::mine_triplets_metadata(&corpus, triplets, seed).unwrap();
    Setup {
        corpus,
        taxonomy,
        labels,
        triplets,
    }
}

/// Largest relative error between analytic `f64` gradients of the batch
/// objective and central differences, over `per_tensor` sampled coordinates
/// of every trainable tensor.
pub fn max_relative_gradient_error(
    model: &mut FastDocModel,
    s: &Setup,
    batch: &[Triplet],
    per_tensor: usize,
    h: f32,
) -> (f64, usize) {
    model.configure(Phase::Pretrain { train_heads: true });
    let features: HashMap<String, _> = s
        .corpus
        .documents
        .iter()
        .map(|d| (d.id.clone(), model.embed_sentences(d).unwrap()))
        .collect();
    let refs: Vec<&Triplet> = batch.iter().collect();
    let loss_at = |m: &FastDocModel| -> f64 {
        let mut tape: Tape<f64> = m.tape();
        let (l, _, _) =
            batch_loss_on(m, &mut tape, &refs, &features, &s.labels, LossFlags::Both, true).unwrap();
        tape.scalar(l)
    };

    let trainable: Vec<ParamId> = model.store.ids().filter(|&id| !model.store.is_frozen(id)).collect();
    let analytic: HashMap<ParamId, Vec<f64>> = {
        let mut tape: Tape<f64> = model.tape();
        let (l, _, _) =
            batch_loss_on(model, &mut tape, &refs, &features, &s.labels, LossFlags::Both, true).unwrap();
        let vars: Vec<_> = trainable.iter().map(|&id| (id, tape.param(id))).collect();
        let g = tape.backward(l).unwrap();
        vars.into_iter()
            .map(|(id, v)| {
                let len = model.store.tensor(id).len();
                (id, g.of(v).map_or(vec![0.0; len], <[f64]>::to_vec))
            })
            .collect()
    };

    let mut r = rng(7);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for &id in &trainable {
        let len = model.store.tensor(id).len();
        for _ in 0..per_tensor.min(len) {
            let k = r.random_range(0..len);
            let orig = model.store.tensor(id).data()[k];
            model.store.tensor_mut(id).data_mut()[k] = orig + h;
            let plus_at = model.store.tensor(id).data()[k];
            let lp = loss_at(model);
            model.store.tensor_mut(id).data_mut()[k] = orig - h;
            let minus_at = model.store.tensor(id).data()[k];
            let lm = loss_at(model);
            model.store.tensor_mut(id).data_mut()[k] = orig;
            let numeric = (lp - lm) / (f64::from(plus_at) - f64::from(minus_at));
            let a = analytic[&id][k];
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-7 {
                worst = worst.max((a - numeric).abs() / scale);
            }
            checked += 1;
        }
    }
    (worst, checked)
}

pub fn gradcheck_model(seed: u64, taxonomy: &Taxonomy) -> FastDocModel {
    FastDocModel::new(ModelConfig {
        seed,
        d_model: 16,
        layers: 2,
        heads: 2,
        d_ff: 32,
        lower_layers: 1,
        lower_heads: 2,
        lower_d_ff: 32,
        level_sizes: taxonomy.level_sizes(),
        init_std: 0.1,
        head_init_std: 0.1,
        ..Default::default()
    })
    .unwrap()
}

/// A random small corpus in `mode` with metadata drawn from tiny label pools.
pub fn random_corpus(r: &mut ChaCha8Rng, mode: DomainMode) -> Corpus {
    use fastdoc_core::datapipe::Document;
    let n = r.random_range(3..12);
    let docs = (0..n)
        .map(|i| {
            let mut d = Document::from_text(format!("doc{i}"), "Some words here.").unwrap();
            match mode {
                DomainMode::CustomerSupport => {
                    d.category = Some(["radio", "kettle", "drill"][r.random_range(0..3)].into());
                }
                DomainMode::Scientific => {
                    let root = ["Physics", "Computer Science"][r.random_range(0..2)];
                    let sub = ["Optics", "Machine Learning", "Databases"][r.random_range(0..3)];
                    d.hierarchy = Some(vec![root.into(), sub.into()]);
                }
                DomainMode::Legal => {
                    let k = r.random_range(1..3);
                    d.concepts = Some(
                        (0..k)
                            .map(|_| ["trade", "tax", "fishing", "energy", "transport"][r.random_range(0..5)].to_string())
                            .collect(),
                    );
                }
                DomainMode::Derived => {
                    d.hierarchy = Some(vec!["root".into(), ["x", "y"][r.random_range(0..2)].into()]);
                }
            }
            d
        })
        .collect();
    Corpus::new(docs, mode).unwrap()
}

/// Re-checks a triplet from raw metadata, independently of the miner.
pub fn triplet_is_valid(corpus: &Corpus, t: &Triplet) -> bool {
    let find = |id: &str| corpus.documents.iter().find(|d| d.id == id);
    let (Some(a), Some(p), Some(n)) = (find(&t.anchor_id), find(&t.positive_id), find(&t.negative_id)) else {
        return false;
    };
    if a.id == p.id || a.id == n.id || p.id == n.id {
        return false;
    }
    match corpus.mode {
        DomainMode::CustomerSupport => {
            a.category.is_some() && a.category == p.category && n.category.is_some() && a.category != n.category
        }
        DomainMode::Scientific => {
            let prim = |d: &fastdoc_core::datapipe::Document| d.hierarchy.as_ref().map(|h| h[1].clone());
            prim(a) == prim(p) && prim(n).is_some() && prim(a) != prim(n)
        }
        DomainMode::Legal => {
            let (ca, cp, cn) = (
                a.concepts.as_ref().unwrap(),
                p.concepts.as_ref().unwrap(),
                n.concepts.as_ref().unwrap(),
            );
            ca.iter().any(|c| cp.contains(c)) && !ca.iter().any(|c| cn.contains(c))
        }
        DomainMode::Derived => a.hierarchy == p.hierarchy && a.hierarchy != n.hierarchy,
    }
}

pub struct MinerSweep {
    pub corpora: usize,
    pub mined: usize,
    pub triplets: usize,
    pub violations: usize,
    pub wrong_sizes: usize,
    pub missing_swaps: usize,
}

/// Mines from `corpora` random corpora across the three metadata modes and
/// re-checks every output.
pub fn miner_sweep(corpora: usize, seed: u64) -> MinerSweep {
    use fastdoc_core::datapipe::mine_triplets_metadata;
    let mut r = rng(seed);
    let modes = [DomainMode::CustomerSupport, DomainMode::Scientific, DomainMode::Legal];
    let mut s = MinerSweep {
        corpora,
        mined: 0,
        triplets: 0,
        violations: 0,
        wrong_sizes: 0,
        missing_swaps: 0,
    };
    for i in 0..corpora {
        let mode = modes[i % 3];
        let corpus = random_corpus(&mut r, mode);
        let count = r.random_range(1..25);
        let Ok(out) = mine_triplets_metadata(&corpus, count, i as u64) else {
            continue;
        };
        s.mined += 1;
        s.triplets += out.len();
        s.violations += out.iter().filter(|t| !triplet_is_valid(&corpus, t)).count();
        let expected = if mode == DomainMode::CustomerSupport { count } else { 2 * count };
        if out.len() != expected {
            s.wrong_sizes += 1;
        }
        if mode != DomainMode::CustomerSupport {
            for pair in out.chunks(2) {
                let swapped = Triplet {
                    anchor_id: pair[0].positive_id.clone(),
                    positive_id: pair[0].anchor_id.clone(),
                    negative_id: pair[0].negative_id.clone(),
                };
                if pair.len() != 2 || pair[1] != swapped {
                    s.missing_swaps += 1;
                }
            }
        }
    }
    s
}
