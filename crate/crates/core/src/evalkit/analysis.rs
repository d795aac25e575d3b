//! Comparisons between the sentence-embedding and token-embedding paths.

use serde::{Deserialize, Serialize};

use crate::datapipe::{Document, TfIdf};
use crate::encoder::text::words;
use crate::encoder::{FastDocModel, Tokenizer, CLS_ID};
use crate::error::{Error, Result};
use crate::numcore::kernels::cosine;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    Sentence,
    Token,
}

/// Cosine similarities closer than this count as ties.
const WL_TIE_TOLERANCE: f64 = 1e-9;

/// Window length over two sequences of input embeddings: each row of `a` is
/// matched to its most cosine-similar row of `b` (ties to the nearest
/// position, then the lower one) and the result is `1 + mean |i − j|`.
pub fn wl_metric<V: AsRef<[f32]>>(a: &[V], b: &[V]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("window length needs non-empty documents".into()));
    }
    let widen = |v: &V| v.as_ref().iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    let b64: Vec<Vec<f64>> = b.iter().map(widen).collect();
    let mut total = 0usize;
    for (i, x) in a.iter().enumerate() {
        let x = widen(x);
        let mut best_j = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (j, y) in b64.iter().enumerate() {
            let sim = cosine(&x, y);
            let closer = i.abs_diff(j) < i.abs_diff(best_j);
            let tie = (sim - best_sim).abs() <= WL_TIE_TOLERANCE;
            if (sim > best_sim && !tie) || (tie && closer) {
                best_sim = sim;
                best_j = j;
            }
        }
        total += i.abs_diff(best_j);
    }
    Ok(1.0 + total as f64 / a.len() as f64)
}

/// Inputs the upper encoder would see for `doc`: sentence embeddings, or
/// token vectors without positional signal.
pub fn input_embeddings(model: &FastDocModel, doc: &Document, mode: EmbeddingMode) -> Result<Vec<Vec<f32>>> {
    match mode {
        EmbeddingMode::Sentence => {
            let m = model.embed_sentences(doc)?;
            Ok((0..m.rows).map(|r| m.row(r).to_vec()).collect())
        }
        EmbeddingMode::Token => {
            let tok = Tokenizer::new(model.config.vocab_size)?;
            let table = model.store.tensor(model.embeddings.token);
            let d = model.config.d_model;
            let mut ids = tok.encode(&doc.full_text());
            ids.truncate(model.config.max_positions);
            Ok(ids
                .into_iter()
                .map(|id| table.data()[id * d..(id + 1) * d].to_vec())
                .collect())
        }
    }
}

pub fn wl_for_documents(model: &FastDocModel, a: &Document, b: &Document, mode: EmbeddingMode) -> Result<f64> {
    wl_metric(&input_embeddings(model, a, mode)?, &input_embeddings(model, b, mode)?)
}

/// Token-path document vector: mean of upper outputs over `[CLS] words`.
pub fn token_doc_vector(model: &FastDocModel, doc: &Document) -> Result<Vec<f32>> {
    let tok = Tokenizer::new(model.config.vocab_size)?;
    let mut ids = vec![CLS_ID];
    ids.extend(tok.encode(&doc.full_text()));
    ids.truncate(model.config.max_positions);
    let h = model.forward_tokens(&ids)?;
    let d = model.config.d_model;
    let rows = h.len() / d;
    let mut mean = vec![0.0f32; d];
    for row in h.chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f32);
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pairs: usize,
    /// `None` when either similarity vector has zero variance.
    pub pearson: Option<f64>,
    pub undefined: bool,
}

fn pairwise_cosines(vectors: &[Vec<f32>]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            out.push(f64::from(cosine(&vectors[i], &vectors[j])));
        }
    }
    out
}

fn min_max(v: &mut [f64]) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x - lo) / span);
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between the min-max normalized pairwise cosine
/// similarities of two sets of document vectors.
pub fn correlation_of(path_a: &[Vec<f32>], path_b: &[Vec<f32>]) -> Result<CorrelationReport> {
    if path_a.len() != path_b.len() {
        return Err(Error::dim("representation_correlation", &[path_a.len()], &[path_b.len()]));
    }
    if path_a.len() < 3 {
        return Err(Error::Validation("correlation needs at least 3 documents".into()));
    }
    let mut sa = pairwise_cosines(path_a);
    let mut sb = pairwise_cosines(path_b);
    min_max(&mut sa);
    min_max(&mut sb);
    let pearson = pearson(&sa, &sb);
    Ok(CorrelationReport {
        pairs: sa.len(),
        pearson,
        undefined: pearson.is_none(),
    })
}

/// Agreement between sentence-path and token-path document vectors.
pub fn representation_correlation(model: &FastDocModel, docs: &[Document]) -> Result<CorrelationReport> {
    let sentence: Vec<Vec<f32>> = docs.iter().map(|d| model.encode_document(d)).collect::<Result<_>>()?;
    let token: Vec<Vec<f32>> = docs.iter().map(|d| token_doc_vector(model, d)).collect::<Result<_>>()?;
    correlation_of(&sentence, &token)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// One `k`-wide row per input vector.
    pub coords: Vec<Vec<f64>>,
    pub components: Vec<Vec<f64>>,
    /// Share of total variance captured by each component.
    pub explained: Vec<f64>,
}

const POWER_ITERS: usize = 500;

/// Projects mean-centred vectors onto the top `k` covariance eigenvectors,
/// found by seeded power iteration with deflation.
pub fn pca_project(vectors: &[Vec<f32>], k: usize, seed: u64) -> Result<Projection> {
    let d = vectors.first().map_or(0, Vec::len);
    if k == 0 || k > d {
        return Err(Error::Config(format!("cannot project {d}-dimensional data onto {k} components")));
    }
    if vectors.len() < k {
        return Err(Error::Validation(format!("{} vectors is fewer than {k} components", vectors.len())));
    }
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::dim("pca_project", &[d], &[vectors.iter().map(Vec::len).max().unwrap_or(0)]));
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0f64; d];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centred: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(&x, m)| f64::from(x) - m).collect())
        .collect();
    let mut cov = vec![0.0f64; d * d];
    for c in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += c[i] * c[j] / n;
            }
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let mut rng = seeded(seed, "pca");
    let mut components = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = crate::rng::normal_vec(&mut rng, d, 1.0)
            .into_iter()
            .map(f64::from)
            .collect();
        orthogonalize(&mut v, &components);
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERS {
            let mut w = vec![0.0; d];
            for i in 0..d {
                w[i] = (0..d).map(|j| cov[i * d + j] * v[j]).sum();
            }
            lambda = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            orthogonalize(&mut w, &components);
            if normalize(&mut w) == 0.0 {
                break;
            }
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = w;
            if delta < 1e-12 {
                break;
            }
        }
        let lambda = lambda.max(0.0);
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        explained.push(if trace > 0.0 { lambda / trace } else { 0.0 });
        components.push(v);
    }
    let coords = centred
        .iter()
        .map(|c| {
            components
                .iter()
                .map(|v| c.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        coords,
        components,
        explained,
    })
}

/// Removes the projections of `v` onto earlier orthonormal components, which
/// deflation alone leaves behind as rounding residue.
fn orthogonalize(v: &mut [f64], components: &[Vec<f64>]) {
    for c in components {
        let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphSimilarity {
    /// Best match score for each paragraph of the first document.
    pub scores: Vec<f64>,
    /// Counts over `[0, 0.1), …, [0.9, 1.0]`.
    pub histogram: [usize; HISTOGRAM_BINS],
}

/// Paragraphs separated by blank lines, trimmed, empty ones dropped.
pub fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line.trim());
        }
    }
    if !cur.is_empty() {
        out.push(cur.join("\n"));
    }
    out
}

fn cos64(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// For each paragraph of `a`, the highest tf-idf cosine against any paragraph
/// of `b`; idf is fitted over the paragraphs of both documents.
pub fn paragraph_similarity(a: &str, b: &str) -> Result<ParagraphSimilarity> {
    let pa = paragraphs(a);
    let pb = paragraphs(b);
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::Contract("both documents need at least one paragraph".into()));
    }
    let texts: Vec<Vec<String>> = pa.iter().chain(&pb).map(|p| words(p)).collect();
    let tfidf = TfIdf::fit(&texts);
    let (va, vb) = tfidf.vectors.split_at(pa.len());
    let scores: Vec<f64> = va
        .iter()
        .map(|x| vb.iter().map(|y| cos64(x, y)).fold(0.0, f64::max))
        .collect();
    let mut histogram = [0usize; HISTOGRAM_BINS];
    for &s in &scores {
        let bin = ((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    Ok(ParagraphSimilarity { scores, histogram })
}
