//! Frozen sentence featurizer.
//!
//! A small seeded transformer over hashed word and character-trigram tokens,
//! mean-pooled into one vector per sentence. Its token table is the same
//! seeded "open-domain" matrix the token-embedding path copies, so sentence
//! and token inputs to the upper encoder live in related spaces.

use serde::{Deserialize, Serialize};

use super::stack::{StackConfig, TransformerStack};
use super::text::Tokenizer;
use crate::error::Result;
use crate::numcore::{ParamId, ParamStore, Tape, Tensor};
use crate::rng::{normal_vec, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowerConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
}

/// Token vectors standing in for an open-domain model's embedding layer.
pub fn open_domain_token_vectors(seed: u64, vocab_size: usize, d_model: usize) -> Vec<f32> {
    let mut rng = seeded(seed, "open-domain.tokens");
    normal_vec(&mut rng, vocab_size * d_model, 1.0)
}

/// Sentence embeddings of one document, `rows × cols`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    /// Original sentence count when the document was truncated.
    pub truncated_from: Option<usize>,
}

impl SentenceMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone)]
pub struct LowerEncoder {
    pub seed: u64,
    pub config: LowerConfig,
    store: ParamStore,
    token_table: ParamId,
    stack: TransformerStack,
    tokenizer: Tokenizer,
}

impl LowerEncoder {
    pub fn new(seed: u64, config: LowerConfig, init_std: f32) -> Result<Self> {
        let tokenizer = Tokenizer::new(config.vocab_size)?;
        let mut store = ParamStore::new();
        let token_table = store.add(
            "lower.embeddings",
            "lower.embeddings.token",
            Tensor::new(
                vec![config.vocab_size, config.d_model],
                open_domain_token_vectors(seed, config.vocab_size, config.d_model),
            )?,
        )?;
        let mut rng = seeded(seed, "lower.stack");
        let stack = TransformerStack::build(
            &mut store,
            "lower",
            StackConfig {
                layers: config.layers,
                heads: config.heads,
                d_model: config.d_model,
                d_ff: config.d_ff,
            },
            init_std,
            &mut rng,
        )?;
        store.set_frozen_prefix("lower", true);
        Ok(Self {
            seed,
            config,
            store,
            token_table,
            stack,
            tokenizer,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Embedding of one sentence; a sentence without word tokens maps to zeros.
    pub fn embed_sentence(&self, sentence: &str) -> Result<Vec<f32>> {
        let ids = self.tokenizer.encode_subwords(sentence);
        if ids.is_empty() {
            return Ok(vec![0.0; self.config.d_model]);
        }
        let mut tape: Tape<f32> = Tape::with_params(&self.store);
        let table = tape.param(self.token_table);
        let x = tape.gather_rows(table, &ids)?;
        let h = self.stack.forward(&mut tape, x, None)?;
        let pooled = tape.mean_rows(h)?;
        Ok(tape.value(pooled).to_vec())
    }

    /// Embeds up to `max_sentences` sentences; longer documents are truncated
    /// with a warning.
    pub fn embed_sentences(&self, sentences: &[String], max_sentences: usize) -> Result<SentenceMatrix> {
        if sentences.is_empty() {
            return Err(crate::Error::EmptyDocument);
        }
        let keep = sentences.len().min(max_sentences.max(1));
        let truncated_from = (keep < sentences.len()).then_some(sentences.len());
        if let Some(n) = truncated_from {
            log::warn!("document has {n} sentences; truncating to {keep}");
        }
        let mut data = Vec::with_capacity(keep * self.config.d_model);
        for s in &sentences[..keep] {
            data.extend(self.embed_sentence(s)?);
        }
        Ok(SentenceMatrix {
            rows: keep,
            cols: self.config.d_model,
            data,
            truncated_from,
        })
    }

    /// Little-endian bytes of every parameter, in registration order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in self.store.entries() {
            for v in e.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}
