//! The two-level encoder: frozen sentence featurizer, trainable upper
//! transformer, token-embedding path, hierarchy heads and adapters.

pub mod lora;
pub mod lower;
pub mod model;
pub mod stack;
pub mod text;

pub use lora::{parse_targets, AdapterPair, LoraAdapters, LoraConfig, LoraTarget, Projection};
pub use lower::{LowerConfig, LowerEncoder, SentenceMatrix};
pub use model::{
    AffineHead, ClassificationHeads, EmbeddingTable, FastDocModel, ModelConfig, Phase,
    TaskHeadConfig, UpperEncoder, MAX_SENTENCES_LIMIT,
};
pub use stack::{StackConfig, TransformerStack};
pub use text::{split_sentences, Tokenizer, CLS_ID, MASK_ID, NUM_SPECIAL, SEP_ID};
