//! Command-line surface. Every flag carries help text and either a default
//! or an explicit `[default: ...]` note.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fastdoc_core::datapipe::DomainMode;
use fastdoc_core::encoder::ModelConfig;
use fastdoc_core::losses::LossFlags;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "fastdoc", version, about = "Document-level pre-training and evaluation of a two-level encoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Mine document triplets from metadata or ROUGE-L similarity.
    Mine(MineArgs),
    /// Build a taxonomy by divisive tf-idf clustering and assign every document a path.
    DeriveTaxonomy(DeriveTaxonomyArgs),
    /// Pre-train the upper encoder on triplets (or run the masked-token comparison mode).
    Pretrain(PretrainArgs),
    /// Fine-tune a checkpoint on a span, tagging or pair task over the token path.
    Finetune(FinetuneArgs),
    /// Compare the sentence and token input paths of a checkpoint.
    Analyze(AnalyzeArgs),
    /// Print a checkpoint summary as JSON.
    InspectCheckpoint(InspectArgs),
    /// Re-run the command recorded in a manifest and verify output digests.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mine(_) => "mine",
            Command::DeriveTaxonomy(_) => "derive-taxonomy",
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::Analyze(_) => "analyze",
            Command::InspectCheckpoint(_) => "inspect-checkpoint",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ManifestArgs {
    /// Where to write the run manifest [default: <primary output>.manifest.json]
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Metadata,
    Rouge,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MineArgs {
    /// Corpus file, one JSON record per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Domain mode deciding which metadata defines similarity
    #[arg(long, default_value = "customer_support")]
    pub mode: DomainMode,
    /// Mining strategy
    #[arg(long, value_enum, default_value = "metadata")]
    pub strategy: Strategy,
    /// Triplets to sample before any swap doubling
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Seed for every random choice in the run
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ROUGE-L F1 at or above which a document is a positive
    #[arg(long, default_value_t = 0.35)]
    pub pos_threshold: f64,
    /// ROUGE-L F1 at or below which a document is a negative
    #[arg(long, default_value_t = 0.10)]
    pub neg_threshold: f64,
    /// Tokens per document kept for ROUGE-L scoring
    #[arg(long, default_value_t = 512)]
    pub truncate_tokens: usize,
    /// Output triplet file
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DeriveTaxonomyArgs {
    /// Corpus file, one JSON record per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Domain mode used to validate the corpus
    #[arg(long, default_value = "derived")]
    pub mode: DomainMode,
    /// Maximum taxonomy depth
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Clusters per split
    #[arg(long, default_value_t = 2)]
    pub branching: usize,
    /// Seed for k-means initialisation
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output taxonomy file, one root-to-leaf path per line
    #[arg(long)]
    pub out_taxonomy: PathBuf,
    /// Output corpus with the derived hierarchy path on every document
    #[arg(long)]
    pub out_corpus: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

/// Architecture flags shared by commands that build a model.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Hidden width of both encoders
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    /// Upper encoder layers
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Upper encoder attention heads
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Upper encoder feed-forward width
    #[arg(long, default_value_t = 64)]
    pub d_ff: usize,
    /// Frozen sentence encoder layers
    #[arg(long, default_value_t = 2)]
    pub lower_layers: usize,
    /// Token vocabulary size
    #[arg(long, default_value_t = 8192)]
    pub vocab_size: usize,
    /// Longest token sequence on the token path
    #[arg(long, default_value_t = 128)]
    pub max_positions: usize,
    /// Sentences kept per document
    #[arg(long, default_value_t = 64)]
    pub max_sentences: usize,
}

impl ModelArgs {
    pub fn config(&self, seed: u64, level_sizes: Vec<usize>, mlm_head: bool) -> ModelConfig {
        let base = ModelConfig::default();
        ModelConfig {
            seed,
            d_model: self.d_model,
            layers: self.layers,
            heads: self.heads,
            d_ff: self.d_ff,
            lower_layers: self.lower_layers,
            lower_heads: self.heads,
            lower_d_ff: self.d_ff,
            vocab_size: self.vocab_size,
            max_positions: self.max_positions,
            max_sentences: self.max_sentences,
            level_sizes,
            mlm_head,
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Triplet and hierarchical losses over sentence embeddings
    Fastdoc,
    /// Masked-token prediction over the token path
    Mlm,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PretrainArgs {
    /// Corpus file, one JSON record per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Domain mode used to validate the corpus
    #[arg(long, default_value = "customer_support")]
    pub mode: DomainMode,
    /// Triplet file from `mine`; required by the fastdoc objective [default: none]
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// Taxonomy file; required when the hierarchical loss is on [default: none]
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Word vectors for mapping categories of documents without a hierarchy [default: none]
    #[arg(long)]
    pub word_vectors: Option<PathBuf>,
    /// Training objective
    #[arg(long, value_enum, default_value = "fastdoc")]
    pub objective: Objective,
    /// Loss terms: triplet, hier or both
    #[arg(long, default_value = "both")]
    pub loss: LossFlags,
    /// Triplets (or documents, for mlm) per optimizer step
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Initial learning rate, decayed linearly to 0
    #[arg(long, default_value_t = 5e-5)]
    pub lr: f64,
    /// Passes over the triplets
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Seed for initialisation, shuffling and masking
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Steps of the mlm objective; 0 matches the fastdoc step count for the given triplets
    #[arg(long, default_value_t = 0)]
    pub mlm_steps: usize,
    /// Rank of adapters on the upper encoder; 0 trains the full upper encoder
    #[arg(long, default_value_t = 0)]
    pub lora_rank: usize,
    /// Comma-separated adapter targets from query, key, value, output, ffn
    #[arg(long, default_value = "query,value")]
    pub lora_targets: String,
    /// Gradient-norm cap [default: none]
    #[arg(long)]
    pub clip_norm: Option<f32>,
    /// Steps between drift reports
    #[arg(long, default_value_t = 10)]
    pub drift_interval: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output checkpoint
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve and drift log, one JSON record per line [default: <out>.log.jsonl]
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Extractive span question answering
    Span,
    /// Per-token classification
    Tagging,
    /// Binary classification of text pairs
    Pair,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FinetuneArgs {
    /// Pre-trained checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Task type of the train and dev files
    #[arg(long, value_enum)]
    pub task: Task,
    /// Training examples, one JSON record per line
    #[arg(long)]
    pub train: PathBuf,
    /// Dev examples used for model selection; training examples are scored when absent [default: none]
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Label classes of the tagging task
    #[arg(long, default_value_t = 2)]
    pub num_classes: usize,
    /// Keep a seeded sample of this many training examples; 0 keeps all
    #[arg(long, default_value_t = 0)]
    pub few_shot: usize,
    /// Initial learning rate, decayed linearly to 0
    #[arg(long, default_value_t = 3e-5)]
    pub lr: f64,
    /// Maximum epochs
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Examples per optimizer step
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    /// Epochs without dev improvement before stopping; 0 never stops early
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Seed for shuffling and the few-shot sample
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rank of adapters on the upper encoder; 0 trains the full upper encoder
    #[arg(long, default_value_t = 0)]
    pub lora_rank: usize,
    /// Comma-separated adapter targets from query, key, value, output, ffn
    #[arg(long, default_value = "query,value")]
    pub lora_targets: String,
    /// Gradient-norm cap [default: none]
    #[arg(long)]
    pub clip_norm: Option<f32>,
    /// Output checkpoint of the best dev epoch
    #[arg(long)]
    pub out: PathBuf,
    /// Metric report [default: <out>.metrics.json]
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// Checkpoint to analyse
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus file, one JSON record per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Domain mode used to validate the corpus
    #[arg(long, default_value = "derived")]
    pub mode: DomainMode,
    /// Leading corpus documents to analyse
    #[arg(long, default_value_t = 20)]
    pub docs: usize,
    /// Seed for the principal-component iteration
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Earlier checkpoint of the same architecture for a drift report [default: none]
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// First text file for paragraph similarity [default: none]
    #[arg(long, requires = "paragraphs_b")]
    pub paragraphs_a: Option<PathBuf>,
    /// Second text file for paragraph similarity [default: none]
    #[arg(long, requires = "paragraphs_a")]
    pub paragraphs_b: Option<PathBuf>,
    /// Analysis report
    #[arg(long)]
    pub out: PathBuf,
    /// Two-component projection as CSV [default: <out>.pca.csv]
    #[arg(long)]
    pub pca_csv: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct InspectArgs {
    /// Checkpoint to summarise
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Write the summary here instead of standard output [default: none]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs under this directory instead of the recorded paths [default: none]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
