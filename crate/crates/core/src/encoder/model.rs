use serde::{Deserialize, Serialize};

use super::lora::{LoraAdapters, LoraConfig, LoraTarget, Projection};
use super::lower::{open_domain_token_vectors, LowerConfig, LowerEncoder, SentenceMatrix};
use super::stack::{StackConfig, StackTrace, TransformerStack};
use super::text::NUM_SPECIAL;
use crate::datapipe::Document;
use crate::error::{Error, Result};
use crate::numcore::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::rng::{normal_vec, seeded};

/// Upper bound on sentences per document the encoder accepts.
pub const MAX_SENTENCES_LIMIT: usize = 512;

/// Output head attached for fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskHeadConfig {
    /// Start and end logit per position.
    SpanQa,
    TokenClassification { num_classes: usize },
    PairClassification,
}

impl TaskHeadConfig {
    pub fn outputs(&self) -> usize {
        match self {
            TaskHeadConfig::SpanQa => 2,
            TaskHeadConfig::TokenClassification { num_classes } => *num_classes,
            TaskHeadConfig::PairClassification => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub seed: u64,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub lower_layers: usize,
    pub lower_heads: usize,
    pub lower_d_ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub max_sentences: usize,
    /// Real class count per taxonomy level; each head adds one null class.
    pub level_sizes: Vec<usize>,
    pub init_std: f32,
    /// Weight init of every output head; biases always start at zero.
    pub head_init_std: f32,
    pub lora: Option<LoraConfig>,
    pub task: Option<TaskHeadConfig>,
    pub mlm_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            d_model: 32,
            layers: 2,
            heads: 4,
            d_ff: 64,
            lower_layers: 2,
            lower_heads: 4,
            lower_d_ff: 64,
            vocab_size: 8192,
            max_positions: 128,
            max_sentences: 64,
            level_sizes: Vec::new(),
            init_std: 0.02,
            head_init_std: 0.0,
            lora: None,
            task: None,
            mlm_head: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.upper_stack().validate()?;
        self.lower_stack().validate()?;
        if self.vocab_size <= NUM_SPECIAL {
            return Err(Error::Config(format!(
                "vocab_size must exceed {NUM_SPECIAL}"
            )));
        }
        if self.max_positions == 0 {
            return Err(Error::Config("max_positions must be positive".into()));
        }
        if self.max_sentences == 0 || self.max_sentences > MAX_SENTENCES_LIMIT {
            return Err(Error::Config(format!(
                "max_sentences must be in 1..={MAX_SENTENCES_LIMIT}"
            )));
        }
        for (name, v) in [("init_std", self.init_std), ("head_init_std", self.head_init_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if let Some(TaskHeadConfig::TokenClassification { num_classes }) = self.task {
            if num_classes < 2 {
                return Err(Error::Config("token classification needs ≥2 classes".into()));
            }
        }
        Ok(())
    }

    pub fn upper_stack(&self) -> StackConfig {
        StackConfig {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
        }
    }

    fn lower_stack(&self) -> StackConfig {
        StackConfig {
            layers: self.lower_layers,
            heads: self.lower_heads,
            d_model: self.d_model,
            d_ff: self.lower_d_ff,
        }
    }

    pub fn lower(&self) -> LowerConfig {
        LowerConfig {
            d_model: self.d_model,
            layers: self.lower_layers,
            heads: self.lower_heads,
            d_ff: self.lower_d_ff,
            vocab_size: self.vocab_size,
        }
    }
}

/// The trainable higher-level encoder plus optional adapters.
#[derive(Debug, Clone)]
pub struct UpperEncoder {
    pub stack: TransformerStack,
    pub lora: Option<LoraAdapters>,
}

impl UpperEncoder {
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        self.stack.forward(tape, x, self.lora.as_ref())
    }

    pub fn forward_traced<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<StackTrace> {
        self.stack.forward_traced(tape, x, self.lora.as_ref())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmbeddingTable {
    pub vocab_size: usize,
    pub max_positions: usize,
    pub token: ParamId,
    pub position: ParamId,
}

/// One affine map per taxonomy level (local classifier per level).
#[derive(Debug, Clone)]
pub struct ClassificationHeads {
    pub levels: Vec<(ParamId, ParamId)>,
    /// Output width of each head: real classes plus null.
    pub widths: Vec<usize>,
}

impl ClassificationHeads {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AffineHead {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Which parameter groups train in a given phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Document-level pre-training; `train_heads` is false for the
    /// triplet-only ablation.
    Pretrain { train_heads: bool },
    Mlm,
    FineTune,
}

#[derive(Debug, Clone)]
pub struct FastDocModel {
    pub config: ModelConfig,
    pub lower: LowerEncoder,
    pub store: ParamStore,
    pub upper: UpperEncoder,
    pub embeddings: EmbeddingTable,
    pub heads: ClassificationHeads,
    pub task_head: Option<AffineHead>,
    pub mlm_head: Option<AffineHead>,
}

impl FastDocModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let d = config.d_model;
        let lower = LowerEncoder::new(seed, config.lower(), config.init_std)?;
        let mut store = ParamStore::new();

        let stack = TransformerStack::build(
            &mut store,
            "upper",
            config.upper_stack(),
            config.init_std,
            &mut seeded(seed, "upper.stack"),
        )?;

        let token = store.add(
            "embeddings.token",
            "embeddings.token",
            Tensor::new(
                vec![config.vocab_size, d],
                open_domain_token_vectors(seed, config.vocab_size, d),
            )?,
        )?;
        let position = store.add(
            "embeddings.position",
            "embeddings.position",
            Tensor::new(
                vec![config.max_positions, d],
                normal_vec(
                    &mut seeded(seed, "embeddings.position"),
                    config.max_positions * d,
                    config.init_std,
                ),
            )?,
        )?;
        let embeddings = EmbeddingTable {
            vocab_size: config.vocab_size,
            max_positions: config.max_positions,
            token,
            position,
        };

        let mut rng = seeded(seed, "heads");
        let mut levels = Vec::new();
        let mut widths = Vec::new();
        for (l, &classes) in config.level_sizes.iter().enumerate() {
            let width = classes + 1;
            let group = format!("heads.level{}", l + 1);
            let w = store.add(
                &group,
                &format!("{group}.weight"),
                Tensor::new(vec![d, width], normal_vec(&mut rng, d * width, config.head_init_std))?,
            )?;
            let b = store.add(&group, &format!("{group}.bias"), Tensor::zeros(vec![width]))?;
            levels.push((w, b));
            widths.push(width);
        }

        let task_head = match config.task {
            Some(task) => Some(affine_head(
                &mut store,
                "task.head",
                d,
                task.outputs(),
                config.head_init_std,
                seed,
            )?),
            None => None,
        };
        let mlm_head = if config.mlm_head {
            Some(affine_head(
                &mut store,
                "mlm.head",
                d,
                config.vocab_size,
                config.head_init_std,
                seed,
            )?)
        } else {
            None
        };

        let lora_cfg = config.lora.clone();
        let mut model = Self {
            config: ModelConfig {
                lora: None,
                ..config
            },
            lower,
            store,
            upper: UpperEncoder { stack, lora: None },
            embeddings,
            heads: ClassificationHeads { levels, widths },
            task_head,
            mlm_head,
        };
        if let Some(cfg) = lora_cfg {
            model.apply_lora(cfg.rank, &cfg.targets)?;
        }
        model.configure(Phase::Pretrain { train_heads: true });
        Ok(model)
    }

    /// Attaches rank-`rank` adapters to the targeted upper-encoder projections
    /// and freezes the base upper encoder. Rank 0 leaves the model untouched.
    pub fn apply_lora(&mut self, rank: usize, targets: &[LoraTarget]) -> Result<()> {
        if self.upper.lora.is_some() {
            return Err(Error::Config("adapters already applied".into()));
        }
        if rank == 0 {
            return Ok(());
        }
        if targets.is_empty() {
            return Err(Error::Config("LoRA needs at least one target".into()));
        }
        let mut targets = targets.to_vec();
        targets.sort();
        targets.dedup();
        let cfg = LoraConfig { rank, targets };
        let d = self.config.d_model;
        let f = self.config.d_ff;
        let adapters = LoraAdapters::build(
            &mut self.store,
            cfg.clone(),
            self.config.layers,
            |p| match p {
                Projection::FfnIn => (d, f),
                Projection::FfnOut => (f, d),
                _ => (d, d),
            },
            &mut seeded(self.config.seed, "lora"),
        )?;
        self.upper.lora = Some(adapters);
        self.config.lora = Some(cfg);
        self.store.set_frozen_prefix("upper.", true);
        Ok(())
    }

    /// Adds the fine-tuning output head. Fails if one is already attached.
    pub fn attach_task_head(&mut self, task: TaskHeadConfig) -> Result<()> {
        if self.task_head.is_some() {
            return Err(Error::Config("a task head is already attached".into()));
        }
        let mut cfg = self.config.clone();
        cfg.task = Some(task);
        cfg.validate()?;
        self.task_head = Some(affine_head(
            &mut self.store,
            "task.head",
            self.config.d_model,
            task.outputs(),
            self.config.head_init_std,
            self.config.seed,
        )?);
        self.config = cfg;
        Ok(())
    }

    /// Sets group trainability for a phase. The lower encoder is always frozen;
    /// with adapters present the base upper encoder stays frozen too.
    pub fn configure(&mut self, phase: Phase) {
        let lora = self.upper.lora.is_some();
        let (upper, embeddings, heads, task, mlm) = match phase {
            Phase::Pretrain { train_heads } => (true, false, train_heads, false, false),
            Phase::Mlm => (true, true, false, false, true),
            Phase::FineTune => (true, true, false, true, false),
        };
        self.store.set_frozen_prefix("upper.", !(upper && !lora));
        self.store.set_frozen_prefix("lora.", !lora);
        self.store.set_frozen_prefix("embeddings.", !embeddings);
        self.store.set_frozen_prefix("heads.", !heads);
        self.store.set_frozen_prefix("task.", !task);
        self.store.set_frozen_prefix("mlm.", !mlm);
    }

    pub fn tape<T: Real>(&self) -> Tape<'_, T> {
        Tape::with_params(&self.store)
    }

    /// Frozen featurizer output for a document's sentences.
    pub fn embed_sentences(&self, doc: &Document) -> Result<SentenceMatrix> {
        self.lower
            .embed_sentences(&doc.sentences, self.config.max_sentences)
    }

    /// Upper-encoder outputs over sentence embeddings (no positional signal).
    pub fn encode_sentences_on<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        sentences: &SentenceMatrix,
    ) -> Result<Var> {
        let x = tape.constant_f32(sentences.rows, sentences.cols, &sentences.data)?;
        self.upper.forward(tape, x)
    }

    /// Document representation: mean of the upper outputs over sentence positions.
    pub fn doc_vector_on<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        sentences: &SentenceMatrix,
    ) -> Result<Var> {
        let h = self.encode_sentences_on(tape, sentences)?;
        tape.mean_rows(h)
    }

    pub fn encode_matrix(&self, sentences: &SentenceMatrix) -> Result<Vec<f32>> {
        let mut tape: Tape<f32> = self.tape();
        let v = self.doc_vector_on(&mut tape, sentences)?;
        Ok(tape.value(v).to_vec())
    }

    pub fn encode_document(&self, doc: &Document) -> Result<Vec<f32>> {
        let m = self.embed_sentences(doc)?;
        self.encode_matrix(&m)
    }

    /// Token-path input rows: token vector plus learned position vector.
    pub fn token_inputs_on<T: Real>(&self, tape: &mut Tape<'_, T>, ids: &[usize]) -> Result<Var> {
        let max = self.embeddings.max_positions;
        if ids.is_empty() || ids.len() > max {
            return Err(Error::Length {
                len: ids.len(),
                max,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.embeddings.vocab_size) {
            return Err(Error::Vocabulary {
                id: bad,
                vocab: self.embeddings.vocab_size,
            });
        }
        let table = tape.param(self.embeddings.token);
        let tokens = tape.gather_rows(table, ids)?;
        let pos_table = tape.param(self.embeddings.position);
        let positions = tape.slice_rows(pos_table, 0, ids.len())?;
        tape.add(tokens, positions)
    }

    pub fn forward_tokens_on<T: Real>(&self, tape: &mut Tape<'_, T>, ids: &[usize]) -> Result<Var> {
        let x = self.token_inputs_on(tape, ids)?;
        self.upper.forward(tape, x)
    }

    /// Contextual representations `T×d_model`, row-major.
    pub fn forward_tokens(&self, ids: &[usize]) -> Result<Vec<f32>> {
        let mut tape: Tape<f32> = self.tape();
        let h = self.forward_tokens_on(&mut tape, ids)?;
        Ok(tape.value(h).to_vec())
    }

    /// Per-level logits for a `1×d_model` document vector.
    pub fn hierarchy_logits_on<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        doc_vector: Var,
    ) -> Result<Vec<Var>> {
        let (r, c) = tape.shape(doc_vector);
        if r != 1 || c != self.config.d_model {
            return Err(Error::dim("classify_hierarchy", &[r, c], &[1, self.config.d_model]));
        }
        self.heads
            .levels
            .iter()
            .map(|&(w, b)| {
                let wv = tape.param(w);
                let bv = tape.param(b);
                let xw = tape.matmul(doc_vector, wv)?;
                tape.add_row(xw, bv)
            })
            .collect()
    }

    pub fn classify_hierarchy(&self, doc_vector: &[f32]) -> Result<Vec<Vec<f32>>> {
        let mut tape: Tape<f32> = self.tape();
        let v = tape.constant_f32(1, doc_vector.len(), doc_vector)?;
        let logits = self.hierarchy_logits_on(&mut tape, v)?;
        Ok(logits.into_iter().map(|l| tape.value(l).to_vec()).collect())
    }

    fn apply_head<T: Real>(
        tape: &mut Tape<'_, T>,
        head: Option<AffineHead>,
        what: &str,
        reps: Var,
    ) -> Result<Var> {
        let head = head.ok_or_else(|| Error::Config(format!("model has no {what} head")))?;
        let w = tape.param(head.weight);
        let b = tape.param(head.bias);
        let xw = tape.matmul(reps, w)?;
        tape.add_row(xw, b)
    }

    /// Task-head logits for every row of `reps`.
    pub fn task_logits_on<T: Real>(&self, tape: &mut Tape<'_, T>, reps: Var) -> Result<Var> {
        Self::apply_head(tape, self.task_head, "task", reps)
    }

    pub fn mlm_logits_on<T: Real>(&self, tape: &mut Tape<'_, T>, reps: Var) -> Result<Var> {
        Self::apply_head(tape, self.mlm_head, "masked-token", reps)
    }

    /// Number of trainable scalars under the current phase.
    pub fn trainable_parameters(&self) -> usize {
        self.store.trainable_count()
    }
}

fn affine_head(
    store: &mut ParamStore,
    group: &str,
    d: usize,
    outputs: usize,
    std: f32,
    seed: u64,
) -> Result<AffineHead> {
    let mut rng = seeded(seed, group);
    let weight = store.add(
        group,
        &format!("{group}.weight"),
        Tensor::new(vec![d, outputs], normal_vec(&mut rng, d * outputs, std))?,
    )?;
    let bias = store.add(group, &format!("{group}.bias"), Tensor::zeros(vec![outputs]))?;
    Ok(AffineHead { weight, bias })
}
