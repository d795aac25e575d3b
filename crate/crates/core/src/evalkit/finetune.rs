//! Fine-tuning over the token path with a task head.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{
    encode_pair, encode_span, encode_tagged, LabeledSequence, PairExample, SpanQaExample,
};
use super::metrics::{argmax, best_span, span_metrics, ConfusionMatrix, Span};
use crate::encoder::{FastDocModel, Phase, TaskHeadConfig, Tokenizer};
use crate::error::{Error, Result};
use crate::numcore::{adamw_step, clip_grad_norm, AdamWConfig, AdamWState, Gradients, ParamStore, Tape, Var};
use crate::rng::seeded;
use crate::trainer::{linear_lr, steps_per_epoch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many epochs without dev improvement.
    pub patience: Option<usize>,
    pub clip_norm: Option<f32>,
    pub adamw: AdamWConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            epochs: 30,
            batch_size: 8,
            seed: 0,
            patience: Some(5),
            clip_norm: None,
            adamw: AdamWConfig::default(),
        }
    }
}

impl FinetuneConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskData {
    Span(Vec<SpanQaExample>),
    Tagging {
        examples: Vec<LabeledSequence>,
        num_classes: usize,
    },
    Pair(Vec<PairExample>),
}

impl TaskData {
    pub fn len(&self) -> usize {
        match self {
            TaskData::Span(v) => v.len(),
            TaskData::Tagging { examples, .. } => examples.len(),
            TaskData::Pair(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self) -> TaskHeadConfig {
        match self {
            TaskData::Span(_) => TaskHeadConfig::SpanQa,
            TaskData::Tagging { num_classes, .. } => TaskHeadConfig::TokenClassification {
                num_classes: *num_classes,
            },
            TaskData::Pair(_) => TaskHeadConfig::PairClassification,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TaskData::Span(v) => v.iter().try_for_each(SpanQaExample::validate),
            TaskData::Tagging {
                examples,
                num_classes,
            } => examples.iter().try_for_each(|e| e.validate(*num_classes)),
            TaskData::Pair(v) => v.iter().try_for_each(PairExample::validate),
        }
    }
}

/// Dev-set scores. `primary` drives model selection: exact match for spans,
/// macro-F1 for tagging, accuracy for pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub primary: f64,
    pub exact_match: Option<f64>,
    pub f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: TaskMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best: TaskMetrics,
    pub history: Vec<EpochLog>,
}

enum Encoded {
    Span(super::data::EncodedSpan),
    Tagged(Vec<usize>, Vec<usize>),
    Pair(Vec<usize>, usize),
}

fn encode_all(model: &FastDocModel, data: &TaskData) -> Result<Vec<Encoded>> {
    let tok = Tokenizer::new(model.config.vocab_size)?;
    let p = model.config.max_positions;
    Ok(match data {
        TaskData::Span(v) => v
            .iter()
            .map(|e| encode_span(&tok, e, p).map(Encoded::Span))
            .collect::<Result<_>>()?,
        TaskData::Tagging { examples, .. } => examples
            .iter()
            .map(|e| {
                let (ids, labels) = encode_tagged(&tok, e, p);
                Encoded::Tagged(ids, labels)
            })
            .collect(),
        TaskData::Pair(v) => v
            .iter()
            .map(|e| Encoded::Pair(encode_pair(&tok, e, p), e.label))
            .collect(),
    })
}

fn example_loss(model: &FastDocModel, tape: &mut Tape<'_, f32>, ex: &Encoded) -> Result<Var> {
    match ex {
        Encoded::Span(enc) => {
            let h = model.forward_tokens_on(tape, &enc.ids)?;
            let logits = model.task_logits_on(tape, h)?;
            let start = tape.slice_cols(logits, 0, 1)?;
            let start = tape.transpose(start);
            let end = tape.slice_cols(logits, 1, 1)?;
            let end = tape.transpose(end);
            let ls = tape.cross_entropy(start, &[enc.target.0])?;
            let le = tape.cross_entropy(end, &[enc.target.1])?;
            let sum = tape.add(ls, le)?;
            Ok(tape.scale(sum, 0.5))
        }
        Encoded::Tagged(ids, labels) => {
            let h = model.forward_tokens_on(tape, ids)?;
            let words = tape.slice_rows(h, 1, labels.len())?;
            let logits = model.task_logits_on(tape, words)?;
            let ce = tape.cross_entropy(logits, labels)?;
            Ok(tape.scale(ce, 1.0 / labels.len() as f64))
        }
        Encoded::Pair(ids, label) => {
            let h = model.forward_tokens_on(tape, ids)?;
            let first = tape.slice_rows(h, 0, 1)?;
            let logits = model.task_logits_on(tape, first)?;
            tape.cross_entropy(logits, &[*label])
        }
    }
}

fn task_logits(model: &FastDocModel, ids: &[usize]) -> Result<(Vec<f32>, usize)> {
    let mut tape: Tape<f32> = model.tape();
    let h = model.forward_tokens_on(&mut tape, ids)?;
    let logits = model.task_logits_on(&mut tape, h)?;
    let cols = tape.shape(logits).1;
    Ok((tape.value(logits).to_vec(), cols))
}

/// Predicted span in input positions for an encoded example.
fn predict_span(model: &FastDocModel, enc: &super::data::EncodedSpan) -> Result<Span> {
    let (logits, _) = task_logits(model, &enc.ids)?;
    let start: Vec<f32> = logits.chunks(2).map(|r| r[0]).collect();
    let end: Vec<f32> = logits.chunks(2).map(|r| r[1]).collect();
    Ok(best_span(&start, &end, enc.context.0, enc.context.1))
}

/// Scores `data` with the current model.
pub fn evaluate(model: &FastDocModel, data: &TaskData) -> Result<TaskMetrics> {
    let encoded = encode_all(model, data)?;
    match data {
        TaskData::Span(_) => {
            let mut pred = Vec::new();
            let mut gold = Vec::new();
            for e in &encoded {
                if let Encoded::Span(enc) = e {
                    pred.push(predict_span(model, enc)?);
                    gold.push(enc.target);
                }
            }
            let m = span_metrics(&pred, &gold);
            Ok(TaskMetrics {
                primary: m.exact_match,
                exact_match: Some(m.exact_match),
                f1: Some(m.f1),
                examples: m.examples,
                ..TaskMetrics::default()
            })
        }
        TaskData::Tagging { num_classes, .. } => {
            let mut cm = ConfusionMatrix::new(*num_classes);
            for e in &encoded {
                if let Encoded::Tagged(ids, labels) = e {
                    let (logits, cols) = task_logits(model, ids)?;
                    for (t, &g) in labels.iter().enumerate() {
                        let row = &logits[(t + 1) * cols..(t + 2) * cols];
                        cm.add(g, argmax(row));
                    }
                }
            }
            Ok(TaskMetrics {
                primary: cm.macro_f1(),
                macro_f1: Some(cm.macro_f1()),
                accuracy: Some(cm.accuracy()),
                examples: encoded.len(),
                ..TaskMetrics::default()
            })
        }
        TaskData::Pair(_) => {
            let mut cm = ConfusionMatrix::new(2);
            for e in &encoded {
                if let Encoded::Pair(ids, label) = e {
                    let (logits, cols) = task_logits(model, ids)?;
                    cm.add(*label, argmax(&logits[..cols]));
                }
            }
            Ok(TaskMetrics {
                primary: cm.accuracy(),
                accuracy: Some(cm.accuracy()),
                f1: Some(cm.f1(1)),
                macro_f1: Some(cm.macro_f1()),
                examples: encoded.len(),
                ..TaskMetrics::default()
            })
        }
    }
}

fn restore(model: &mut FastDocModel, best: &ParamStore) {
    for id in best.ids().collect::<Vec<_>>() {
        let src = best.tensor(id).data().to_vec();
        model.store.tensor_mut(id).data_mut().copy_from_slice(&src);
    }
}

/// Trains the upper encoder (or its adapters), the token-embedding table and
/// the task head; keeps the parameters of the best dev epoch.
pub fn finetune(
    model: &mut FastDocModel,
    train: &TaskData,
    dev: &TaskData,
    cfg: &FinetuneConfig,
) -> Result<FinetuneReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Validation("no training examples".into()));
    }
    train.validate()?;
    dev.validate()?;
    if train.head() != dev.head() {
        return Err(Error::Config("train and dev sets are for different tasks".into()));
    }
    match model.config.task {
        None => model.attach_task_head(train.head())?,
        Some(h) if h != train.head() => {
            return Err(Error::Config(format!(
                "model head {h:?} does not match task {:?}",
                train.head()
            )))
        }
        Some(_) => {}
    }
    model.configure(Phase::FineTune);

    let encoded = encode_all(model, train)?;
    let total_steps = steps_per_epoch(encoded.len(), cfg.batch_size) * cfg.epochs;
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut rng = seeded(cfg.seed, "finetune.shuffle");
    let mut state = AdamWState::default();
    let mut history = Vec::new();
    let mut best: Option<(usize, TaskMetrics, ParamStore)> = None;
    let mut step = 0;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let lr = linear_lr(cfg.lr, step, total_steps);
            let (grads, loss): (Gradients<f32>, f64) = {
                let mut tape: Tape<f32> = model.tape();
                let mut total = None;
                for &i in chunk {
                    let l = example_loss(model, &mut tape, &encoded[i])?;
                    total = Some(match total {
                        Some(acc) => tape.add(acc, l)?,
                        None => l,
                    });
                }
                let mean = tape.scale(total.expect("non-empty chunk"), 1.0 / chunk.len() as f64);
                let loss = f64::from(tape.scalar(mean));
                (tape.backward(mean)?, loss)
            };
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("fine-tuning loss became {loss}")));
            }
            loss_sum += loss * chunk.len() as f64;
            model.store.zero_grad();
            grads.accumulate_into(&mut model.store)?;
            if let Some(max) = cfg.clip_norm {
                clip_grad_norm(&mut model.store, max);
            }
            adamw_step(&mut model.store, &mut state, lr as f32, &cfg.adamw)?;
            step += 1;
        }
        let metrics = if dev.is_empty() {
            evaluate(model, train)?
        } else {
            evaluate(model, dev)?
        };
        log::info!("epoch {} dev {:.4}", epoch + 1, metrics.primary);
        history.push(EpochLog {
            epoch: epoch + 1,
            train_loss: loss_sum / encoded.len() as f64,
            dev: metrics.clone(),
        });
        let improved = best.as_ref().is_none_or(|(_, m, _)| metrics.primary > m.primary);
        if improved {
            best = Some((epoch + 1, metrics, model.store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    let (best_epoch, best_metrics, best_store) = best.expect("at least one epoch");
    restore(model, &best_store);
    model.store.zero_grad();
    Ok(FinetuneReport {
        epochs_run: history.len(),
        best_epoch,
        best: best_metrics,
        history,
    })
}

pub fn finetune_span_qa(
    model: &mut FastDocModel,
    train: Vec<SpanQaExample>,
    dev: Vec<SpanQaExample>,
    cfg: &FinetuneConfig,
) -> Result<FinetuneReport> {
    finetune(model, &TaskData::Span(train), &TaskData::Span(dev), cfg)
}

pub fn finetune_token_classification(
    model: &mut FastDocModel,
    train: Vec<LabeledSequence>,
    dev: Vec<LabeledSequence>,
    num_classes: usize,
    cfg: &FinetuneConfig,
) -> Result<FinetuneReport> {
    finetune(
        model,
        &TaskData::Tagging {
            examples: train,
            num_classes,
        },
        &TaskData::Tagging {
            examples: dev,
            num_classes,
        },
        cfg,
    )
}

pub fn finetune_pair_classification(
    model: &mut FastDocModel,
    train: Vec<PairExample>,
    dev: Vec<PairExample>,
    cfg: &FinetuneConfig,
) -> Result<FinetuneReport> {
    finetune(model, &TaskData::Pair(train), &TaskData::Pair(dev), cfg)
}
