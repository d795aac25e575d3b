use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::drift::{drift_between, DriftReport, Snapshot};
use super::schedule::{linear_lr, steps_per_epoch};
use crate::datapipe::{Corpus, HierarchyLabels, Taxonomy, Triplet};
use crate::encoder::{FastDocModel, LoraConfig, Phase, SentenceMatrix};
use crate::error::{Error, Result};
use crate::losses::{hierarchical_loss_on, total_loss, triplet_loss_on, LossFlags, MARGIN};
use crate::numcore::{adamw_step, clip_grad_norm, AdamWConfig, AdamWState, Gradients, Real, Tape, Var};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossFlags,
    /// Apply the hierarchical loss to the negative document as well as the
    /// anchor and positive.
    pub hier_include_negative: bool,
    pub lora: Option<LoraConfig>,
    /// Joint gradient-norm cap; no clipping when absent.
    pub clip_norm: Option<f32>,
    /// Steps between drift reports; a final report is always added.
    pub drift_interval: usize,
    pub adamw: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            initial_lr: 5e-5,
            epochs: 1,
            seed: 0,
            loss: LossFlags::Both,
            hier_include_negative: true,
            lora: None,
            clip_norm: None,
            drift_interval: 10,
            adamw: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn margin(&self) -> f64 {
        MARGIN
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return Err(Error::Config("initial_lr must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.drift_interval == 0 {
            return Err(Error::Config("drift_interval must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub triplet_loss: f64,
    pub hier_loss: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub steps: usize,
    pub losses: Vec<StepLog>,
    pub drift: Vec<DriftReport>,
    pub optimizer: AdamWState,
}

impl PretrainOutcome {
    pub fn final_drift(&self) -> Option<&DriftReport> {
        self.drift.last()
    }
}

/// Padded per-level labels for every document; documents without a
/// hierarchy get all-null labels.
pub fn hierarchy_labels(corpus: &Corpus, taxonomy: &Taxonomy) -> Result<HashMap<String, HierarchyLabels>> {
    corpus
        .documents
        .iter()
        .map(|d| {
            let path = d.hierarchy.as_deref().unwrap_or(&[]);
            Ok((d.id.clone(), taxonomy.pad_hierarchy(path)?))
        })
        .collect()
}

/// Sentence matrices for every listed id, computed once.
pub(crate) fn featurize<'a>(
    model: &FastDocModel,
    corpus: &Corpus,
    ids: impl Iterator<Item = &'a str>,
) -> Result<HashMap<String, SentenceMatrix>> {
    let mut out = HashMap::new();
    for id in ids {
        if out.contains_key(id) {
            continue;
        }
        let doc = corpus
            .get(id)
            .ok_or_else(|| Error::Validation(format!("triplet references unknown document {id:?}")))?;
        out.insert(id.to_string(), model.embed_sentences(doc)?);
    }
    Ok(out)
}

/// Computes the mean per-triplet objective of one batch on the tape and
/// returns `(loss, mean triplet term, mean hierarchical term)`.
pub fn batch_loss_on<T: Real>(
    model: &FastDocModel,
    tape: &mut Tape<'_, T>,
    batch: &[&Triplet],
    features: &HashMap<String, SentenceMatrix>,
    labels: &HashMap<String, HierarchyLabels>,
    loss: LossFlags,
    hier_include_negative: bool,
) -> Result<(Var, f64, f64)> {
    let mut docs: HashMap<&str, (Var, Option<Vec<Var>>)> = HashMap::new();
    let mut terms: Vec<Var> = Vec::new();
    let mut sum_t = 0.0;
    let mut sum_h = 0.0;
    for t in batch {
        let ids = [t.anchor_id.as_str(), t.positive_id.as_str(), t.negative_id.as_str()];
        let mut vecs = Vec::with_capacity(3);
        for id in &ids {
            if !docs.contains_key(id) {
                let m = features
                    .get(*id)
                    .ok_or_else(|| Error::Validation(format!("no features for document {id:?}")))?;
                let v = model.doc_vector_on(tape, m)?;
                docs.insert(id, (v, None));
            }
            vecs.push(docs[id].0);
        }
        if loss.triplet() {
            let l = triplet_loss_on(tape, vecs[0], vecs[1], vecs[2])?;
            sum_t += tape.scalar(l).to_f64();
            terms.push(l);
        }
        if loss.hier() {
            let members = if hier_include_negative { 3 } else { 2 };
            let mut logits = Vec::with_capacity(members);
            let mut targets = Vec::with_capacity(members);
            for id in &ids[..members] {
                let entry = docs.get_mut(id).expect("inserted above");
                if entry.1.is_none() {
                    entry.1 = Some(model.hierarchy_logits_on(tape, entry.0)?);
                }
                logits.push(entry.1.clone().expect("set above"));
                targets.push(
                    labels
                        .get(*id)
                        .ok_or_else(|| Error::Validation(format!("no labels for document {id:?}")))?,
                );
            }
            let h = hierarchical_loss_on(tape, &logits, &targets)?;
            sum_h += tape.scalar(h).to_f64();
            terms.push(h);
        }
    }
    let n = batch.len() as f64;
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    let mean = tape.scale(total, 1.0 / n);
    Ok((mean, sum_t / n, sum_h / n))
}

fn validate_inputs(
    model: &FastDocModel,
    corpus: &Corpus,
    triplets: &[Triplet],
    labels: &HashMap<String, HierarchyLabels>,
    cfg: &TrainConfig,
) -> Result<()> {
    if triplets.is_empty() {
        return Err(Error::Validation("no triplets to train on".into()));
    }
    let depth = model.heads.depth();
    if cfg.loss.hier() && depth == 0 {
        return Err(Error::Config(
            "hierarchical loss requested but the model has no classification heads".into(),
        ));
    }
    for t in triplets {
        for id in [&t.anchor_id, &t.positive_id, &t.negative_id] {
            if corpus.get(id).is_none() {
                return Err(Error::Validation(format!("triplet references unknown document {id:?}")));
            }
            if cfg.loss.hier() {
                let l = labels
                    .get(id)
                    .ok_or_else(|| Error::Validation(format!("no labels for document {id:?}")))?;
                if l.levels.len() != depth {
                    return Err(Error::Validation(format!(
                        "labels of {id:?} have {} levels, expected {depth}",
                        l.levels.len()
                    )));
                }
                for (j, (&y, &w)) in l.levels.iter().zip(&model.heads.widths).enumerate() {
                    if y >= w {
                        return Err(Error::Validation(format!(
                            "label {y} of {id:?} at level {} exceeds head width {w}",
                            j + 1
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Document-level pre-training over mined triplets. Only the upper encoder
/// (or its adapters) and, when the hierarchical loss is on, the level heads
/// are updated.
pub fn pretrain(
    model: &mut FastDocModel,
    corpus: &Corpus,
    triplets: &[Triplet],
    labels: &HashMap<String, HierarchyLabels>,
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    validate_inputs(model, corpus, triplets, labels, cfg)?;
    if let Some(l) = &cfg.lora {
        if model.upper.lora.is_none() {
            model.apply_lora(l.rank, &l.targets)?;
        }
    }
    model.configure(Phase::Pretrain {
        train_heads: cfg.loss.hier(),
    });

    let features = featurize(
        model,
        corpus,
        triplets
            .iter()
            .flat_map(|t| [t.anchor_id.as_str(), t.positive_id.as_str(), t.negative_id.as_str()]),
    )?;

    let per_epoch = steps_per_epoch(triplets.len(), cfg.batch_size);
    let total_steps = per_epoch * cfg.epochs;
    let before = Snapshot::of_model(model);
    let mut state = AdamWState::default();
    let mut losses = Vec::with_capacity(total_steps);
    let mut drift = Vec::new();
    let mut rng = seeded(cfg.seed, "trainer.shuffle");
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Triplet> = chunk.iter().map(|&i| &triplets[i]).collect();
            let lr = linear_lr(cfg.initial_lr, step, total_steps);
            let (grads, loss, lt, lh): (Gradients<f32>, f64, f64, f64) = {
                let mut tape: Tape<f32> = model.tape();
                let (l, lt, lh) = batch_loss_on(
                    model,
                    &mut tape,
                    &batch,
                    &features,
                    labels,
                    cfg.loss,
                    cfg.hier_include_negative,
                )?;
                let loss = f64::from(tape.scalar(l));
                (tape.backward(l)?, loss, lt, lh)
            };
            total_loss(lt, lh)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss became {loss} at step {step}")));
            }
            model.store.zero_grad();
            grads.accumulate_into(&mut model.store)?;
            if let Some(max) = cfg.clip_norm {
                clip_grad_norm(&mut model.store, max);
            }
            adamw_step(&mut model.store, &mut state, lr as f32, &cfg.adamw)?;
            step += 1;
            log::debug!("step {step}/{total_steps} lr {lr:.3e} loss {loss:.6}");
            losses.push(StepLog {
                step,
                epoch,
                lr,
                loss,
                triplet_loss: lt,
                hier_loss: lh,
            });
            if step % cfg.drift_interval == 0 || step == total_steps {
                drift.push(drift_between(&before, &Snapshot::of_model(model), step)?);
            }
        }
    }
    model.store.zero_grad();
    Ok(PretrainOutcome {
        steps: step,
        losses,
        drift,
        optimizer: state,
    })
}
