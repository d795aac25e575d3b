//! Masked-token pre-training of the upper encoder over the token path; the
//! baseline arm of drift comparisons.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::drift::{drift_between, Snapshot};
use super::pretrain::{PretrainOutcome, StepLog, TrainConfig};
use super::schedule::linear_lr;
use crate::datapipe::Corpus;
use crate::encoder::{FastDocModel, Phase, Tokenizer, CLS_ID, MASK_ID};
use crate::error::{Error, Result};
use crate::numcore::{adamw_step, clip_grad_norm, AdamWState, Gradients, Tape};
use crate::rng::seeded;

pub const MASK_PROBABILITY: f64 = 0.15;

/// `[CLS]` followed by the document's word ids, cut to `max_positions`.
pub fn token_sequence(tokenizer: &Tokenizer, text: &str, max_positions: usize) -> Vec<usize> {
    let mut ids = vec![CLS_ID];
    ids.extend(tokenizer.encode(text));
    ids.truncate(max_positions);
    ids
}

/// Picks masked positions (never position 0); at least one when the
/// sequence has a maskable position.
pub fn choose_masks(len: usize, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let mut picked: Vec<usize> = (1..len).filter(|_| rng.random::<f64>() < MASK_PROBABILITY).collect();
    if picked.is_empty() && len > 1 {
        picked.push(rng.random_range(1..len));
    }
    picked
}

/// Runs `total_steps` optimizer steps of masked-token prediction, each on
/// `batch_size` documents taken in shuffled order with wrap-around.
pub fn pretrain_mlm(
    model: &mut FastDocModel,
    corpus: &Corpus,
    total_steps: usize,
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if model.mlm_head.is_none() {
        return Err(Error::Config("masked-token training needs a model built with mlm_head".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Validation("empty corpus".into()));
    }
    model.configure(Phase::Mlm);
    let tokenizer = Tokenizer::new(model.config.vocab_size)?;
    let sequences: Vec<Vec<usize>> = corpus
        .documents
        .iter()
        .map(|d| token_sequence(&tokenizer, &d.full_text(), model.config.max_positions))
        .filter(|s| s.len() > 1)
        .collect();
    if sequences.is_empty() {
        return Err(Error::Validation("no document has a maskable token".into()));
    }

    let before = Snapshot::of_model(model);
    let mut state = AdamWState::default();
    let mut rng = seeded(cfg.seed, "trainer.mlm");
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(total_steps);
    let mut drift = Vec::new();

    for step in 0..total_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(sequences.len()) {
            if order.is_empty() {
                order = (0..sequences.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            batch.push(order.pop().expect("refilled"));
        }
        let masks: Vec<Vec<usize>> = batch.iter().map(|&i| choose_masks(sequences[i].len(), &mut rng)).collect();
        let lr = linear_lr(cfg.initial_lr, step, total_steps);
        let (grads, loss): (Gradients<f32>, f64) = {
            let mut tape: Tape<f32> = model.tape();
            let mut total = None;
            for (&i, positions) in batch.iter().zip(&masks) {
                let original = &sequences[i];
                let mut input = original.clone();
                for &p in positions {
                    input[p] = MASK_ID;
                }
                let h = model.forward_tokens_on(&mut tape, &input)?;
                let rows = tape.gather_rows(h, positions)?;
                let logits = model.mlm_logits_on(&mut tape, rows)?;
                let targets: Vec<usize> = positions.iter().map(|&p| original[p]).collect();
                let ce = tape.cross_entropy(logits, &targets)?;
                let ce = tape.scale(ce, 1.0 / positions.len() as f64);
                total = Some(match total {
                    Some(acc) => tape.add(acc, ce)?,
                    None => ce,
                });
            }
            let mean = tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64);
            let loss = f64::from(tape.scalar(mean));
            (tape.backward(mean)?, loss)
        };
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss became {loss} at step {step}")));
        }
        model.store.zero_grad();
        grads.accumulate_into(&mut model.store)?;
        if let Some(max) = cfg.clip_norm {
            clip_grad_norm(&mut model.store, max);
        }
        adamw_step(&mut model.store, &mut state, lr as f32, &cfg.adamw)?;
        let done = step + 1;
        losses.push(StepLog {
            step: done,
            epoch: 0,
            lr,
            loss,
            triplet_loss: 0.0,
            hier_loss: 0.0,
        });
        if done % cfg.drift_interval == 0 || done == total_steps {
            drift.push(drift_between(&before, &Snapshot::of_model(model), done)?);
        }
    }
    model.store.zero_grad();
    Ok(PretrainOutcome {
        steps: total_steps,
        losses,
        drift,
        optimizer: state,
    })
}
