//! Triplet margin loss, summed per-level cross-entropy, and their sum.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datapipe::HierarchyLabels;
use crate::error::{Error, Result};
use crate::numcore::{Real, Tape, Var};

/// Margin of the triplet loss. Fixed.
pub const MARGIN: f64 = 1.0;

/// Which terms enter the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFlags {
    Triplet,
    Hier,
    Both,
}

impl LossFlags {
    pub fn triplet(self) -> bool {
        matches!(self, LossFlags::Triplet | LossFlags::Both)
    }

    pub fn hier(self) -> bool {
        matches!(self, LossFlags::Hier | LossFlags::Both)
    }

    pub fn label(self) -> &'static str {
        match self {
            LossFlags::Triplet => "triplet",
            LossFlags::Hier => "hier",
            LossFlags::Both => "both",
        }
    }
}

impl fmt::Display for LossFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LossFlags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triplet" => Ok(LossFlags::Triplet),
            "hier" => Ok(LossFlags::Hier),
            "both" => Ok(LossFlags::Both),
            _ => Err(Error::Config(format!(
                "unknown loss {s:?}; expected triplet, hier or both"
            ))),
        }
    }
}

/// Anchor, positive and negative doc vectors, one row per triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub anchors: Vec<Vec<f32>>,
    pub positives: Vec<Vec<f32>>,
    pub negatives: Vec<Vec<f32>>,
}

fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `max(‖d1−d2‖ − ‖d1−d3‖ + 1, 0)`.
pub fn triplet_loss(d1: &[f32], d2: &[f32], d3: &[f32]) -> Result<f64> {
    if d1.len() != d2.len() || d1.len() != d3.len() {
        return Err(Error::dim("triplet_loss", &[d1.len(), d2.len()], &[d3.len()]));
    }
    Ok((distance(d1, d2) - distance(d1, d3) + MARGIN).max(0.0))
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Mean triplet loss over the batch.
    pub fn loss(&self) -> Result<f64> {
        if self.positives.len() != self.len() || self.negatives.len() != self.len() {
            return Err(Error::dim(
                "triplet batch",
                &[self.len(), self.positives.len()],
                &[self.negatives.len()],
            ));
        }
        if self.is_empty() {
            return Err(Error::Contract("empty triplet batch".into()));
        }
        let mut total = 0.0;
        for i in 0..self.len() {
            total += triplet_loss(&self.anchors[i], &self.positives[i], &self.negatives[i])?;
        }
        Ok(total / self.len() as f64)
    }
}

/// Triplet loss for three `1×d` doc vectors on the tape.
pub fn triplet_loss_on<T: Real>(tape: &mut Tape<'_, T>, d1: Var, d2: Var, d3: Var) -> Result<Var> {
    let ap = tape.sub(d1, d2)?;
    let an = tape.sub(d1, d3)?;
    let dp = tape.l2_norm(ap);
    let dn = tape.l2_norm(an);
    let diff = tape.sub(dp, dn)?;
    let shifted = tape.offset(diff, MARGIN);
    Ok(tape.relu(shifted))
}

/// `Σ_i Σ_j CE(logits[i][j], targets[i].levels[j])` for each document `i` and level `j`.
pub fn hierarchical_loss(logits: &[Vec<Vec<f32>>], targets: &[HierarchyLabels]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::dim("hierarchical_loss", &[logits.len()], &[targets.len()]));
    }
    let mut total = 0.0;
    for (doc, t) in logits.iter().zip(targets) {
        if doc.len() != t.levels.len() {
            return Err(Error::dim("hierarchical_loss levels", &[doc.len()], &[t.levels.len()]));
        }
        for (row, &y) in doc.iter().zip(&t.levels) {
            if y >= row.len() {
                return Err(Error::Index {
                    what: "class",
                    index: y,
                    bound: row.len(),
                });
            }
            let row64: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
            total += crate::numcore::kernels::log_sum_exp(&row64) - row64[y];
        }
    }
    Ok(total)
}

/// Tape version of [`hierarchical_loss`]; `logits[i][j]` is a `1×(C_j+1)` row.
pub fn hierarchical_loss_on<T: Real>(
    tape: &mut Tape<'_, T>,
    logits: &[Vec<Var>],
    targets: &[&HierarchyLabels],
) -> Result<Var> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::dim("hierarchical_loss", &[logits.len()], &[targets.len()]));
    }
    let mut total: Option<Var> = None;
    for (doc, t) in logits.iter().zip(targets) {
        if doc.len() != t.levels.len() {
            return Err(Error::dim("hierarchical_loss levels", &[doc.len()], &[t.levels.len()]));
        }
        for (&row, &y) in doc.iter().zip(&t.levels) {
            let ce = tape.cross_entropy(row, &[y])?;
            total = Some(match total {
                Some(acc) => tape.add(acc, ce)?,
                None => ce,
            });
        }
    }
    match total {
        Some(v) => Ok(v),
        None => tape.constant(1, 1, vec![T::zero()]),
    }
}

/// `l_t + l_hier`, rejecting non-finite terms.
pub fn total_loss(l_t: f64, l_hier: f64) -> Result<f64> {
    if !l_t.is_finite() || !l_hier.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss term (triplet {l_t}, hierarchical {l_hier})"
        )));
    }
    Ok(l_t + l_hier)
}
