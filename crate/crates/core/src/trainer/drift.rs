use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use crate::encoder::{FastDocModel, LowerEncoder};
use crate::error::{Error, Result};
use crate::numcore::ParamStore;

/// Copy of every parameter value, grouped, including the lower encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// group → (tensor name → values), both in sorted order.
    groups: BTreeMap<String, BTreeMap<String, Vec<f32>>>,
}

impl Snapshot {
    pub fn of_store(store: &ParamStore) -> Self {
        let mut s = Self {
            groups: BTreeMap::new(),
        };
        s.add_store(store);
        s
    }

    fn add_store(&mut self, store: &ParamStore) {
        for e in store.entries() {
            let group = &store.groups()[e.group].name;
            self.groups
                .entry(group.clone())
                .or_default()
                .insert(e.name.clone(), e.tensor.data().to_vec());
        }
    }

    pub fn of_model(model: &FastDocModel) -> Self {
        let mut s = Self::of_store(&model.store);
        s.add_store(model.lower.store());
        s
    }

    pub fn of_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let lower = LowerEncoder::new(ckpt.lower_seed, ckpt.config.lower(), ckpt.config.init_std)?;
        let mut s = Self {
            groups: BTreeMap::new(),
        };
        for t in &ckpt.tensors {
            s.groups
                .entry(t.group.clone())
                .or_default()
                .insert(t.name.clone(), t.data.clone());
        }
        s.add_store(lower.store());
        Ok(s)
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    pub group: String,
    /// `‖θ_after − θ_before‖₁ / ‖θ_before‖₁`; 0 when the base norm is 0.
    pub relative_l1: f64,
    pub base_l1: f64,
    /// Set when the base norm is 0 and the ratio is undefined.
    pub zero_base: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub step: usize,
    pub entries: Vec<DriftEntry>,
}

impl DriftReport {
    pub fn get(&self, group: &str) -> Option<&DriftEntry> {
        self.entries.iter().find(|e| e.group == group)
    }
}

/// Per-group relative L1 change between two snapshots of one architecture.
pub fn drift_between(before: &Snapshot, after: &Snapshot, step: usize) -> Result<DriftReport> {
    let keys_b: Vec<_> = before.groups.keys().collect();
    let keys_a: Vec<_> = after.groups.keys().collect();
    if keys_b != keys_a {
        return Err(Error::Validation(format!(
            "parameter groups differ: {keys_b:?} vs {keys_a:?}"
        )));
    }
    let mut entries = Vec::with_capacity(keys_b.len());
    for (group, tb) in &before.groups {
        let ta = &after.groups[group];
        if tb.len() != ta.len() || tb.keys().ne(ta.keys()) {
            return Err(Error::Validation(format!("group {group:?} has different tensors")));
        }
        let mut base = 0.0f64;
        let mut delta = 0.0f64;
        for (name, vb) in tb {
            let va = &ta[name];
            if va.len() != vb.len() {
                return Err(Error::Validation(format!("tensor {name:?} changed size")));
            }
            for (&b, &a) in vb.iter().zip(va) {
                base += f64::from(b).abs();
                delta += (f64::from(a) - f64::from(b)).abs();
            }
        }
        let zero_base = base == 0.0;
        entries.push(DriftEntry {
            group: group.clone(),
            relative_l1: if zero_base { 0.0 } else { delta / base },
            base_l1: base,
            zero_base,
        });
    }
    Ok(DriftReport { step, entries })
}

pub fn track_drift(before: &Checkpoint, after: &Checkpoint) -> Result<DriftReport> {
    drift_between(&Snapshot::of_checkpoint(before)?, &Snapshot::of_checkpoint(after)?, 0)
}
