use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub group: usize,
    pub tensor: Tensor,
}

/// A named set of tensors that is frozen or trained as a unit and reported
/// together by drift tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub members: Vec<ParamId>,
    pub frozen: bool,
}

/// Owns every parameter tensor of a model, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    groups: Vec<ParamGroup>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under `name` in `group`, creating the group on first use.
    pub fn add(&mut self, group: &str, name: &str, mut tensor: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Validation(format!("duplicate parameter name {name}")));
        }
        let gidx = match self.groups.iter().position(|g| g.name == group) {
            Some(i) => i,
            None => {
                self.groups.push(ParamGroup {
                    name: group.to_string(),
                    members: Vec::new(),
                    frozen: false,
                });
                self.groups.len() - 1
            }
        };
        let id = ParamId(self.entries.len());
        tensor.requires_grad = !self.groups[gidx].frozen;
        tensor.grad = None;
        self.entries.push(ParamEntry {
            name: name.to_string(),
            group: gidx,
            tensor,
        });
        self.groups[gidx].members.push(id);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn group_of(&self, id: ParamId) -> &ParamGroup {
        &self.groups[self.entries[id.0].group]
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.group_of(id).frozen
    }

    pub fn set_frozen(&mut self, group: &str, frozen: bool) -> Result<()> {
        let g = self
            .groups
            .iter_mut()
            .find(|g| g.name == group)
            .ok_or_else(|| Error::Config(format!("unknown parameter group {group}")))?;
        g.frozen = frozen;
        let members = g.members.clone();
        for id in members {
            self.entries[id.0].tensor.requires_grad = !frozen;
        }
        Ok(())
    }

    /// Freezes or unfreezes every group whose name starts with `prefix`.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) {
        let names: Vec<String> = self
            .groups
            .iter()
            .filter(|g| g.name.starts_with(prefix))
            .map(|g| g.name.clone())
            .collect();
        for name in names {
            self.set_frozen(&name, frozen).expect("group exists");
        }
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.tensor.zero_grad();
        }
    }

    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| !self.groups[e.group].frozen)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Adds `grad` into the gradient buffer of `id`, allocating it on first use.
    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[f32]) -> Result<()> {
        let t = &mut self.entries[id.0].tensor;
        if grad.len() != t.len() {
            return Err(Error::dim("accumulate_grad", t.shape(), &[grad.len()]));
        }
        match &mut t.grad {
            Some(g) => {
                for (a, &b) in g.iter_mut().zip(grad) {
                    *a += b;
                }
            }
            None => t.grad = Some(grad.to_vec()),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("g", "w", Tensor::zeros(vec![2])).unwrap();
        assert!(s.add("g", "w", Tensor::zeros(vec![2])).is_err());
    }

    #[test]
    fn freezing_updates_requires_grad() {
        let mut s = ParamStore::new();
        let a = s.add("upper.ffn", "l0.w1", Tensor::zeros(vec![2])).unwrap();
        let b = s.add("heads.level1", "h1.w", Tensor::zeros(vec![2])).unwrap();
        s.set_frozen_prefix("heads.", true);
        assert!(s.tensor(a).requires_grad);
        assert!(!s.tensor(b).requires_grad);
        assert_eq!(s.trainable_count(), 2);
    }

    #[test]
    fn gradients_accumulate() {
        let mut s = ParamStore::new();
        let a = s.add("g", "w", Tensor::zeros(vec![2])).unwrap();
        s.accumulate_grad(a, &[1.0, 2.0]).unwrap();
        s.accumulate_grad(a, &[0.5, 0.5]).unwrap();
        assert_eq!(s.tensor(a).grad.as_deref(), Some(&[1.5, 2.5][..]));
    }
}
