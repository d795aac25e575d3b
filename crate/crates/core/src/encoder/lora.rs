//! Low-rank adapters over the upper encoder's projections.
//!
//! An adapted projection computes `x·W + b + (x·A)·B` with `A: d_in×r` and
//! `B: r×d_out`. `B` starts at zero, so a fresh adapter leaves the forward
//! pass unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{ParamId, ParamStore, Tensor};
use crate::rng::{normal_vec, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoraTarget {
    Query,
    Key,
    Value,
    Output,
    Ffn,
}

impl LoraTarget {
    pub const ALL: [LoraTarget; 5] = [
        LoraTarget::Query,
        LoraTarget::Key,
        LoraTarget::Value,
        LoraTarget::Output,
        LoraTarget::Ffn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LoraTarget::Query => "query",
            LoraTarget::Key => "key",
            LoraTarget::Value => "value",
            LoraTarget::Output => "output",
            LoraTarget::Ffn => "ffn",
        }
    }
}

impl fmt::Display for LoraTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LoraTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LoraTarget::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown LoRA target {s:?}")))
    }
}

/// Parses a comma-separated target list such as `query,value`.
pub fn parse_targets(spec: &str) -> Result<Vec<LoraTarget>> {
    let mut out: Vec<LoraTarget> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(LoraTarget::from_str)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub targets: Vec<LoraTarget>,
}

/// The individual weight matrices an adapter can attach to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Projection {
    Query,
    Key,
    Value,
    Output,
    FfnIn,
    FfnOut,
}

impl Projection {
    fn target(self) -> LoraTarget {
        match self {
            Projection::Query => LoraTarget::Query,
            Projection::Key => LoraTarget::Key,
            Projection::Value => LoraTarget::Value,
            Projection::Output => LoraTarget::Output,
            Projection::FfnIn | Projection::FfnOut => LoraTarget::Ffn,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Projection::Query => "wq",
            Projection::Key => "wk",
            Projection::Value => "wv",
            Projection::Output => "wo",
            Projection::FfnIn => "w1",
            Projection::FfnOut => "w2",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdapterPair {
    pub a: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub struct LoraAdapters {
    pub config: LoraConfig,
    pairs: BTreeMap<(usize, Projection), AdapterPair>,
}

impl LoraAdapters {
    /// Registers adapter factors for every targeted projection of every layer.
    /// `dims(projection)` gives that projection's `(d_in, d_out)`.
    pub(crate) fn build(
        store: &mut ParamStore,
        config: LoraConfig,
        layers: usize,
        dims: impl Fn(Projection) -> (usize, usize),
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        let r = config.rank;
        for layer in 0..layers {
            for proj in [
                Projection::Query,
                Projection::Key,
                Projection::Value,
                Projection::Output,
                Projection::FfnIn,
                Projection::FfnOut,
            ] {
                if !config.targets.contains(&proj.target()) {
                    continue;
                }
                let (d_in, d_out) = dims(proj);
                let group = format!("lora.{}", proj.target());
                let a_std = 1.0 / (d_in as f32).sqrt();
                let a = store.add(
                    &group,
                    &format!("lora.layer{layer}.{}.a", proj.label()),
                    Tensor::new(vec![d_in, r], normal_vec(rng, d_in * r, a_std))?,
                )?;
                let b = store.add(
                    &group,
                    &format!("lora.layer{layer}.{}.b", proj.label()),
                    Tensor::zeros(vec![r, d_out]),
                )?;
                pairs.insert((layer, proj), AdapterPair { a, b });
            }
        }
        Ok(Self { config, pairs })
    }

    pub fn get(&self, layer: usize, proj: Projection) -> Option<AdapterPair> {
        self.pairs.get(&(layer, proj)).copied()
    }

    pub fn adapted_matrices(&self) -> usize {
        self.pairs.len()
    }

    /// Total number of adapter parameters.
    pub fn parameter_count(&self, store: &ParamStore) -> usize {
        self.pairs
            .values()
            .map(|p| store.tensor(p.a).len() + store.tensor(p.b).len())
            .sum()
    }
}
