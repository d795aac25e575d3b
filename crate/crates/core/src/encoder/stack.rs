//! Post-norm transformer encoder layers shared by the upper and lower encoders.

use serde::{Deserialize, Serialize};

use super::lora::{LoraAdapters, Projection};
use crate::error::{Error, Result};
use crate::numcore::{ParamId, ParamStore, Real, Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::rng::{normal_vec, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config("d_model and d_ff must be positive".into()));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerParams {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub config: StackConfig,
    pub layers: Vec<LayerParams>,
}

/// Intermediate values exposed for inspection.
pub struct StackTrace {
    pub output: Var,
    /// One `T×T` probability matrix per layer and head.
    pub attention: Vec<Var>,
}

impl TransformerStack {
    /// Registers parameters under `prefix` with groups `{prefix}.attn.query`,
    /// `.attn.key`, `.attn.value`, `.attn.output`, `.ffn` and `.norm`.
    pub fn build(
        store: &mut ParamStore,
        prefix: &str,
        config: StackConfig,
        init_std: f32,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let f = config.d_ff;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut mat = |group: &str, name: &str, rows: usize, cols: usize, rng: &mut Rng| {
                store.add(
                    &format!("{prefix}.{group}"),
                    &format!("{prefix}.layer{l}.{name}"),
                    Tensor::new(vec![rows, cols], normal_vec(rng, rows * cols, init_std))?,
                )
            };
            let wq = mat("attn.query", "attn.wq", d, d, rng)?;
            let wk = mat("attn.key", "attn.wk", d, d, rng)?;
            let wv = mat("attn.value", "attn.wv", d, d, rng)?;
            let wo = mat("attn.output", "attn.wo", d, d, rng)?;
            let w1 = mat("ffn", "ffn.w1", d, f, rng)?;
            let w2 = mat("ffn", "ffn.w2", f, d, rng)?;
            let mut vec_param = |group: &str, name: &str, len: usize, fill: f32| {
                store.add(
                    &format!("{prefix}.{group}"),
                    &format!("{prefix}.layer{l}.{name}"),
                    Tensor::new(vec![len], vec![fill; len])?,
                )
            };
            let bq = vec_param("attn.query", "attn.bq", d, 0.0)?;
            let bk = vec_param("attn.key", "attn.bk", d, 0.0)?;
            let bv = vec_param("attn.value", "attn.bv", d, 0.0)?;
            let bo = vec_param("attn.output", "attn.bo", d, 0.0)?;
            let b1 = vec_param("ffn", "ffn.b1", f, 0.0)?;
            let b2 = vec_param("ffn", "ffn.b2", d, 0.0)?;
            let ln1_gain = vec_param("norm", "ln1.gain", d, 1.0)?;
            let ln1_bias = vec_param("norm", "ln1.bias", d, 0.0)?;
            let ln2_gain = vec_param("norm", "ln2.gain", d, 1.0)?;
            let ln2_bias = vec_param("norm", "ln2.bias", d, 0.0)?;
            layers.push(LayerParams {
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln1_gain,
                ln1_bias,
                w1,
                b1,
                w2,
                b2,
                ln2_gain,
                ln2_bias,
            });
        }
        Ok(Self { config, layers })
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        lora: Option<&LoraAdapters>,
    ) -> Result<Var> {
        Ok(self.forward_traced(tape, x, lora)?.output)
    }

    /// Runs every layer on a `T×d_model` input and returns the `T×d_model` output.
    pub fn forward_traced<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        lora: Option<&LoraAdapters>,
    ) -> Result<StackTrace> {
        let (rows, cols) = tape.shape(x);
        if cols != self.config.d_model {
            return Err(Error::dim("encoder input", &[rows, cols], &[rows, self.config.d_model]));
        }
        if rows == 0 {
            return Err(Error::Length { len: 0, max: 0 });
        }
        let mut h = x;
        let mut attention = Vec::new();
        for (l, p) in self.layers.iter().enumerate() {
            let (attn_out, probs) = self.attention(tape, h, l, p, lora)?;
            attention.extend(probs);
            let res = tape.add(h, attn_out)?;
            let g1 = tape.param(p.ln1_gain);
            let b1 = tape.param(p.ln1_bias);
            h = tape.layer_norm(res, g1, b1, LAYER_NORM_EPS)?;

            let inner = project(tape, h, p.w1, p.b1, lora.and_then(|a| a.get(l, Projection::FfnIn)))?;
            let act = tape.gelu(inner);
            let ff = project(tape, act, p.w2, p.b2, lora.and_then(|a| a.get(l, Projection::FfnOut)))?;
            let res = tape.add(h, ff)?;
            let g2 = tape.param(p.ln2_gain);
            let b2 = tape.param(p.ln2_bias);
            h = tape.layer_norm(res, g2, b2, LAYER_NORM_EPS)?;
        }
        Ok(StackTrace {
            output: h,
            attention,
        })
    }

    fn attention<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        layer: usize,
        p: &LayerParams,
        lora: Option<&LoraAdapters>,
    ) -> Result<(Var, Vec<Var>)> {
        let adapter = |proj| lora.and_then(|a| a.get(layer, proj));
        let q = project(tape, x, p.wq, p.bq, adapter(Projection::Query))?;
        let k = project(tape, x, p.wk, p.bk, adapter(Projection::Key))?;
        let v = project(tape, x, p.wv, p.bv, adapter(Projection::Value))?;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        let mut probs = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = tape.slice_cols(q, h * hd, hd)?;
            let kh = tape.slice_cols(k, h * hd, hd)?;
            let vh = tape.slice_cols(v, h * hd, hd)?;
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let a = tape.softmax(scores)?;
            probs.push(a);
            heads.push(tape.matmul(a, vh)?);
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        let out = project(tape, merged, p.wo, p.bo, adapter(Projection::Output))?;
        Ok((out, probs))
    }
}

fn project<T: Real>(
    tape: &mut Tape<'_, T>,
    x: Var,
    w: ParamId,
    b: ParamId,
    adapter: Option<super::lora::AdapterPair>,
) -> Result<Var> {
    let wv = tape.param(w);
    let bv = tape.param(b);
    let xw = tape.matmul(x, wv)?;
    let mut y = tape.add_row(xw, bv)?;
    if let Some(pair) = adapter {
        let a = tape.param(pair.a);
        let bb = tape.param(pair.b);
        let xa = tape.matmul(x, a)?;
        let delta = tape.matmul(xa, bb)?;
        y = tape.add(y, delta)?;
    }
    Ok(y)
}
