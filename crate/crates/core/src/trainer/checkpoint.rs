//! Binary checkpoint format.
//!
//! ```text
//! magic "FDCK" | version u32
//! config_len u32 | config JSON
//! lower_seed u64
//! tensor_count u32
//!   per tensor: name_len u32 | name | group_len u32 | group | ndim u32 | dims u64…
//! payloads: f32 LE, tensors in header order
//! has_optimizer u8
//!   step u64 | slot_count u32 | per slot: present u8 [m f32… | v f32…]
//! SHA-256 of every preceding byte
//! ```
//!
//! All integers are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::encoder::{FastDocModel, ModelConfig};
use crate::error::{Error, Result};
use crate::numcore::{AdamWState, Moments};

pub const MAGIC: &[u8; 4] = b"FDCK";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub group: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub lower_seed: u64,
    /// Sorted by name.
    pub tensors: Vec<NamedTensor>,
    /// Optimizer moments with slots aligned to `tensors`.
    pub optimizer: Option<AdamWState>,
}

impl Checkpoint {
    /// Captures every trainable-capable tensor of `model` (the lower encoder is
    /// recorded by seed only).
    pub fn from_model(model: &FastDocModel, optimizer: Option<&AdamWState>) -> Self {
        let store = &model.store;
        let mut ids: Vec<_> = store.ids().collect();
        ids.sort_by(|&a, &b| store.name(a).cmp(store.name(b)));
        let tensors = ids
            .iter()
            .map(|&id| {
                let e = store.entry(id);
                NamedTensor {
                    name: e.name.clone(),
                    group: store.groups()[e.group].name.clone(),
                    shape: e.tensor.shape().to_vec(),
                    data: e.tensor.data().to_vec(),
                }
            })
            .collect();
        let optimizer = optimizer.map(|st| AdamWState {
            step: st.step,
            moments: ids
                .iter()
                .map(|id| st.moments.get(id.index()).cloned().flatten())
                .collect(),
        });
        Self {
            config: model.config.clone(),
            lower_seed: model.lower.seed,
            tensors,
            optimizer,
        }
    }

    /// Like [`Checkpoint::to_model`], also returning optimizer state indexed by
    /// the rebuilt model's parameter ids.
    pub fn to_model_with_state(&self) -> Result<(FastDocModel, Option<AdamWState>)> {
        let model = self.to_model()?;
        let state = match &self.optimizer {
            None => None,
            Some(st) => {
                if st.moments.len() != self.tensors.len() {
                    return Err(Error::Corruption(format!(
                        "optimizer has {} slots for {} tensors",
                        st.moments.len(),
                        self.tensors.len()
                    )));
                }
                let mut moments = vec![None; model.store.len()];
                for (t, m) in self.tensors.iter().zip(&st.moments) {
                    let id = model.store.lookup(&t.name).expect("checked by to_model");
                    moments[id.index()] = m.clone();
                }
                Some(AdamWState {
                    step: st.step,
                    moments,
                })
            }
        };
        Ok((model, state))
    }

    /// Rebuilds the model from its configuration and overwrites every tensor.
    pub fn to_model(&self) -> Result<FastDocModel> {
        if self.lower_seed != self.config.seed {
            return Err(Error::Corruption(format!(
                "lower-encoder seed {} disagrees with model seed {}",
                self.lower_seed, self.config.seed
            )));
        }
        let mut model = FastDocModel::new(self.config.clone())?;
        if model.store.len() != self.tensors.len() {
            return Err(Error::Corruption(format!(
                "checkpoint has {} tensors, architecture expects {}",
                self.tensors.len(),
                model.store.len()
            )));
        }
        for t in &self.tensors {
            let id = model.store.lookup(&t.name).ok_or_else(|| {
                Error::Corruption(format!("unexpected tensor {:?}", t.name))
            })?;
            let target = model.store.tensor_mut(id);
            if target.shape() != t.shape.as_slice() {
                return Err(Error::Corruption(format!(
                    "tensor {:?} has shape {:?}, expected {:?}",
                    t.name,
                    t.shape,
                    target.shape()
                )));
            }
            target.data_mut().copy_from_slice(&t.data);
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let cfg = serde_json::to_vec(&self.config).expect("config serializes");
        put_bytes(&mut out, &cfg);
        out.extend_from_slice(&self.lower_seed.to_le_bytes());
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_bytes(&mut out, t.name.as_bytes());
            put_bytes(&mut out, t.group.as_bytes());
            put_u32(&mut out, t.shape.len() as u32);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            put_f32s(&mut out, &t.data);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                out.extend_from_slice(&state.step.to_le_bytes());
                put_u32(&mut out, state.moments.len() as u32);
                for slot in &state.moments {
                    match slot {
                        None => out.push(0),
                        Some(m) => {
                            out.push(1);
                            put_u32(&mut out, m.m.len() as u32);
                            put_f32s(&mut out, &m.m);
                            put_f32s(&mut out, &m.v);
                        }
                    }
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::Corruption(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Corruption("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Corruption("content digest mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let config: ModelConfig = serde_json::from_slice(r.bytes()?)
            .map_err(|e| Error::Corruption(format!("config: {e}")))?;
        let lower_seed = r.u64()?;
        let count = r.u32()? as usize;
        let mut headers = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let group = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            headers.push((name, group, shape));
        }
        let mut tensors = Vec::with_capacity(headers.len());
        for (name, group, shape) in headers {
            let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
                Error::Corruption(format!("tensor {name:?} shape overflows"))
            })?;
            let data = r.f32s(len)?;
            tensors.push(NamedTensor {
                name,
                group,
                shape,
                data,
            });
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let slots = r.u32()? as usize;
                let mut moments = Vec::with_capacity(slots.min(1 << 16));
                for _ in 0..slots {
                    moments.push(match r.u8()? {
                        0 => None,
                        1 => {
                            let n = r.u32()? as usize;
                            let m = r.f32s(n)?;
                            let v = r.f32s(n)?;
                            Some(Moments { m, v })
                        }
                        b => return Err(Error::Corruption(format!("bad moment flag {b}"))),
                    });
                }
                Some(AdamWState { step, moments })
            }
            b => return Err(Error::Corruption(format!("bad optimizer flag {b}"))),
        };
        if r.pos != body.len() {
            return Err(Error::Corruption(format!(
                "{} trailing bytes before digest",
                body.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            lower_seed,
            tensors,
            optimizer,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

fn put_f32s(out: &mut Vec<u8>, data: &[f32]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Corruption(format!("unexpected end of data at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| Error::Corruption("tensor name is not UTF-8".into()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| {
            Error::Corruption("payload length overflows".into())
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Writes the checkpoint through a temporary file and renames it into place.
pub fn save_checkpoint(
    model: &FastDocModel,
    optimizer: Option<&AdamWState>,
    path: impl AsRef<Path>,
) -> Result<Checkpoint> {
    let ckpt = Checkpoint::from_model(model, optimizer);
    write_atomic(path.as_ref(), &ckpt.to_bytes())?;
    Ok(ckpt)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(FastDocModel, Option<AdamWState>)> {
    read_checkpoint(path)?.to_model_with_state()
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FastDocModel {
        FastDocModel::new(ModelConfig {
            d_model: 8,
            heads: 2,
            d_ff: 16,
            layers: 1,
            lower_heads: 2,
            lower_d_ff: 16,
            lower_layers: 1,
            vocab_size: 64,
            max_positions: 8,
            level_sizes: vec![2, 3],
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn bytes_round_trip_identically() {
        let bytes = Checkpoint::from_model(&model(), None).to_bytes();
        let again = Checkpoint::from_bytes(&bytes).unwrap().to_model().unwrap();
        assert_eq!(Checkpoint::from_model(&again, None).to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = Checkpoint::from_model(&model(), None).to_bytes();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(Checkpoint::from_bytes(cut), Err(Error::Corruption(_))));
    }

    #[test]
    fn version_bump_reported() {
        let mut bytes = Checkpoint::from_model(&model(), None).to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
    }
}
