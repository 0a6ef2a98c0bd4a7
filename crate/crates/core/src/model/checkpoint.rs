//! `bvck1` checkpoints.
//!
//! Layout: u32 LE header length, JSON header, then tensors until EOF. Each
//! tensor is a u32-length-prefixed UTF-8 name (`audio.w1`, `text.embed`, ...),
//! u32 rank, rank x u32 dims and the f32 LE row-major data.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{EncoderParams, Mlp, TextEncoder};
use super::state::{FreezeMask, ModelState};
use crate::error::{Error, Result};
use crate::prompts::Vocabulary;

pub const CHECKPOINT_FORMAT: &str = "bvck1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDims {
    pub audio: usize,
    pub image: usize,
    pub hidden: usize,
    pub text_embed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub d: usize,
    pub dims: CheckpointDims,
    pub vocab: Vec<String>,
    pub tau: f64,
    #[serde(default)]
    pub learn_tau: bool,
    pub stage: u8,
    pub epoch: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

/// Bookkeeping stored next to the weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub stage: u8,
    pub epoch: usize,
    pub seed: u64,
    pub run_config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub meta: CheckpointMeta,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(state: &ModelState, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        d: state.dim(),
        dims: CheckpointDims {
            audio: state.audio_dim(),
            image: state.image_dim(),
            hidden: state.hidden(),
            text_embed: state.text_embed_dim(),
        },
        vocab: state.vocab.tokens().to_vec(),
        tau: state.tau,
        learn_tau: state.learn_tau,
        stage: meta.stage,
        epoch: meta.epoch,
        seed: meta.seed,
        run_config: meta.run_config.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    put_u32(&mut out, json.len())?;
    out.extend_from_slice(&json);
    for t in state.params.tensors() {
        let name = format!("{}.{}", t.tower.as_str(), t.name);
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape.len())?;
        for &d in &t.shape {
            put_u32(&mut out, d)?;
        }
        for &x in t.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end =
            end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let hlen = c.u32()?;
    let header: CheckpointHeader = serde_json::from_slice(c.take(hlen)?)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!(
            "unknown checkpoint format {:?}",
            header.format
        )));
    }
    let vocab = Vocabulary::from_tokens(header.vocab.clone())?;
    let dims = &header.dims;
    let mlp = |input: usize| Mlp {
        w1: ndarray::Array2::zeros((dims.hidden, input)),
        b1: ndarray::Array1::zeros(dims.hidden),
        w2: ndarray::Array2::zeros((header.d, dims.hidden)),
        b2: ndarray::Array1::zeros(header.d),
    };
    let mut params = EncoderParams {
        audio: mlp(dims.audio),
        image: mlp(dims.image),
        text: TextEncoder {
            embed: ndarray::Array2::zeros((vocab.len(), dims.text_embed)),
            proj: ndarray::Array2::zeros((header.d, dims.text_embed)),
        },
    };
    let mut seen = Vec::new();
    {
        let mut slots = params.tensors_mut();
        while !c.done() {
            let nlen = c.u32()?;
            let name = std::str::from_utf8(c.take(nlen)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = c.u32()?;
            let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
            let slot = slots
                .iter_mut()
                .find(|s| format!("{}.{}", s.tower.as_str(), s.name) == name)
                .ok_or_else(|| Error::Format(format!("unexpected tensor {name:?}")))?;
            if slot.shape != shape {
                return Err(Error::Format(format!(
                    "tensor {name}: shape {shape:?}, expected {:?}",
                    slot.shape
                )));
            }
            if seen.contains(&name) {
                return Err(Error::Format(format!("tensor {name} appears twice")));
            }
            let raw = c.take(slot.data.len() * 4)?;
            for (dst, chunk) in slot.data.iter_mut().zip(raw.chunks_exact(4)) {
                *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
            }
            seen.push(name);
        }
        if seen.len() != slots.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} of {} tensors",
                seen.len(),
                slots.len()
            )));
        }
    }
    if !(header.tau > 0.0) {
        return Err(Error::Format(format!(
            "temperature {} is not positive",
            header.tau
        )));
    }
    let state = ModelState {
        params,
        tau: header.tau,
        learn_tau: header.learn_tau,
        freeze: FreezeMask::default(),
        vocab,
    };
    let meta = CheckpointMeta {
        stage: header.stage,
        epoch: header.epoch,
        seed: header.seed,
        run_config: header.run_config,
    };
    Ok(Checkpoint { state, meta })
}

pub fn save_checkpoint(path: &Path, state: &ModelState, meta: &CheckpointMeta) -> Result<()> {
    let bytes = encode_checkpoint(state, meta)?;
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut f = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingCheckpoint(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::state::ModelConfig;
    use crate::taxonomy::{synthetic_registry, TaxonomyShape};

    fn state() -> ModelState {
        let reg = synthetic_registry(8, 2, &TaxonomyShape::default()).unwrap();
        let cfg = ModelConfig {
            dim: 6,
            hidden: 7,
            text_embed: 5,
            ..ModelConfig::default()
        };
        ModelState::init(&cfg, 9, 4, Vocabulary::from_registry(&reg), 11).unwrap()
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let s = state();
        let meta = CheckpointMeta {
            stage: 1,
            epoch: 30,
            seed: 42,
            run_config: Some(serde_json::json!({"lr": 0.001})),
        };
        let bytes = encode_checkpoint(&s, &meta).unwrap();
        let ck = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.meta, meta);
        assert_eq!(ck.state.vocab, s.vocab);
        for (a, b) in s.params.tensors().iter().zip(ck.state.params.tensors()) {
            for (&x, &y) in a.data.iter().zip(b.data) {
                assert_eq!(x as f32 as f64, y);
            }
        }
        // a second pass is lossless
        assert_eq!(encode_checkpoint(&ck.state, &meta).unwrap(), bytes);
    }

    #[test]
    fn truncation_and_trailing_garbage_rejected() {
        let bytes = encode_checkpoint(&state(), &CheckpointMeta::default()).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[1, 0, 0, 0, b'x']);
        assert!(decode_checkpoint(&extra).is_err());
    }

    #[test]
    fn missing_file_is_missing_checkpoint() {
        let err = load_checkpoint(Path::new("/nonexistent/ck.bin")).unwrap_err();
        assert!(matches!(err, Error::MissingCheckpoint(_)));
    }
}
