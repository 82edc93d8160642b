//! Portable binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "IALPCKPT"
//! version    u32
//! config     u32 length + UTF-8 JSON
//! rng        u32 length + UTF-8 JSON (length 0 when absent)
//! count      u32
//! tensor*    u32 name length, name, u32 rank, u64 dims[rank], f32 data[prod(dims)]
//! ```
//!
//! Values are stored as `f32`, so a save after a load reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentBundle;
use crate::encoder::EncoderConfig;
use crate::env::{RewardModel, RewardModelMeta};
use crate::error::{Error, Result};
use crate::nn::{ParamSet, Tensor, TensorMap};
use crate::rng::RngState;

pub const MAGIC: &[u8; 8] = b"IALPCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Tensors plus a JSON description of what they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_json: String,
    pub rng: Option<RngState>,
    pub tensors: TensorMap,
}

/// The config snapshot stored with each kind of checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Snapshot {
    Agent { encoder: EncoderConfig, gamma: f64 },
    RewardModel { meta: RewardModelMeta },
}

impl Checkpoint {
    pub fn new(snapshot: &Snapshot, rng: Option<RngState>, tensors: TensorMap) -> Result<Self> {
        let config_json = serde_json::to_string(snapshot)
            .map_err(|e| Error::Checkpoint(format!("config snapshot: {e}")))?;
        Ok(Checkpoint {
            config_json,
            rng,
            tensors,
        })
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        serde_json::from_str(&self.config_json)
            .map_err(|e| Error::Checkpoint(format!("config snapshot: {e}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_blob(&mut out, self.config_json.as_bytes())?;
        let rng = match &self.rng {
            Some(r) => {
                serde_json::to_vec(r).map_err(|e| Error::Checkpoint(format!("rng state: {e}")))?
            }
            None => Vec::new(),
        };
        put_blob(&mut out, &rng)?;
        put_u32(&mut out, self.tensors.len())?;
        for (name, t) in self.tensors.iter() {
            put_blob(&mut out, name.as_bytes())?;
            put_u32(&mut out, t.shape().len())?;
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                let x = v as f32;
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!("tensor `{name}`")));
                }
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version mismatch: file has {version}, expected {FORMAT_VERSION}"
            )));
        }
        let config_json = String::from_utf8(r.blob()?.to_vec())
            .map_err(|_| Error::Checkpoint("config snapshot is not UTF-8".into()))?;
        let rng_bytes = r.blob()?;
        let rng = if rng_bytes.is_empty() {
            None
        } else {
            Some(
                serde_json::from_slice(rng_bytes)
                    .map_err(|e| Error::Checkpoint(format!("rng state: {e}")))?,
            )
        };
        let count = r.u32()?;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let name = String::from_utf8(r.blob()?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                shape.push(
                    usize::try_from(d)
                        .map_err(|_| Error::Checkpoint(format!("tensor `{name}` too large")))?,
                );
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` too large")))?;
            let raw = r.take(
                n.checked_mul(4)
                    .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            let t = Tensor::from_vec(&shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
            params
                .insert(name, t)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            config_json,
            rng,
            tensors: params.values().clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n)
        .map_err(|_| Error::Checkpoint(format!("length {n} does not fit in u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_blob(out: &mut Vec<u8>, blob: &[u8]) -> Result<()> {
    put_u32(out, blob.len())?;
    out.extend_from_slice(blob);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated file: wanted {n} bytes at offset {}, {} left",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub fn agent_checkpoint(agent: &AgentBundle, rng: Option<RngState>) -> Result<Checkpoint> {
    Checkpoint::new(
        &Snapshot::Agent {
            encoder: agent.config,
            gamma: agent.gamma,
        },
        rng,
        agent.params.values().clone(),
    )
}

pub fn save_checkpoint(agent: &AgentBundle, path: &Path) -> Result<()> {
    agent_checkpoint(agent, None)?.save(path)
}

/// Rebuild an agent, checking every tensor's name and shape against the stored config.
pub fn agent_from_checkpoint(ckpt: &Checkpoint) -> Result<AgentBundle> {
    let Snapshot::Agent { encoder, gamma } = ckpt.snapshot()? else {
        return Err(Error::Checkpoint(
            "checkpoint does not hold an agent".into(),
        ));
    };
    let mut params = ParamSet::new();
    for (name, t) in ckpt.tensors.iter() {
        params.insert(name.clone(), t.clone())?;
    }
    AgentBundle::from_params(encoder, gamma, params).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Checkpoint(format!("shape mismatch: {m}")),
        other => other,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<AgentBundle> {
    agent_from_checkpoint(&Checkpoint::load(path)?)
}

pub fn save_reward_model(model: &RewardModel, path: &Path) -> Result<()> {
    let (meta, tensors) = model.to_parts();
    Checkpoint::new(&Snapshot::RewardModel { meta }, None, tensors)?.save(path)
}

pub fn load_reward_model(path: &Path) -> Result<RewardModel> {
    let ckpt = Checkpoint::load(path)?;
    let Snapshot::RewardModel { meta } = ckpt.snapshot()? else {
        return Err(Error::Checkpoint(
            "checkpoint does not hold a reward model".into(),
        ));
    };
    RewardModel::from_parts(&meta, &ckpt.tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, streams};

    fn agent() -> AgentBundle {
        let cfg = EncoderConfig::new(4, 5, 7).unwrap();
        AgentBundle::new(cfg, 0.9, &mut stream_rng(3, streams::INIT)).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let rng = RngState::capture(&stream_rng(1, 2));
        agent_checkpoint(&agent(), Some(rng))
            .unwrap()
            .save(&a)
            .unwrap();
        let loaded = Checkpoint::load(&a).unwrap();
        assert_eq!(loaded.rng, Some(rng));
        loaded.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn reload_matches_distributions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let a = agent();
        save_checkpoint(&a, &path).unwrap();
        let b = load_checkpoint(&path).unwrap();
        for h in [vec![0], vec![1, 2, 3], vec![6, 6, 0, 5, 4, 3]] {
            let (p, q) = (a.policy(&h).unwrap(), b.policy(&h).unwrap());
            assert!(p.iter().zip(&q).all(|(x, y)| (x - y).abs() <= 1e-6));
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = agent_checkpoint(&agent(), None)
            .unwrap()
            .to_bytes()
            .unwrap();

        let mut bad_version = bytes.clone();
        bad_version[8] = 99;
        let err = Checkpoint::from_bytes(&bad_version).unwrap_err();
        assert!(err.to_string().contains("version mismatch"), "{err}");

        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let err = Checkpoint::from_bytes(b"NOTACKPT\x01\0\0\0").unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = agent();
        let mut tensors = a.params.values().clone();
        *tensors.get_mut(crate::agent::ACTOR_B) = Tensor::zeros(&[3]);
        let ckpt = Checkpoint::new(
            &Snapshot::Agent {
                encoder: a.config,
                gamma: a.gamma,
            },
            None,
            tensors,
        )
        .unwrap();
        let ckpt = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        let err = agent_from_checkpoint(&ckpt).unwrap_err();
        assert_eq!(err.kind(), "checkpoint");
        assert!(err.to_string().contains("actor.bias"), "{err}");
    }

    #[test]
    fn reward_model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.ckpt");
        let (_, _, truth) = crate::data::generate_synthetic(5, 6, 3, 2, 0).unwrap();
        for m in [
            RewardModel::from_ground_truth(&truth, 0.5, 1.0).unwrap(),
            RewardModel::sequential_from_ground_truth(&truth, 4, 0.5, 0.2).unwrap(),
        ] {
            save_reward_model(&m, &path).unwrap();
            let back = load_reward_model(&path).unwrap();
            let ctx = crate::env::ScoreContext {
                user: Some(1),
                history: &[0, 3],
            };
            for a in 0..6 {
                let (x, y) = (
                    m.raw_score(ctx, a).unwrap(),
                    back.raw_score(ctx, a).unwrap(),
                );
                assert!((x - y).abs() < 1e-5);
            }
        }
    }
}
