//! Versioned binary weight files.
//!
//! Layout: 8-byte magic, `u32` version, `u32` manifest length, JSON manifest,
//! then every tensor as little-endian `f32` in manifest order.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::policy::NetConfig;
use crate::sac::{Agent, SacConfig};
use crate::{LearnError, Result};

pub const MAGIC: &[u8; 8] = b"DYNFOLD\x01";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub net: NetConfig,
    pub sac: SacConfig,
    /// Last completed epoch.
    pub epoch: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub values: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent, epoch: usize) -> Self {
        let mut tensors = Vec::new();
        let mut values = Vec::new();
        agent.visit_all(&mut |p| {
            tensors.push(TensorEntry { name: p.name.clone(), len: p.len() });
            values.push(p.value.iter().map(|&v| v as f32).collect());
        });
        Self { manifest: Manifest { net: agent.net.clone(), sac: agent.cfg.clone(), epoch, tensors }, values }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let total: usize = self.values.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(16 + manifest.len() + 4 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let len = u32::try_from(manifest.len()).map_err(|_| LearnError::Checkpoint("manifest too large".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&manifest);
        for v in self.values.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| LearnError::Checkpoint("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(LearnError::Checkpoint("bad magic bytes".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| LearnError::Checkpoint("truncated header".into()))?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(LearnError::Checkpoint(format!("unsupported version {version}")));
        }
        r.read_exact(&mut word).map_err(|_| LearnError::Checkpoint("truncated header".into()))?;
        let len = u32::from_le_bytes(word) as usize;
        if r.len() < len {
            return Err(LearnError::Checkpoint("truncated manifest".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&r[..len])?;
        r = &r[len..];
        let total: usize = manifest.tensors.iter().map(|t| t.len).sum();
        if r.len() != 4 * total {
            return Err(LearnError::Checkpoint(format!("expected {} data bytes, found {}", 4 * total, r.len())));
        }
        let mut values = Vec::with_capacity(manifest.tensors.len());
        for t in &manifest.tensors {
            let (head, rest) = r.split_at(4 * t.len);
            values.push(head.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect());
            r = rest;
        }
        Ok(Self { manifest, values })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        std::fs::File::create(&tmp)?.write_all(&bytes)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Build an agent with the stored architecture and weights.
    pub fn to_agent(&self) -> Result<Agent> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut agent = Agent::new(self.manifest.net.clone(), self.manifest.sac.clone(), &mut rng)?;
        self.restore(&mut agent)?;
        Ok(agent)
    }

    /// Overwrite `agent`'s tensors; names and sizes must match exactly.
    pub fn restore(&self, agent: &mut Agent) -> Result<()> {
        let mut expected = Vec::new();
        agent.visit_all(&mut |p| expected.push(TensorEntry { name: p.name.clone(), len: p.len() }));
        if expected != self.manifest.tensors {
            return Err(LearnError::Checkpoint("tensor manifest does not match the network".into()));
        }
        let mut it = self.values.iter();
        agent.visit_all_mut(&mut |p| {
            let src = it.next().expect("manifest checked");
            for (d, s) in p.value.iter_mut().zip(src) {
                *d = *s as f64;
            }
        });
        Ok(())
    }
}
