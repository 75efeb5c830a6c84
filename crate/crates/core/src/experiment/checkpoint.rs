//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "ARNSCKPT"
//! version   u32
//! hdr_len   u32
//! header    hdr_len bytes of JSON: metadata + architecture descriptor
//! payload   f64 parameters, in descriptor order (w0, b0, w1, b1, ...)
//! digest    32 bytes SHA-256 over everything above
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network};

pub const MAGIC: &[u8; 8] = b"ARNSCKPT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub phase: String,
    pub steps: u64,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct NetworkDescriptor {
    name: String,
    frozen: bool,
    layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    networks: Vec<NetworkDescriptor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub meta: CheckpointMeta,
    pub networks: Vec<Network>,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Result<&Network> {
        self.networks
            .iter()
            .find(|n| n.name() == name)
            .ok_or_else(|| Error::CheckpointCorrupt(format!("no network named {name}")))
    }
}

pub fn encode(networks: &[&Network], meta: &CheckpointMeta) -> Vec<u8> {
    let header = Header {
        meta: meta.clone(),
        networks: networks
            .iter()
            .map(|n| NetworkDescriptor {
                name: n.name().to_string(),
                frozen: n.is_frozen(),
                layers: n.specs(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header is serialisable");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for net in networks {
        for v in net.params().flat_map(|t| t.data().iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let corrupt = |msg: &str| Error::CheckpointCorrupt(msg.to_string());
    if bytes.len() < MAGIC.len() + 8 + DIGEST_LEN || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("digest mismatch"));
    }
    let hdr_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_bytes = body.get(16..16 + hdr_len).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    let mut payload = &body[16 + hdr_len..];

    let mut networks = Vec::with_capacity(header.networks.len());
    for desc in header.networks {
        let mut net = Network::from_specs(desc.name, &desc.layers)
            .map_err(|e| Error::CheckpointCorrupt(format!("bad architecture: {e}")))?;
        let n = net.param_count();
        if payload.len() < n * 8 {
            return Err(corrupt("payload shorter than architecture"));
        }
        let flat: Vec<f64> = payload[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        net.set_flat_params(&flat)?;
        if desc.frozen {
            net.freeze();
        }
        payload = &payload[n * 8..];
        networks.push(net);
    }
    if !payload.is_empty() {
        return Err(corrupt("payload longer than architecture"));
    }
    Ok(Checkpoint {
        version,
        meta: header.meta,
        networks,
    })
}

pub fn save_checkpoint(path: &Path, networks: &[&Network], meta: &CheckpointMeta) -> Result<()> {
    fs::write(path, encode(networks, meta)).map_err(|e| Error::file(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    decode(&fs::read(path).map_err(|e| Error::file(path, e))?)
}

/// Loads a checkpoint and warns if it was produced under another config.
pub fn load_checked(path: &Path, config_digest: &str) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.meta.config_digest != config_digest {
        log::warn!(
            "{} was written under a different configuration ({} vs {})",
            path.display(),
            ckpt.meta.config_digest,
            config_digest
        );
    }
    Ok(ckpt)
}
