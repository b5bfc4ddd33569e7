//! Parameter files: `FNO1`, a little-endian `u32` header length, a JSON
//! header, then every tensor as raw little-endian `f64` in storage order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FnoConfig, FnoParameters, LAYERS};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FNO1";

#[derive(Serialize, Deserialize)]
struct Header {
    modes: usize,
    width: usize,
    layers: usize,
    in_channels: usize,
    out_channels: usize,
    proj_hidden: usize,
    seed: u64,
    tensors: Vec<usize>,
}

impl FnoParameters {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let header = Header {
            modes: c.modes,
            width: c.width,
            layers: LAYERS,
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            proj_hidden: c.proj_hidden,
            seed: self.seed,
            tensors: self.tensors.iter().map(Vec::len).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.tensors.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated {
                expected: 8,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            if &bytes[..3] == b"FNO" {
                return Err(Error::VersionMismatch {
                    expected: "FNO1".into(),
                    found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
                });
            }
            return Err(Error::Format("not a parameter file (bad magic)".into()));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + hlen {
            return Err(Error::Truncated {
                expected: 8 + hlen,
                found: bytes.len(),
            });
        }
        let header: Header = serde_json::from_slice(&bytes[8..8 + hlen])
            .map_err(|e| Error::Format(format!("parameter header: {e}")))?;
        if header.layers != LAYERS {
            return Err(Error::Shape(format!("file has {} layers, expected {LAYERS}", header.layers)));
        }
        let config = FnoConfig {
            modes: header.modes,
            width: header.width,
            in_channels: header.in_channels,
            out_channels: header.out_channels,
            proj_hidden: header.proj_hidden,
        };
        let expected = 8 + hlen + 8 * header.tensors.iter().sum::<usize>();
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after tensor data",
                bytes.len() - expected
            )));
        }
        let mut data = bytes[8 + hlen..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        let tensors = header
            .tensors
            .iter()
            .map(|&n| data.by_ref().take(n).collect())
            .collect();
        FnoParameters::from_tensors(config, header.seed, tensors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks the file against the configuration the caller built.
    pub fn load_for(path: impl AsRef<Path>, expected: &FnoConfig) -> Result<Self> {
        let p = Self::load(path)?;
        if p.config != *expected {
            return Err(Error::Shape(format!(
                "parameter file holds {:?}, model expects {:?}",
                p.config, expected
            )));
        }
        Ok(p)
    }

    /// SHA-256 of the serialized parameters, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}
