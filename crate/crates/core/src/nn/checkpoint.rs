//! Self-describing model checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `MVPCKPT\0`                          |
//! | 8      | 4    | format version (`u32`, currently 1)       |
//! | 12     | 8    | header length `n` in bytes (`u64`)        |
//! | 20     | n    | UTF-8 JSON header                         |
//! | 20+n   | ...  | parameter arrays, `f64` LE, header order  |
//!
//! The header holds `model`, `config`, `seed`, free-form `metadata` and the
//! `params` list of `{name, shape}` entries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::nn::params::ParamSet;

pub const MAGIC: &[u8; 8] = b"MVPCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub metadata: serde_json::Value,
    pub params: ParamSet,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: String,
    config: serde_json::Value,
    seed: u64,
    metadata: serde_json::Value,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            model: self.model.clone(),
            config: self.config.clone(),
            seed: self.seed,
            metadata: self.metadata.clone(),
            params: self
                .params
                .entries()
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for p in self.params.entries() {
            for v in &p.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CoreError::Checkpoint("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(CoreError::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        let mut params = ParamSet::new();
        for entry in header.params {
            let n: usize = entry.shape.iter().product();
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut b8)?;
                values.push(f64::from_le_bytes(b8));
            }
            params.push(entry.name, entry.shape, values);
        }
        Ok(Self {
            model: header.model,
            config: header.config,
            seed: header.seed,
            metadata: header.metadata,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path)
            .map_err(|e| CoreError::Checkpoint(format!("{}: {e}", path.display())))?;
        self.write_to(BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)
            .map_err(|e| CoreError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_from(BufReader::new(f))
    }
}
