//! Versioned binary container for one or more parameter blocks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"TXLM"
//! version u32
//! hlen    u64          length of the JSON header
//! header  hlen bytes   {"blocks":[{"n_classes":..,"dims":..},..],"meta":{..}}
//! then per block: n_classes*dims weights as f64, then n_classes biases as f64
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"TXLM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BlockShape {
    n_classes: usize,
    dims: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    blocks: Vec<BlockShape>,
    meta: serde_json::Value,
}

pub fn write_param_blocks<W: Write>(mut sink: W, meta: &serde_json::Value, blocks: &[&ModelParams]) -> Result<()> {
    let header = Header {
        blocks: blocks
            .iter()
            .map(|b| BlockShape {
                n_classes: b.n_classes,
                dims: b.dims,
            })
            .collect(),
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    sink.write_all(MODEL_MAGIC)?;
    sink.write_all(&MODEL_VERSION.to_le_bytes())?;
    sink.write_all(&(header.len() as u64).to_le_bytes())?;
    sink.write_all(&header)?;
    for b in blocks {
        for x in b.weights.iter().chain(&b.biases) {
            sink.write_all(&x.to_le_bytes())?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn read_param_blocks<R: Read>(mut src: R) -> Result<(serde_json::Value, Vec<ModelParams>)> {
    let mut magic = [0u8; 4];
    src.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::ModelFormat("bad magic, not a model file".into()));
    }
    let mut u32buf = [0u8; 4];
    src.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let mut u64buf = [0u8; 8];
    src.read_exact(&mut u64buf)?;
    let hlen = u64::from_le_bytes(u64buf) as usize;
    let mut header = vec![0u8; hlen];
    src.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;

    let mut blocks = Vec::with_capacity(header.blocks.len());
    for shape in &header.blocks {
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; n * 8];
            src.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let weights = read_vec(shape.n_classes * shape.dims)?;
        let biases = read_vec(shape.n_classes)?;
        blocks.push(ModelParams {
            dims: shape.dims,
            n_classes: shape.n_classes,
            weights,
            biases,
        });
    }
    let mut trailing = [0u8; 1];
    if src.read(&mut trailing)? != 0 {
        return Err(Error::ModelFormat("trailing bytes after last block".into()));
    }
    Ok((header.meta, blocks))
}
