//! Binary model file.
//!
//! ```text
//! magic        4 bytes  "BMCK"
//! version      u32 LE
//! feature_dim  u32 LE
//! window       u32 LE
//! hidden       u32 LE
//! num_classes  u32 LE
//! dropout      f64 LE
//! weights      f64 LE × num_params   (w1, b1, w2, b2)
//! checkpoint   f64 LE × num_params   (same order)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Architecture, ModelState, Weights};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_weights(out: &mut Vec<u8>, w: &Weights) {
    for v in w.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &ModelState) -> Vec<u8> {
    let a = &model.arch;
    let mut out = Vec::with_capacity(32 + 16 * a.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [CHECKPOINT_VERSION, a.feature_dim as u32, a.window as u32, a.hidden as u32, a.num_classes as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.dropout.to_le_bytes());
    put_weights(&mut out, &model.weights);
    put_weights(&mut out, &model.checkpoint);
    out
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<ModelState> {
    let bad = |reason: &str| Error::Format { path: origin.to_path_buf(), reason: reason.to_string() };
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated"));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32s = [0u32; 5];
    for v in &mut u32s {
        *v = u32::from_le_bytes(take(4)?.try_into().unwrap());
    }
    if u32s[0] != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {}", u32s[0])));
    }
    let arch = Architecture {
        feature_dim: u32s[1] as usize,
        window: u32s[2] as usize,
        hidden: u32s[3] as usize,
        num_classes: u32s[4] as usize,
    };
    let dropout = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut read_weights = || -> Result<Weights> {
        let mut w = Weights::zeros(&arch);
        for v in w.iter_mut() {
            *v = f64::from_le_bytes(take(8)?.try_into().unwrap());
        }
        Ok(w)
    };
    let weights = read_weights()?;
    let checkpoint = read_weights()?;
    if !cur.is_empty() {
        return Err(bad("trailing bytes"));
    }
    ModelState::from_parts(arch, dropout, weights, checkpoint).map_err(|e| bad(&e.to_string()))
}

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes, path)
}
