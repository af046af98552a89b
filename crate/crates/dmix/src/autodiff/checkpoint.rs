//! Binary checkpoint format: a versioned magic string, a JSON header
//! describing named f64 arrays, then the raw little-endian data.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"DMIXCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt header: {0}")]
    Header(String),
    #[error("data section truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
    /// f64 offset into the data section.
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    entries: Vec<HeaderEntry>,
    /// Model manifest (architecture config), so checkpoints are
    /// self-describing.
    meta: serde_json::Value,
}

/// Write a parameter store plus a JSON manifest. The write is atomic
/// (temp file then rename).
pub fn save_checkpoint(
    store: &ParamStore,
    meta: &serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let mut entries = Vec::with_capacity(store.len());
    let mut offset = 0;
    for id in store.iter_ids() {
        let e = store.entry(id);
        entries.push(HeaderEntry {
            name: e.name.clone(),
            shape: e.tensor.shape.clone(),
            trainable: e.trainable,
            offset,
            len: e.tensor.numel(),
        });
        offset += e.tensor.numel();
    }
    let header = Header {
        entries,
        meta: meta.clone(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serialize");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for id in store.iter_ids() {
        for v in &store.get(id).data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&out)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a checkpoint back into a fresh store plus its manifest.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(ParamStore, serde_json::Value), CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 || &bytes[0..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() < 20 + header_len {
        return Err(CheckpointError::Header("header truncated".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[20..20 + header_len])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let data = &bytes[20 + header_len..];
    let mut store = ParamStore::new();
    for e in &header.entries {
        let need = (e.offset + e.len) * 8;
        if data.len() < need {
            return Err(CheckpointError::Truncated {
                need,
                have: data.len(),
            });
        }
        if e.shape.iter().product::<usize>() != e.len {
            return Err(CheckpointError::Header(format!(
                "entry {} shape/len mismatch",
                e.name
            )));
        }
        let mut values = Vec::with_capacity(e.len);
        for i in 0..e.len {
            let off = (e.offset + i) * 8;
            values.push(f64::from_le_bytes(data[off..off + 8].try_into().unwrap()));
        }
        store.add(
            &e.name,
            Tensor {
                shape: e.shape.clone(),
                data: values,
            },
            e.trainable,
        );
    }
    Ok((store, header.meta))
}
