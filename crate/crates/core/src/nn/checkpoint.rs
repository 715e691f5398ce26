//! Flat binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "MMDRCKPT"
//! version      u32
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON {arch, seed, step, metadata}
//! count        u64      number of parameters
//! values       count * f64, blocks in declaration order
//! ```
//!
//! A sibling `<file>.manifest` lists one block per line as
//! `name<TAB>shape<TAB>offset<TAB>length`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ActorCritic, ArchConfig, NeuralError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MMDRCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: ArchConfig,
    pub seed: u64,
    /// Training samples consumed when the checkpoint was taken.
    pub step: u64,
    /// Free-form run description, usually the full run configuration.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn into_network(self) -> Result<ActorCritic, NeuralError> {
        ActorCritic::from_values(self.header.arch, self.values)
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

/// Writes the checkpoint and its manifest. Each file is written to a
/// temporary name first and renamed, so an interrupted write leaves any
/// previous checkpoint at `path` intact.
pub fn write_checkpoint(path: &Path, net: &ActorCritic, seed: u64, step: u64, metadata: serde_json::Value) -> Result<(), NeuralError> {
    let header = CheckpointHeader {
        arch: net.arch().clone(),
        seed,
        step,
        metadata,
    };
    let json = serde_json::to_vec(&header).map_err(|e| NeuralError::Format(e.to_string()))?;
    let values = &net.params().values;
    let mut buf = Vec::with_capacity(24 + json.len() + 8 * values.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }

    let mut manifest = String::new();
    for b in net.layout().blocks() {
        let shape: Vec<String> = b.shape.iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("{}\t{}\t{}\t{}\n", b.name, shape.join("x"), b.offset, b.len()));
    }

    write_replacing(path, &buf)?;
    write_replacing(&manifest_path(path), manifest.as_bytes())?;
    Ok(())
}

fn write_replacing(path: &Path, bytes: &[u8]) -> Result<(), NeuralError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NeuralError> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| NeuralError::Format(format!("{}: {m}", path.display()));
    let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| bad("truncated file"));
    if take(0, 8)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(8, 4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(take(12, 4)?.try_into().expect("4 bytes")) as usize;
    let header: CheckpointHeader =
        serde_json::from_slice(take(16, header_len)?).map_err(|e| bad(&format!("header: {e}")))?;
    let mut at = 16 + header_len;
    let count = u64::from_le_bytes(take(at, 8)?.try_into().expect("8 bytes")) as usize;
    at += 8;
    if bytes.len() != at + 8 * count {
        return Err(bad("parameter payload length does not match count"));
    }
    let values = bytes[at..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Checkpoint { header, values })
}
