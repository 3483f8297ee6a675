//! Binary checkpoint format.
//!
//! ```text
//! b"SJCKPT01" | u64 LE header length | JSON header | f32 LE parameters
//! ```
//!
//! The header records the model configuration, the full vocabulary with its
//! hash, every tensor's name and shape, and a SHA-256 of the parameter bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig, ModelError};
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 8] = b"SJCKPT01";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: serde_json::Value,
    vocab_hash: String,
    tensors: Vec<TensorEntry>,
    n_params: usize,
    data_sha256: String,
    #[serde(default)]
    meta: serde_json::Value,
}

/// A loaded model together with the vocabulary it was trained on.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    /// Free-form metadata stored alongside the weights.
    pub meta: serde_json::Value,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model<f32>,
    vocab: &Vocabulary,
    meta: serde_json::Value,
) -> Result<(), ModelError> {
    if vocab.len() != model.config().vocab_size {
        return Err(bad(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    let data: Vec<u8> = model
        .params()
        .iter()
        .flat_map(|p| p.to_le_bytes())
        .collect();
    let header = Header {
        config: model.config().clone(),
        vocab: serde_json::from_str(&vocab.to_json()).map_err(|e| bad(e.to_string()))?,
        vocab_hash: vocab.hash(),
        tensors: model
            .layout()
            .specs()
            .iter()
            .map(|s| TensorEntry {
                name: s.name.clone(),
                rows: s.rows,
                cols: s.cols,
                offset: s.offset,
            })
            .collect(),
        n_params: model.n_params(),
        data_sha256: hex(&Sha256::digest(&data)),
        meta,
    };
    let header = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&data)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| bad("file too short"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| bad("truncated header length"))?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(bad("implausible header length"));
    }
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)
        .map_err(|_| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| bad(format!("header: {e}")))?;

    let vocab = Vocabulary::from_json(&header.vocab.to_string())
        .map_err(|e| bad(format!("vocabulary: {e}")))?;
    if vocab.hash() != header.vocab_hash {
        return Err(bad("vocabulary hash mismatch"));
    }
    if vocab.len() != header.config.vocab_size {
        return Err(bad("vocabulary size does not match configuration"));
    }
    header.config.validate()?;
    let layout = super::ParamLayout::new(&header.config);
    let shapes_match = layout.specs().len() == header.tensors.len()
        && layout.specs().iter().zip(&header.tensors).all(|(s, t)| {
            s.name == t.name && s.rows == t.rows && s.cols == t.cols && s.offset == t.offset
        });
    if !shapes_match || layout.total() != header.n_params {
        return Err(bad("tensor shapes do not match configuration"));
    }

    let mut data = Vec::with_capacity(header.n_params * 4);
    r.read_to_end(&mut data)?;
    if data.len() != header.n_params * 4 {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            header.n_params * 4,
            data.len()
        )));
    }
    if hex(&Sha256::digest(&data)) != header.data_sha256 {
        return Err(bad("parameter checksum mismatch"));
    }
    let params = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let model = Model::from_params(header.config, params)?;
    Ok(Checkpoint {
        model,
        vocab,
        meta: header.meta,
    })
}
