//! Checkpoint container: 8-byte magic, little-endian `u64` header length,
//! a JSON header, then each tensor's entries as little-endian `f64` in header
//! order. Base weights and adapters go to separate files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::autodiff::Tensor;
use crate::dp::GradMap;
use crate::error::{Error, Result};
use crate::lora::{self, LoraConfig};

const MAGIC: &[u8; 8] = b"DPMEETC1";
pub const BASE_FILE: &str = "model.ckpt";
pub const ADAPTER_FILE: &str = "adapter.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub config: ModelConfig,
    pub lora: Option<LoraConfig>,
    pub tokenizer_hash: String,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `tensors` (all of them, in name order) under `header`, replacing
/// `header.tensors`. The file appears atomically.
pub fn write_checkpoint(path: &Path, mut header: CheckpointHeader, tensors: &GradMap) -> Result<()> {
    header.tensors = tensors
        .iter()
        .map(|(name, t)| TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
        })
        .collect();
    let json = serde_json::to_vec(&header)?;
    let total: usize = tensors.values().map(Tensor::numel).sum();
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * total);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in tensors.values() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &buf)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
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

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, GradMap)> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingCheckpoint(path.display().to_string())
        } else {
            e.into()
        }
    })?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
    if hlen > body.len() {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..hlen]).map_err(|e| bad(&format!("header: {e}")))?;
    let mut data = &body[hlen..];
    let mut tensors = GradMap::new();
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        if data.len() < 8 * n {
            return Err(bad(&format!("truncated data for {}", entry.name)));
        }
        let values = data[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[8 * n..];
        let t = Tensor::new(entry.shape.clone(), values)
            .map_err(|e| bad(&format!("{}: {e}", entry.name)))?;
        tensors.insert(entry.name.clone(), t);
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok((header, tensors))
}

impl Model {
    /// Saves base weights and, if attached, adapters into `dir`. Returns the
    /// written paths.
    pub fn save(&self, dir: &Path, tokenizer_hash: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let header = |kind: &str| CheckpointHeader {
            kind: kind.into(),
            config: self.config.clone(),
            lora: self.lora.clone(),
            tokenizer_hash: tokenizer_hash.into(),
            tensors: Vec::new(),
        };
        let (adapters, base): (GradMap, GradMap) = self
            .params
            .clone()
            .into_iter()
            .partition(|(n, _)| lora::is_adapter_param(n));
        let mut paths = vec![dir.join(BASE_FILE)];
        write_checkpoint(&paths[0], header("base"), &base)?;
        if self.lora.is_some() {
            paths.push(dir.join(ADAPTER_FILE));
            write_checkpoint(&paths[1], header("adapter"), &adapters)?;
        }
        Ok(paths)
    }

    /// Loads a model saved by [`Model::save`]; returns it with the tokenizer
    /// hash recorded at save time.
    pub fn load(dir: &Path) -> Result<(Model, String)> {
        let (header, mut params) = read_checkpoint(&dir.join(BASE_FILE))?;
        if header.kind != "base" {
            return Err(Error::Checkpoint(format!("{}: expected a base checkpoint", dir.display())));
        }
        header.config.validate()?;
        if header.lora.is_some() {
            let (ah, adapters) = read_checkpoint(&dir.join(ADAPTER_FILE))?;
            if ah.kind != "adapter" || ah.config != header.config || ah.lora != header.lora {
                return Err(Error::Checkpoint(format!(
                    "{}: adapter checkpoint does not match the base",
                    dir.display()
                )));
            }
            params.extend(adapters);
        }
        let model = Model {
            config: header.config,
            lora: header.lora,
            params,
        };
        let expected = {
            let mut m = Model::init(model.config.clone(), 0)?;
            if let Some(l) = &model.lora {
                m.attach_lora(l.clone(), 0)?;
            }
            m
        };
        let names_match = expected.params.len() == model.params.len()
            && expected
                .params
                .iter()
                .zip(&model.params)
                .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape());
        if !names_match {
            return Err(Error::Checkpoint(format!(
                "{}: parameter manifest does not match the configuration",
                dir.display()
            )));
        }
        Ok((model, header.tokenizer_hash))
    }
}
