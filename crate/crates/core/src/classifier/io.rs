//! Model files and pretrained-weight import.
//!
//! A model file is the 8-byte magic `SLCMODEL`, a little-endian `u32`
//! header length, a JSON header, and the tensors as little-endian `f32` in
//! header order. The header carries the format tag, backend, class
//! vocabulary, training config and its hash, and a SHA-256 of the payload.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::Slot;
use super::network::{Architecture, Backend, Network};
use super::{hex, ModelState, TrainConfig};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "slc-v1";
const MAGIC: &[u8; 8] = b"SLCMODEL";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    backend: Backend,
    classes: Vec<String>,
    config_hash: String,
    config: TrainConfig,
    architecture: Architecture,
    epoch: usize,
    val_accuracy: f64,
    val_loss: f64,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

fn tensors(net: &mut Network<f32>) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out = Vec::new();
    net.visit(&mut |name, slot| match slot {
        Slot::Param(p) => out.push((name.to_string(), p.shape.clone(), p.value.clone())),
        Slot::Buffer(b) => out.push((name.to_string(), vec![b.len()], b.clone())),
    });
    out
}

pub fn encode_model(state: &ModelState) -> Vec<u8> {
    let mut net = state.network.clone();
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    for (name, shape, values) in tensors(&mut net) {
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry { name, shape });
    }
    let header = Header {
        format: MODEL_FORMAT.into(),
        backend: state.arch.backend,
        classes: state.classes.clone(),
        config_hash: state.config.hash(),
        config: state.config.clone(),
        architecture: state.arch.clone(),
        epoch: state.epoch,
        val_accuracy: state.val_accuracy,
        val_loss: state.val_loss,
        tensors: entries,
        payload_sha256: hex(&Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelState> {
    let fmt = |m: String| Error::Format(format!("model file: {m}"));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(fmt("missing magic bytes".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if hlen > body.len() {
        return Err(fmt("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| fmt(format!("bad header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(fmt(format!("unsupported format `{}` (expected {MODEL_FORMAT})", header.format)));
    }
    let payload = &body[hlen..];
    if hex(&Sha256::digest(payload)) != header.payload_sha256 {
        return Err(fmt("payload checksum mismatch".into()));
    }
    if header.architecture.backend != header.backend || header.architecture.classes != header.classes.len() {
        return Err(fmt("architecture disagrees with header".into()));
    }
    if header.config.hash() != header.config_hash {
        return Err(fmt("config hash mismatch".into()));
    }
    let mut offset = 0usize;
    let mut stored: BTreeMap<String, (Vec<usize>, Vec<f32>)> = BTreeMap::new();
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let end = offset + n * 4;
        if end > payload.len() {
            return Err(fmt(format!("payload too short for `{}`", e.name)));
        }
        let values = payload[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        offset = end;
        if stored.insert(e.name.clone(), (e.shape, values)).is_some() {
            return Err(fmt(format!("duplicate tensor `{}`", e.name)));
        }
    }
    if offset != payload.len() {
        return Err(fmt("trailing payload bytes".into()));
    }
    let mut net = Network::<f32>::new(&header.architecture, 0);
    let mut problem: Option<String> = None;
    net.visit(&mut |name, slot| {
        let Some((shape, values)) = stored.remove(name) else {
            problem.get_or_insert(format!("missing tensor `{name}`"));
            return;
        };
        let (want, dst) = match slot {
            Slot::Param(p) => (p.shape.clone(), &mut p.value),
            Slot::Buffer(b) => (vec![b.len()], b),
        };
        if shape != want {
            problem.get_or_insert(format!("tensor `{name}` has shape {shape:?}, expected {want:?}"));
            return;
        }
        *dst = values;
    });
    if let Some(p) = problem {
        return Err(fmt(p));
    }
    if let Some(extra) = stored.keys().next() {
        return Err(fmt(format!("unexpected tensor `{extra}`")));
    }
    Ok(ModelState {
        arch: header.architecture,
        classes: header.classes,
        config: header.config,
        network: net,
        epoch: header.epoch,
        val_accuracy: header.val_accuracy,
        val_loss: header.val_loss,
    })
}

pub fn save_model(state: &ModelState, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_model(state)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Copies every `base.*` tensor of `net` from a safetensors file whose keys
/// follow torchvision naming (`conv1.weight`, `layer1.0.bn1.running_mean`,
/// ...). Returns the number of tensors loaded.
pub fn load_pretrained(net: &mut Network<f32>, path: &Path) -> Result<usize> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let st = safetensors::SafeTensors::deserialize(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut loaded = 0;
    let mut problem: Option<String> = None;
    net.visit(&mut |name, slot| {
        let Some(key) = name.strip_prefix("base.") else { return };
        if problem.is_some() {
            return;
        }
        let view = match st.tensor(key) {
            Ok(v) => v,
            Err(_) => {
                problem = Some(format!("pretrained file lacks `{key}`"));
                return;
            }
        };
        let (want, dst) = match slot {
            Slot::Param(p) => (p.shape.clone(), &mut p.value),
            Slot::Buffer(b) => (vec![b.len()], b),
        };
        if view.dtype() != safetensors::Dtype::F32 {
            problem = Some(format!("`{key}` is {:?}, expected F32", view.dtype()));
            return;
        }
        if view.shape() != want.as_slice() {
            problem = Some(format!("`{key}` has shape {:?}, expected {want:?}", view.shape()));
            return;
        }
        *dst = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        loaded += 1;
    });
    match problem {
        Some(p) => Err(Error::Format(format!("{}: {p}", path.display()))),
        None => Ok(loaded),
    }
}

/// Loads ImageNet weights when a path is configured and present; otherwise
/// keeps the random initialization and warns.
pub(super) fn init_pretrained(net: &mut Network<f32>, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) if p.exists() => {
            let n = load_pretrained(net, p)?;
            log::info!("loaded {n} pretrained tensors from {}", p.display());
        }
        Some(p) => log::warn!(
            "PRETRAINED WEIGHTS NOT FOUND at {}; resnet18 starts from random initialization",
            p.display()
        ),
        None => log::warn!("NO PRETRAINED WEIGHTS CONFIGURED (model.pretrained_path); resnet18 starts from random initialization"),
    }
    Ok(())
}
