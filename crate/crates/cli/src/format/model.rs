//! Flow checkpoint: a JSON manifest (dimensions, depth, conditioner mode,
//! orderings, standardization affine, integrity hashes) followed by one
//! parameter blob per layer, each a JSON header plus the float64 flat view.

use std::path::Path;

use serde::{Deserialize, Serialize};
use slowflow_core::affine::Affine;
use slowflow_core::flow::{ConditionerMode, FlowConfig, FlowModel};
use slowflow_core::net::Mlp;

use super::dataset::AffineJson;
use super::{read_bytes, write_bytes};
use crate::error::AppError;
use crate::fnv::fnv1a64_hex;
use crate::Result;

const MAGIC: &[u8; 8] = b"SFMODEL\0";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dim: usize,
    n_layers: usize,
    hidden: Vec<usize>,
    mode: String,
    log_scale_clamp: f64,
    lag: f64,
    orderings: Vec<Vec<usize>>,
    normalization: AffineJson,
    /// FNV-1a over all layers' mask bytes; guards against a conditioner
    /// whose masks were built differently from this build's rules.
    masks_hash: String,
    train_config_hash: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    layer: usize,
    sizes: Vec<usize>,
    masks_hash: String,
    n_params: usize,
    seed: Option<u64>,
}

fn net_mask_bytes(net: &Mlp) -> Vec<u8> {
    let mut bytes = Vec::new();
    for mask in net.masks() {
        match mask {
            None => bytes.push(0xff),
            Some(m) => {
                bytes.push(0x01);
                bytes.extend(m.iter().map(|&v| v as u8));
            }
        }
    }
    bytes
}

fn model_masks_hash(model: &FlowModel) -> String {
    let mut bytes = Vec::new();
    for net in model.nets() {
        bytes.extend(net_mask_bytes(net));
    }
    fnv1a64_hex(&bytes)
}

pub fn save(
    path: &Path,
    model: &FlowModel,
    train_config_hash: Option<String>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = model.config();
    let manifest = Manifest {
        format: "slowflow.flow_model".into(),
        version: 1,
        dim: cfg.dim,
        n_layers: cfg.n_layers,
        hidden: cfg.hidden.clone(),
        mode: cfg.mode.name().into(),
        log_scale_clamp: cfg.log_scale_clamp,
        lag: model.lag(),
        orderings: model.orderings().to_vec(),
        normalization: AffineJson::from(model.normalization()),
        masks_hash: model_masks_hash(model),
        train_config_hash,
        seed,
    };
    let p = path.display().to_string();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    let manifest_json =
        serde_json::to_vec(&manifest).map_err(|e| AppError::format(&p, e.to_string()))?;
    bytes.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    for (k, net) in model.nets().iter().enumerate() {
        let header = LayerHeader {
            layer: k,
            sizes: net.sizes().to_vec(),
            masks_hash: fnv1a64_hex(&net_mask_bytes(net)),
            n_params: net.n_params(),
            seed: None,
        };
        let header_json =
            serde_json::to_vec(&header).map_err(|e| AppError::format(&p, e.to_string()))?;
        bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header_json);
        for v in net.params() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bytes(path, &bytes)
}

pub struct LoadedModel {
    pub model: FlowModel,
    pub train_config_hash: Option<String>,
    pub seed: Option<u64>,
}

pub fn load(path: &Path) -> Result<LoadedModel> {
    let bytes = read_bytes(path)?;
    let p = path.display().to_string();
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(AppError::format(&p, "bad magic"));
    }
    let mut cur = 8usize;
    let manifest: Manifest = read_json_block(&bytes, &mut cur, &p)?;
    if manifest.format != "slowflow.flow_model" {
        return Err(AppError::format(&p, "unexpected format"));
    }
    let mode = ConditionerMode::parse(&manifest.mode)
        .ok_or_else(|| AppError::format(&p, format!("unknown conditioner mode {}", manifest.mode)))?;
    let cfg = FlowConfig {
        dim: manifest.dim,
        n_layers: manifest.n_layers,
        hidden: manifest.hidden.clone(),
        mode,
        log_scale_clamp: manifest.log_scale_clamp,
    };
    let norm = Affine::from(manifest.normalization);
    let mut model = FlowModel::zeroed(cfg, norm)?;
    model.set_lag(manifest.lag)?;
    if model.orderings() != manifest.orderings.as_slice() {
        return Err(AppError::format(&p, "layer orderings do not match this build"));
    }
    if model_masks_hash(&model) != manifest.masks_hash {
        return Err(AppError::format(&p, "conditioner mask hash mismatch"));
    }
    for k in 0..manifest.n_layers {
        let header: LayerHeader = read_json_block(&bytes, &mut cur, &p)?;
        if header.layer != k || header.sizes != model.nets()[k].sizes() {
            return Err(AppError::format(&p, format!("layer {k} header mismatch")));
        }
        let n = header.n_params;
        if model.nets()[k].n_params() != n {
            return Err(AppError::format(&p, format!("layer {k} parameter count mismatch")));
        }
        let end = cur + 8 * n;
        if bytes.len() < end {
            return Err(AppError::format(&p, "truncated parameter payload"));
        }
        let params: Vec<f64> = bytes[cur..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        model.nets_mut()[k].set_params(&params)?;
        cur = end;
    }
    if cur != bytes.len() {
        return Err(AppError::format(&p, "trailing bytes after last layer"));
    }
    Ok(LoadedModel {
        model,
        train_config_hash: manifest.train_config_hash,
        seed: manifest.seed,
    })
}

fn read_json_block<T: serde::de::DeserializeOwned>(
    bytes: &[u8],
    cur: &mut usize,
    path: &str,
) -> Result<T> {
    if bytes.len() < *cur + 4 {
        return Err(AppError::format(path, "truncated block length"));
    }
    let len = u32::from_le_bytes(bytes[*cur..*cur + 4].try_into().unwrap()) as usize;
    let start = *cur + 4;
    let end = start + len;
    if bytes.len() < end {
        return Err(AppError::format(path, "truncated json block"));
    }
    let value =
        serde_json::from_slice(&bytes[start..end]).map_err(|e| AppError::format(path, e.to_string()))?;
    *cur = end;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let cfg = FlowConfig::new(2).with_layers(3);
        let norm = Affine {
            mean: vec![0.5, -1.0],
            scale: vec![2.0, 0.3],
        };
        let mut model = FlowModel::new(cfg, norm, 77).unwrap();
        model.set_lag(0.01).unwrap();
        let dir = std::env::temp_dir().join("slowflow_model_test");
        let path = dir.join("m.bin");
        save(&path, &model, Some("abc".into()), Some(77)).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.model.flat_params(), model.flat_params());
        assert_eq!(loaded.model.normalization(), model.normalization());
        assert_eq!(loaded.model.lag(), model.lag());
        assert_eq!(loaded.model.config(), model.config());
        assert_eq!(loaded.train_config_hash.as_deref(), Some("abc"));
        // Deterministic bytes.
        let a = read_bytes(&path).unwrap();
        save(&path, &loaded.model, Some("abc".into()), Some(77)).unwrap();
        assert_eq!(a, read_bytes(&path).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = std::env::temp_dir().join("slowflow_model_bad");
        let path = dir.join("bad.bin");
        write_bytes(&path, b"NOTMODEL____").unwrap();
        assert!(load(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
