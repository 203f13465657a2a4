//! Pair-dataset container: JSON header + `M x 2l` float64 records, row-major
//! `(x0 || x1)`, plus a mirroring CSV export.

use std::path::Path;

use serde::{Deserialize, Serialize};
use slowflow_core::affine::Affine;
use slowflow_core::dataset::PairDataset;
use slowflow_core::system::Preset;

use super::{fmt_f64, read_container, write_container, write_text};
use crate::error::AppError;
use crate::Result;

const MAGIC: &[u8; 8] = b"SFPAIRS\0";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    system: Option<String>,
    dim: usize,
    lag: f64,
    dt_fine: f64,
    seed: u64,
    pairs_per_trajectory: usize,
    records: usize,
    normalization: Option<AffineJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct AffineJson {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl From<&Affine> for AffineJson {
    fn from(a: &Affine) -> Self {
        AffineJson {
            mean: a.mean.clone(),
            scale: a.scale.clone(),
        }
    }
}

impl From<AffineJson> for Affine {
    fn from(a: AffineJson) -> Self {
        Affine {
            mean: a.mean,
            scale: a.scale,
        }
    }
}

pub fn save(path: &Path, ds: &PairDataset) -> Result<()> {
    let header = Header {
        format: "slowflow.pairs".into(),
        version: 1,
        system: ds.system.map(|p| p.name().to_string()),
        dim: ds.dim,
        lag: ds.lag,
        dt_fine: ds.dt_fine,
        seed: ds.seed,
        pairs_per_trajectory: ds.pairs_per_trajectory,
        records: ds.len(),
        normalization: ds.normalization.as_ref().map(AffineJson::from),
    };
    write_container(path, MAGIC, &header, &ds.pairs)
}

pub fn load(path: &Path) -> Result<PairDataset> {
    let (header, payload): (Header, Vec<f64>) = read_container(path, MAGIC)?;
    let p = path.display().to_string();
    if header.format != "slowflow.pairs" {
        return Err(AppError::format(&p, format!("unexpected format {}", header.format)));
    }
    if payload.len() != header.records * 2 * header.dim {
        return Err(AppError::format(
            &p,
            format!(
                "header promises {} records of dim {}, payload holds {} values",
                header.records,
                header.dim,
                payload.len()
            ),
        ));
    }
    let system = match &header.system {
        Some(name) => Some(
            Preset::parse(name)
                .ok_or_else(|| AppError::format(&p, format!("unknown system {name}")))?,
        ),
        None => None,
    };
    let mut ds = PairDataset::from_pairs(
        header.dim,
        header.lag,
        payload,
        header.pairs_per_trajectory,
        system,
        header.seed,
    )?;
    ds.dt_fine = header.dt_fine;
    ds.normalization = header.normalization.map(Affine::from);
    Ok(ds)
}

/// CSV mirror with one record per row.
pub fn export_csv(path: &Path, ds: &PairDataset) -> Result<()> {
    let mut out = String::new();
    for c in 0..ds.dim {
        out.push_str(&format!("x0_{},", c + 1));
    }
    for c in 0..ds.dim {
        out.push_str(&format!("x1_{}", c + 1));
        if c + 1 < ds.dim {
            out.push(',');
        }
    }
    out.push('\n');
    for rec in ds.pairs.chunks(2 * ds.dim) {
        let row: Vec<String> = rec.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use slowflow_core::dataset::{build_pairs, normalize};
    use slowflow_core::integrate::SimGrid;
    use slowflow_core::system::System;

    #[test]
    fn round_trip_is_byte_identical() {
        let sys = System::preset(Preset::SkewProduct);
        let grid = SimGrid::new(1e-3, 0.01);
        let ds = normalize(&build_pairs(&sys, 40, 0.02, &grid, 5).unwrap()).unwrap();
        let dir = std::env::temp_dir().join("slowflow_ds_test");
        let path = dir.join("pairs.bin");
        save(&path, &ds).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.pairs, ds.pairs);
        assert_eq!(loaded.normalization, ds.normalization);
        assert_eq!(loaded.system, ds.system);
        assert_eq!(loaded.pairs_per_trajectory, ds.pairs_per_trajectory);
        // Writing again produces the same bytes.
        let a = super::super::read_bytes(&path).unwrap();
        save(&path, &loaded).unwrap();
        let b = super::super::read_bytes(&path).unwrap();
        assert_eq!(a, b);
        std::fs::remove_dir_all(&dir).ok();
    }
}
