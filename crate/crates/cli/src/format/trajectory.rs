//! Columnar trajectory container: JSON header (system, lag, dt_fine, seed,
//! column names) + one float64 column per name, plus a mirroring CSV.
//!
//! Holds one or more paths on a shared time grid; columns are `t` followed
//! by `p{i}.x{c}` (or plain `x{c}` for a single path).

use std::path::Path;

use serde::{Deserialize, Serialize};
use slowflow_core::integrate::Trajectory;
use slowflow_core::system::Preset;

use super::{fmt_f64, read_container, write_container, write_text};
use crate::error::AppError;
use crate::Result;

const MAGIC: &[u8; 8] = b"SFTRAJ\0\0";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    system: Option<String>,
    lag: f64,
    dt_fine: Option<f64>,
    seed: u64,
    dim: usize,
    n_paths: usize,
    n_times: usize,
    columns: Vec<String>,
}

fn column_names(dim: usize, n_paths: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for p in 0..n_paths {
        for c in 0..dim {
            if n_paths == 1 {
                cols.push(format!("x{}", c + 1));
            } else {
                cols.push(format!("p{}.x{}", p, c + 1));
            }
        }
    }
    cols
}

pub fn save(path: &Path, trajs: &[Trajectory], dt_fine: Option<f64>, seed: u64) -> Result<()> {
    let p = path.display().to_string();
    let first = trajs
        .first()
        .ok_or_else(|| AppError::format(&p, "no trajectories to save"))?;
    let n_times = first.times.len();
    let dim = first.dim;
    for t in trajs {
        if t.dim != dim || t.times.len() != n_times {
            return Err(AppError::format(&p, "trajectories do not share a grid"));
        }
    }
    let header = Header {
        format: "slowflow.trajectories".into(),
        version: 1,
        system: first.system.map(|s| s.name().to_string()),
        lag: first.lag,
        dt_fine,
        seed,
        dim,
        n_paths: trajs.len(),
        n_times,
        columns: column_names(dim, trajs.len()),
    };
    // Column-major payload: t, then per path per coordinate.
    let mut payload = Vec::with_capacity(n_times * (1 + dim * trajs.len()));
    payload.extend_from_slice(&first.times);
    for t in trajs {
        for c in 0..dim {
            for k in 0..n_times {
                payload.push(t.values[k * dim + c]);
            }
        }
    }
    write_container(path, MAGIC, &header, &payload)
}

pub fn load(path: &Path) -> Result<Vec<Trajectory>> {
    let (header, payload): (Header, Vec<f64>) = read_container(path, MAGIC)?;
    let p = path.display().to_string();
    let (nt, dim, np) = (header.n_times, header.dim, header.n_paths);
    if payload.len() != nt * (1 + dim * np) {
        return Err(AppError::format(&p, "payload size mismatch"));
    }
    let system = match &header.system {
        Some(name) => Some(
            Preset::parse(name)
                .ok_or_else(|| AppError::format(&p, format!("unknown system {name}")))?,
        ),
        None => None,
    };
    let times = payload[..nt].to_vec();
    let mut out = Vec::with_capacity(np);
    for i in 0..np {
        let mut values = vec![0.0; nt * dim];
        for c in 0..dim {
            let col = &payload[nt * (1 + i * dim + c)..nt * (2 + i * dim + c)];
            for k in 0..nt {
                values[k * dim + c] = col[k];
            }
        }
        out.push(Trajectory {
            system,
            lag: header.lag,
            dim,
            times: times.clone(),
            values,
            fast_values: None,
        });
    }
    Ok(out)
}

/// Wide CSV mirror of the container: `t` column then one column per path
/// and coordinate.
pub fn export_csv(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    let p = path.display().to_string();
    let first = trajs
        .first()
        .ok_or_else(|| AppError::format(&p, "no trajectories to export"))?;
    let dim = first.dim;
    let mut out = column_names(dim, trajs.len()).join(",");
    out.push('\n');
    for k in 0..first.times.len() {
        let mut row = vec![fmt_f64(first.times[k])];
        for t in trajs {
            for c in 0..dim {
                row.push(fmt_f64(t.values[k * dim + c]));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}
