//! Autoregressive rollouts and ensemble validation statistics.
//!
//! Ensembles stream through a merging accumulator in fixed blocks of
//! [`PATH_BLOCK`] paths: per-path state is discarded as soon as it is
//! absorbed, each path draws from its own seed stream, and the block merge
//! order is fixed. Results are therefore bit-identical whether blocks are
//! processed sequentially or farmed out to threads.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Error;
use crate::flow::{FlowModel, FlowWorkspace};
use crate::integrate::{sample_fast_stationary, simulate_slow, SimGrid, Trajectory};
use crate::rng::{fill_normal, stream_rng};
use crate::system::{SlowFastSystem, System};
use crate::Result;

/// Paths per accumulator block.
pub const PATH_BLOCK: usize = 128;

/// Default cap on stored samples per distribution checkpoint.
pub const RESERVOIR_CAP: usize = 100_000;

/// Iterate the one-step model: `x_{k+1} = G(x_k, z_k)` with fresh standard
/// normal draws each step. Times sit on the model's lag grid.
pub fn rollout(
    model: &FlowModel,
    x0: &[f64],
    n_steps: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let mut ws = FlowWorkspace::for_model(model);
    rollout_with(model, x0, n_steps, rng, &mut ws)
}

pub fn rollout_with(
    model: &FlowModel,
    x0: &[f64],
    n_steps: usize,
    rng: &mut impl Rng,
    ws: &mut FlowWorkspace,
) -> Result<Trajectory> {
    let dim = model.dim();
    if x0.len() != dim {
        return Err(Error::shape(format!(
            "rollout start has {} coordinates, model expects {dim}",
            x0.len()
        )));
    }
    let lag = model.lag();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity((n_steps + 1) * dim);
    times.push(0.0);
    values.extend_from_slice(x0);

    let mut state = x0.to_vec();
    let mut next = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    for k in 0..n_steps {
        fill_normal(rng, &mut z);
        match model.sample_into(&state, &z, ws, &mut next) {
            Ok(()) => {}
            Err(Error::NumericalInstability { .. }) => {
                return Err(Error::RolloutDiverged { step: k })
            }
            Err(e) => return Err(e),
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::RolloutDiverged { step: k });
        }
        state.copy_from_slice(&next);
        times.push((k + 1) as f64 * lag);
        values.extend_from_slice(&state);
    }
    Ok(Trajectory {
        system: None,
        lag,
        dim,
        times,
        values,
        fast_values: None,
    })
}

/// Per-time, per-coordinate ensemble moments plus distribution checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub dim: usize,
    pub n: usize,
    /// Row-major `times.len() x dim`.
    pub mean: Vec<f64>,
    /// Population standard deviation, same layout.
    pub std: Vec<f64>,
    pub checkpoints: Vec<CheckpointSamples>,
}

/// Slow-state samples retained at one checkpoint time.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSamples {
    pub time: f64,
    pub time_index: usize,
    pub dim: usize,
    /// Row-major `kept x dim`.
    pub samples: Vec<f64>,
    /// Paths seen (the cap may have thinned what is stored).
    pub seen: usize,
}

impl CheckpointSamples {
    pub fn kept(&self) -> usize {
        self.samples.len() / self.dim
    }

    /// Samples of one coordinate.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.samples.iter().skip(c).step_by(self.dim).copied().collect()
    }
}

/// Streaming mean/variance accumulator (Welford) over trajectories sharing
/// one grid, with deterministic merge.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    times: Vec<f64>,
    dim: usize,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    cap: usize,
    checkpoints: Vec<CheckpointAccum>,
}

#[derive(Debug, Clone)]
struct CheckpointAccum {
    time: f64,
    time_index: usize,
    samples: Vec<f64>,
    seen: usize,
}

fn resolve_checkpoint(times: &[f64], t: f64) -> Result<usize> {
    times
        .iter()
        .position(|&tk| (tk - t).abs() <= 1e-9 * t.abs().max(1.0))
        .ok_or_else(|| Error::shape(format!("checkpoint time {t} is not on the grid")))
}

impl EnsembleAccumulator {
    pub fn new(times: &[f64], dim: usize, checkpoint_times: &[f64], cap: usize) -> Result<Self> {
        let checkpoints = checkpoint_times
            .iter()
            .map(|&t| {
                Ok(CheckpointAccum {
                    time: t,
                    time_index: resolve_checkpoint(times, t)?,
                    samples: Vec::new(),
                    seen: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleAccumulator {
            times: times.to_vec(),
            dim,
            n: 0,
            mean: vec![0.0; times.len() * dim],
            m2: vec![0.0; times.len() * dim],
            cap,
            checkpoints,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Absorb one trajectory; its grid must match exactly.
    pub fn push(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.dim != self.dim || traj.times.len() != self.times.len() {
            return Err(Error::shape("trajectory does not match the ensemble grid"));
        }
        for (a, b) in traj.times.iter().zip(self.times.iter()) {
            if (a - b).abs() > 1e-12 * b.abs().max(1.0) {
                return Err(Error::shape("trajectory grid mismatch"));
            }
        }
        self.n += 1;
        let inv_n = 1.0 / self.n as f64;
        for k in 0..self.mean.len() {
            let x = traj.values[k];
            let d = x - self.mean[k];
            self.mean[k] += d * inv_n;
            self.m2[k] += d * (x - self.mean[k]);
        }
        for cp in &mut self.checkpoints {
            cp.seen += 1;
            cp.samples.extend_from_slice(traj.state(cp.time_index));
        }
        self.thin();
        Ok(())
    }

    /// Merge another accumulator over the same grid (Chan's parallel
    /// update). Merge order must be fixed by the caller for bit-stable
    /// results.
    pub fn merge(&mut self, other: &EnsembleAccumulator) -> Result<()> {
        if other.dim != self.dim || other.times.len() != self.times.len() {
            return Err(Error::shape("accumulator grids do not match"));
        }
        if other.n == 0 {
            return Ok(());
        }
        if self.n == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.n += other.n;
        for (cp, ocp) in self.checkpoints.iter_mut().zip(other.checkpoints.iter()) {
            cp.seen += ocp.seen;
            cp.samples.extend_from_slice(&ocp.samples);
        }
        self.thin();
        Ok(())
    }

    /// Deterministic thinning to the cap: keep an evenly strided subset.
    fn thin(&mut self) {
        let (dim, cap) = (self.dim, self.cap);
        for cp in &mut self.checkpoints {
            let kept = cp.samples.len() / dim;
            if kept > cap {
                let mut thinned = Vec::with_capacity(cap * dim);
                for i in 0..cap {
                    let src = i * kept / cap;
                    thinned.extend_from_slice(&cp.samples[src * dim..(src + 1) * dim]);
                }
                cp.samples = thinned;
            }
        }
    }

    pub fn finish(self) -> EnsembleStats {
        let n = self.n.max(1) as f64;
        let dim = self.dim;
        let std = self.m2.iter().map(|&m2| libm::sqrt(m2 / n)).collect();
        EnsembleStats {
            times: self.times,
            dim,
            n: self.n,
            mean: self.mean,
            std,
            checkpoints: self
                .checkpoints
                .into_iter()
                .map(|cp| CheckpointSamples {
                    time: cp.time,
                    time_index: cp.time_index,
                    dim,
                    samples: cp.samples,
                    seen: cp.seen,
                })
                .collect(),
        }
    }
}

/// Exact per-time mean/STD of a stored ensemble, with sample retention at
/// the requested checkpoint times.
pub fn ensemble_stats(
    trajectories: &[Trajectory],
    checkpoint_times: &[f64],
    cap: usize,
) -> Result<EnsembleStats> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::shape("empty ensemble"))?;
    let mut acc = EnsembleAccumulator::new(&first.times, first.dim, checkpoint_times, cap)?;
    for traj in trajectories {
        acc.push(traj)?;
    }
    Ok(acc.finish())
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
///
/// Rank-based: symmetric in its arguments and exactly invariant under any
/// common strictly increasing transform of both sample sets.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::shape("ks_distance needs nonempty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Ground-truth ensemble: `n` independent paths from the fixed slow state
/// `x0`, fast block drawn from its conditioned stationary law, integrated at
/// the fine grid. Path `i` uses stream `i` of `seed`.
pub fn truth_ensemble(
    sys: &System,
    x0: &[f64],
    t_end: f64,
    grid: &SimGrid,
    n: usize,
    seed: u64,
    checkpoint_times: &[f64],
    cap: usize,
) -> Result<EnsembleStats> {
    let mut total: Option<EnsembleAccumulator> = None;
    let mut start = 0;
    while start < n {
        let end = (start + PATH_BLOCK).min(n);
        let block = truth_block(sys, x0, t_end, grid, seed, start..end, checkpoint_times, cap)?;
        match total.as_mut() {
            Some(t) => t.merge(&block)?,
            None => total = Some(block),
        }
        start = end;
    }
    Ok(total.expect("n >= 1").finish())
}

/// One block of ground-truth paths; see [`truth_ensemble`].
#[allow(clippy::too_many_arguments)]
pub fn truth_block(
    sys: &System,
    x0: &[f64],
    t_end: f64,
    grid: &SimGrid,
    seed: u64,
    paths: core::ops::Range<usize>,
    checkpoint_times: &[f64],
    cap: usize,
) -> Result<EnsembleAccumulator> {
    let n_lags = grid.lags_until(t_end)?;
    let times: Vec<f64> = (0..=n_lags).map(|k| k as f64 * grid.lag).collect();
    let mut acc = EnsembleAccumulator::new(&times, sys.dim_slow(), checkpoint_times, cap)?;
    for i in paths {
        let mut rng = stream_rng(seed, i as u64);
        let y0 = sample_fast_stationary(sys, x0, &mut rng)?;
        let traj = simulate_slow(sys, x0, &y0, t_end, grid, &mut rng)?;
        acc.push(&traj)?;
    }
    Ok(acc)
}

/// Model ensemble: `n` independent rollouts from `x0`, path `i` on stream
/// `i` of `seed`.
pub fn model_ensemble(
    model: &FlowModel,
    x0: &[f64],
    n_steps: usize,
    n: usize,
    seed: u64,
    checkpoint_times: &[f64],
    cap: usize,
) -> Result<EnsembleStats> {
    let mut total: Option<EnsembleAccumulator> = None;
    let mut start = 0;
    while start < n {
        let end = (start + PATH_BLOCK).min(n);
        let block = model_block(model, x0, n_steps, seed, start..end, checkpoint_times, cap)?;
        match total.as_mut() {
            Some(t) => t.merge(&block)?,
            None => total = Some(block),
        }
        start = end;
    }
    Ok(total.expect("n >= 1").finish())
}

/// One block of rollout paths; see [`model_ensemble`].
pub fn model_block(
    model: &FlowModel,
    x0: &[f64],
    n_steps: usize,
    seed: u64,
    paths: core::ops::Range<usize>,
    checkpoint_times: &[f64],
    cap: usize,
) -> Result<EnsembleAccumulator> {
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * model.lag()).collect();
    let mut acc = EnsembleAccumulator::new(&times, model.dim(), checkpoint_times, cap)?;
    let mut ws = FlowWorkspace::for_model(model);
    for i in paths {
        let mut rng = stream_rng(seed, i as u64);
        let traj = rollout_with(model, x0, n_steps, &mut rng, &mut ws)?;
        acc.push(&traj)?;
    }
    Ok(acc)
}

/// Per-checkpoint, per-coordinate KS distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KsEntry {
    pub time: f64,
    pub coordinate: usize,
    pub ks: f64,
}

/// Model-vs-truth ensemble comparison.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    pub dim: usize,
    pub truth: EnsembleStats,
    pub model: EnsembleStats,
    pub ks: Vec<KsEntry>,
    /// Per coordinate: max over time of |mean_model - mean_truth|.
    pub max_mean_dev: Vec<f64>,
    /// Per coordinate: max over time of |std_model - std_truth|.
    pub max_std_dev: Vec<f64>,
    /// Per coordinate: spread (max - min) of the truth mean curve.
    pub truth_mean_range: Vec<f64>,
    /// Per coordinate: spread of the truth STD curve.
    pub truth_std_range: Vec<f64>,
}

/// Assemble discrepancy summaries and KS tables from two ensembles on the
/// same grid (usually truth vs model; also used truth-vs-truth for
/// self-consistency checks).
pub fn build_report(truth: EnsembleStats, model: EnsembleStats) -> Result<ComparisonReport> {
    if truth.dim != model.dim || truth.times.len() != model.times.len() {
        return Err(Error::shape("ensembles do not share a grid"));
    }
    if truth.checkpoints.len() != model.checkpoints.len() {
        return Err(Error::shape("ensembles have different checkpoints"));
    }
    let dim = truth.dim;
    let nt = truth.times.len();
    let mut max_mean_dev = vec![0.0f64; dim];
    let mut max_std_dev = vec![0.0f64; dim];
    let mut mean_lo = vec![f64::INFINITY; dim];
    let mut mean_hi = vec![f64::NEG_INFINITY; dim];
    let mut std_lo = vec![f64::INFINITY; dim];
    let mut std_hi = vec![f64::NEG_INFINITY; dim];
    for k in 0..nt {
        for c in 0..dim {
            let idx = k * dim + c;
            max_mean_dev[c] = max_mean_dev[c].max((model.mean[idx] - truth.mean[idx]).abs());
            max_std_dev[c] = max_std_dev[c].max((model.std[idx] - truth.std[idx]).abs());
            mean_lo[c] = mean_lo[c].min(truth.mean[idx]);
            mean_hi[c] = mean_hi[c].max(truth.mean[idx]);
            std_lo[c] = std_lo[c].min(truth.std[idx]);
            std_hi[c] = std_hi[c].max(truth.std[idx]);
        }
    }
    let mut ks = Vec::new();
    for (tc, mc) in truth.checkpoints.iter().zip(model.checkpoints.iter()) {
        for c in 0..dim {
            ks.push(KsEntry {
                time: tc.time,
                coordinate: c,
                ks: ks_distance(&tc.column(c), &mc.column(c))?,
            });
        }
    }
    Ok(ComparisonReport {
        times: truth.times.clone(),
        dim,
        max_mean_dev,
        max_std_dev,
        truth_mean_range: mean_hi.iter().zip(&mean_lo).map(|(h, l)| h - l).collect(),
        truth_std_range: std_hi.iter().zip(&std_lo).map(|(h, l)| h - l).collect(),
        truth,
        model,
        ks,
    })
}

/// Settings for [`compare`].
#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub n_ens: usize,
    pub checkpoint_times: Vec<f64>,
    /// Fine grid for the ground-truth side; its lag must equal the model's.
    pub grid: SimGrid,
    pub seed: u64,
    pub reservoir_cap: usize,
}

/// Stream-seed separation between the truth and model sides of a
/// comparison.
pub const MODEL_SEED_SALT: u64 = 0x9e3779b97f4a7c15;

/// Generate a model rollout ensemble and a ground-truth ensemble from the
/// same start state and compare them: pointwise moment discrepancies plus
/// per-checkpoint KS distances.
pub fn compare(model: &FlowModel, sys: &System, cfg: &CompareConfig) -> Result<ComparisonReport> {
    if model.dim() != sys.dim_slow() {
        return Err(Error::shape(format!(
            "model dim {} vs system slow dim {}",
            model.dim(),
            sys.dim_slow()
        )));
    }
    if (model.lag() - cfg.grid.lag).abs() > 1e-9 * cfg.grid.lag {
        return Err(Error::shape(format!(
            "model lag {} vs comparison lag {}",
            model.lag(),
            cfg.grid.lag
        )));
    }
    if cfg.n_ens == 0 {
        return Err(Error::config("ensemble size must be >= 1"));
    }
    let n_steps = cfg.grid.lags_until(cfg.t_end)?;
    let truth = truth_ensemble(
        sys,
        &cfg.x0,
        cfg.t_end,
        &cfg.grid,
        cfg.n_ens,
        cfg.seed,
        &cfg.checkpoint_times,
        cfg.reservoir_cap,
    )?;
    let model_stats = model_ensemble(
        model,
        &cfg.x0,
        n_steps,
        cfg.n_ens,
        cfg.seed ^ MODEL_SEED_SALT,
        &cfg.checkpoint_times,
        cfg.reservoir_cap,
    )?;
    build_report(truth, model_stats)
}
