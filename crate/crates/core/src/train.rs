//! Maximum-likelihood training of the conditional flow.
//!
//! The loss is the mean negative log-likelihood over a batch drawn with
//! replacement from the training split (the batch mean rather than the sum,
//! so learning rates transfer across batch sizes; the argmin is identical).
//! Adam drives the updates under a cyclic learning-rate schedule; a held-out
//! fraction of trajectories provides the validation loss that selects the
//! returned model.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::dataset::{train_val_split, PairDataset};
use crate::error::Error;
use crate::flow::{FlowConfig, FlowModel, FlowWorkspace};
use crate::rng::stream_rng;
use crate::Result;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub flow: FlowConfig,
    pub iterations: u64,
    pub batch_size: usize,
    /// Schedule floor.
    pub base_lr: f64,
    /// Schedule ceiling at full amplitude.
    pub max_lr: f64,
    /// Per-iteration exponential amplitude decay.
    pub gamma: f64,
    /// Half-period of the triangular wave, in iterations.
    pub step_size: u64,
    /// Every this many iterations the amplitude is additionally scaled by
    /// `cycle_decay`.
    pub cycle_period: u64,
    pub cycle_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    /// Fraction of trajectories held out for validation.
    pub val_fraction: f64,
    /// Checkpoint cadence: a report row (with validation loss) every this
    /// many iterations.
    pub report_every: u64,
    /// Loss ceiling of the divergence guard.
    pub divergence_nll: f64,
    /// Consecutive bad iterations tolerated before giving up.
    pub divergence_patience: u32,
}

impl TrainConfig {
    pub fn new(flow: FlowConfig) -> Self {
        TrainConfig {
            flow,
            iterations: 10_000,
            batch_size: 1024,
            base_lr: 3e-4,
            max_lr: 5e-4,
            gamma: 0.99999,
            step_size: 10_000,
            cycle_period: 40_000,
            cycle_decay: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
            val_fraction: 0.1,
            report_every: 1,
            divergence_nll: 1e6,
            divergence_patience: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        if !(self.base_lr <= self.max_lr) || !(self.base_lr > 0.0) {
            return Err(Error::config(format!(
                "need 0 < base_lr <= max_lr, got {} and {}",
                self.base_lr, self.max_lr
            )));
        }
        if self.batch_size == 0 || self.step_size == 0 || self.cycle_period == 0 {
            return Err(Error::config("counts must be positive"));
        }
        if self.report_every == 0 {
            return Err(Error::config("report_every must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config("val_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// One checkpoint row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: u64,
    pub nll_train: f64,
    pub nll_val: f64,
    pub lr: f64,
    pub seconds: f64,
}

/// Training log plus the selection outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub rows: Vec<TrainRecord>,
    pub best_iteration: u64,
    pub best_nll_val: f64,
    pub final_nll_val: f64,
}

/// Everything the training loop produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model at the best validation checkpoint.
    pub best: FlowModel,
    /// Model after the last iteration.
    pub last: FlowModel,
    pub report: TrainReport,
}

/// Cyclic learning rate: a triangular wave between `base_lr` and `max_lr`
/// with half-period `step_size`, amplitude damped by `gamma^iteration` and
/// halved (`cycle_decay`) every `cycle_period` iterations. The floor
/// `base_lr` is preserved throughout.
pub fn cyclic_lr(iteration: u64, cfg: &TrainConfig) -> f64 {
    let it = iteration as f64;
    let phase = it / cfg.step_size as f64;
    let tri = (1.0 - ((phase % 2.0) - 1.0).abs()).max(0.0);
    let damp = libm::pow(cfg.gamma, it)
        * libm::pow(cfg.cycle_decay, (iteration / cfg.cycle_period) as f64);
    cfg.base_lr + (cfg.max_lr - cfg.base_lr) * tri * damp
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
    }
}

/// Sum in a permutation-invariant order: the same multiset of values gives
/// bit-identical results regardless of input order.
fn mean_sorted(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean NLL of a batch of physical-unit records and its exact gradient.
///
/// `x0s` and `x1s` are row-major `n x dim`.
pub fn nll_loss(
    model: &FlowModel,
    x0s: &[f64],
    x1s: &[f64],
    ws: &mut FlowWorkspace,
) -> Result<(f64, Vec<f64>)> {
    let dim = model.dim();
    if x0s.is_empty() || x0s.len() != x1s.len() || x0s.len() % dim != 0 {
        return Err(Error::shape("nll_loss: bad batch shape"));
    }
    let n = x0s.len() / dim;
    let mut grad = vec![0.0; model.n_params()];
    let mut x0n = vec![0.0; dim];
    let mut x1n = vec![0.0; dim];
    let norm = model.normalization().clone();
    let phys_const = -norm.log_det_to_normalized();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        norm.to_normalized(&x0s[i * dim..(i + 1) * dim], &mut x0n);
        norm.to_normalized(&x1s[i * dim..(i + 1) * dim], &mut x1n);
        let nll = model.nll_grad_normalized(&x0n, &x1n, ws, &mut grad)?;
        values.push(nll + phys_const);
    }
    let loss = mean_sorted(&mut values);
    for g in &mut grad {
        *g /= n as f64;
    }
    Ok((loss, grad))
}

struct BatchEval<'a> {
    ds: &'a PairDataset,
    phys_const: f64,
    values: Vec<f64>,
}

impl<'a> BatchEval<'a> {
    /// Mean NLL and gradient over dataset records (stored units are the
    /// model's standardized space). Gradient accumulation is an ordered sum
    /// over the given index order.
    fn loss_grad(
        &mut self,
        model: &FlowModel,
        idx: &[usize],
        ws: &mut FlowWorkspace,
        grad: &mut [f64],
    ) -> Result<f64> {
        grad.fill(0.0);
        self.values.clear();
        for &i in idx {
            let nll = model.nll_grad_normalized(self.ds.x0(i), self.ds.x1(i), ws, grad)?;
            self.values.push(nll + self.phys_const);
        }
        for g in grad.iter_mut() {
            *g /= idx.len() as f64;
        }
        Ok(mean_sorted(&mut self.values))
    }

    /// Value-only mean NLL (no gradient).
    fn loss(&mut self, model: &FlowModel, idx: &[usize], ws: &mut FlowWorkspace) -> Result<f64> {
        self.values.clear();
        for &i in idx {
            let nll = model.nll_normalized(self.ds.x0(i), self.ds.x1(i), ws)?;
            self.values.push(nll + self.phys_const);
        }
        Ok(mean_sorted(&mut self.values))
    }
}

/// Run the training loop. See [`train_with_clock`] for the wall-clock
/// column of the report; this variant reports zero seconds.
pub fn train(ds: &PairDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_clock(ds, cfg, &mut || 0.0)
}

/// Training loop: sample a batch with replacement, take the mean-NLL
/// gradient, step Adam at the scheduled rate, checkpoint every
/// `report_every` iterations, and return the best-validation model.
///
/// Divergence (non-finite or loss above `divergence_nll` for
/// `divergence_patience` consecutive iterations) aborts with the last model
/// that still evaluated cleanly.
pub fn train_with_clock(
    ds: &PairDataset,
    cfg: &TrainConfig,
    clock: &mut dyn FnMut() -> f64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::config("training dataset is empty"));
    }
    if ds.dim != cfg.flow.dim {
        return Err(Error::shape(format!(
            "dataset dim {} vs flow dim {}",
            ds.dim, cfg.flow.dim
        )));
    }

    let affine = ds.affine();
    let mut model = FlowModel::new(cfg.flow.clone(), affine, cfg.seed)?;
    model.set_lag(ds.lag)?;
    let mut ws = FlowWorkspace::for_model(&model);

    let (train_idx, val_idx) = train_val_split(ds, cfg.val_fraction, cfg.seed);
    // With no held-out trajectories, validate on (a capped prefix of) the
    // training records instead.
    let val_idx = if val_idx.is_empty() {
        train_idx[..train_idx.len().min(4096)].to_vec()
    } else {
        val_idx
    };

    let batch_size = cfg.batch_size.min(train_idx.len());
    let mut batch_rng = stream_rng(cfg.seed, 1);
    let mut batch = vec![0usize; batch_size];

    let mut eval = BatchEval {
        ds,
        phys_const: -model.normalization().log_det_to_normalized(),
        values: Vec::with_capacity(batch_size.max(val_idx.len())),
    };

    let mut flat = model.flat_params();
    let mut grad = vec![0.0; flat.len()];
    let mut adam = Adam::new(flat.len(), cfg.beta1, cfg.beta2, cfg.eps_adam);

    let mut last_good = flat.clone();
    let mut best_flat = flat.clone();
    let mut best_iteration = 0u64;
    let mut best_nll_val = f64::INFINITY;
    let mut rows: Vec<TrainRecord> = Vec::new();
    let mut bad_streak = 0u32;

    let mut final_nll_val = eval.loss(&model, &val_idx, &mut ws)?;
    if cfg.iterations == 0 {
        best_nll_val = final_nll_val;
    }

    for it in 0..cfg.iterations {
        for b in batch.iter_mut() {
            *b = train_idx[batch_rng.random_range(0..train_idx.len())];
        }
        let lr = cyclic_lr(it, cfg);
        let nll_train = eval.loss_grad(&model, &batch, &mut ws, &mut grad)?;

        let healthy = nll_train.is_finite() && nll_train <= cfg.divergence_nll;
        if healthy {
            bad_streak = 0;
            last_good.copy_from_slice(&flat);
        } else {
            bad_streak += 1;
            if bad_streak >= cfg.divergence_patience {
                model.set_flat_params(&last_good)?;
                return Err(Error::TrainingDiverged {
                    iteration: it,
                    last_good: Box::new(model),
                });
            }
        }

        // Update only on usable gradients; a poisoned step is unrecoverable.
        if grad.iter().all(|g| g.is_finite()) {
            adam.step(&mut flat, &grad, lr);
            model.set_flat_params(&flat)?;
        }

        let iteration = it + 1;
        if iteration % cfg.report_every == 0 || iteration == cfg.iterations {
            let nll_val = eval.loss(&model, &val_idx, &mut ws)?;
            final_nll_val = nll_val;
            if nll_val.is_finite() && nll_val < best_nll_val {
                best_nll_val = nll_val;
                best_iteration = iteration;
                best_flat.copy_from_slice(&flat);
            }
            rows.push(TrainRecord {
                iteration,
                nll_train,
                nll_val,
                lr,
                seconds: clock(),
            });
        }
    }

    let last = model.clone();
    let mut best = model;
    best.set_flat_params(&best_flat)?;
    Ok(TrainOutcome {
        best,
        last,
        report: TrainReport {
            rows,
            best_iteration,
            best_nll_val,
            final_nll_val,
        },
    })
}
