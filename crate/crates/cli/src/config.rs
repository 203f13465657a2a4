//! Resolved command configurations.
//!
//! Each subcommand reads an optional TOML config file and applies
//! command-line flags on top (flags win). The resolved struct is echoed
//! verbatim into the provenance sidecar, so a run can be replayed from its
//! outputs alone. Seeds are always explicit; nothing falls back to the
//! clock.

use serde::{Deserialize, Serialize};
use slowflow_core::system::Preset;

use crate::error::AppError;
use crate::Result;

fn pick<T>(cli: Option<T>, file: Option<T>, default: Option<T>, name: &str) -> Result<T> {
    cli.or(file)
        .or(default)
        .ok_or_else(|| AppError::config(format!("missing required setting `{name}`")))
}

pub fn load_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&str>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
            toml::from_str(&text).map_err(|e| AppError::config(format!("{p}: {e}")))
        }
    }
}

pub fn parse_preset(name: &str) -> Result<Preset> {
    Preset::parse(name)
        .ok_or_else(|| AppError::config(format!("unknown system `{name}` (try ex1..ex4, triad, or the full names)")))
}

/// `lo:hi,lo:hi,...` per coordinate.
pub fn parse_domain(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|pair| {
            let (lo, hi) = pair
                .split_once(':')
                .ok_or_else(|| AppError::config(format!("bad interval `{pair}`, want lo:hi")))?;
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|_| AppError::config(format!("bad number in `{pair}`")))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|_| AppError::config(format!("bad number in `{pair}`")))?;
            Ok((lo, hi))
        })
        .collect()
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateCfg {
    pub system: String,
    pub pairs: usize,
    pub t_burst: f64,
    pub dt: f64,
    pub lag: f64,
    pub seed: u64,
    pub normalize: bool,
    pub domain: Option<String>,
    pub csv: bool,
    pub out: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateFile {
    pub system: Option<String>,
    pub pairs: Option<usize>,
    #[serde(rename = "T")]
    pub t_burst: Option<f64>,
    pub dt: Option<f64>,
    pub lag: Option<f64>,
    pub seed: Option<u64>,
    pub normalize: Option<bool>,
    pub domain: Option<String>,
    pub csv: Option<bool>,
    pub out: Option<String>,
}

impl GenerateCfg {
    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        file: GenerateFile,
        system: Option<String>,
        pairs: Option<usize>,
        t_burst: Option<f64>,
        dt: Option<f64>,
        lag: Option<f64>,
        seed: Option<u64>,
        raw: bool,
        domain: Option<String>,
        csv: bool,
        out: Option<String>,
    ) -> Result<Self> {
        let cfg = GenerateCfg {
            system: pick(system, file.system, None, "system")?,
            pairs: pick(pairs, file.pairs, None, "pairs")?,
            t_burst: pick(t_burst, file.t_burst, Some(1.0), "T")?,
            dt: pick(dt, file.dt, Some(1e-4), "dt")?,
            lag: pick(lag, file.lag, Some(0.01), "lag")?,
            seed: pick(seed, file.seed, Some(0), "seed")?,
            normalize: if raw {
                false
            } else {
                file.normalize.unwrap_or(true)
            },
            domain: domain.or(file.domain),
            csv: csv || file.csv.unwrap_or(false),
            out: pick(out, file.out, None, "out")?,
        };
        parse_preset(&cfg.system)?;
        if let Some(d) = &cfg.domain {
            parse_domain(d)?;
        }
        if cfg.pairs == 0 {
            return Err(AppError::config("pairs must be >= 1"));
        }
        Ok(cfg)
    }
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCfg {
    pub data: String,
    pub out: String,
    pub iters: u64,
    pub batch: usize,
    pub seed: u64,
    pub layers: usize,
    pub hidden: Vec<usize>,
    pub mode: String,
    pub log_scale_clamp: f64,
    pub base_lr: f64,
    pub max_lr: f64,
    pub gamma: f64,
    pub step_size: u64,
    pub cycle_period: u64,
    pub cycle_decay: f64,
    pub val_fraction: f64,
    pub report_every: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub data: Option<String>,
    pub out: Option<String>,
    pub iters: Option<u64>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
    pub layers: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub mode: Option<String>,
    pub log_scale_clamp: Option<f64>,
    pub base_lr: Option<f64>,
    pub max_lr: Option<f64>,
    pub gamma: Option<f64>,
    pub step_size: Option<u64>,
    pub cycle_period: Option<u64>,
    pub cycle_decay: Option<f64>,
    pub val_fraction: Option<f64>,
    pub report_every: Option<u64>,
}

pub struct TrainFlags {
    pub data: Option<String>,
    pub out: Option<String>,
    pub iters: Option<u64>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
    pub layers: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub mode: Option<String>,
    pub report_every: Option<u64>,
    pub val_fraction: Option<f64>,
}

#[derive(Serialize)]
struct TrainHyper<'a> {
    iters: u64,
    batch: usize,
    seed: u64,
    layers: usize,
    hidden: &'a [usize],
    mode: &'a str,
    log_scale_clamp: f64,
    base_lr: f64,
    max_lr: f64,
    gamma: f64,
    step_size: u64,
    cycle_period: u64,
    cycle_decay: f64,
    val_fraction: f64,
    report_every: u64,
}

impl TrainCfg {
    /// Canonical encoding of everything that determines the trained
    /// parameters, excluding file paths (so a replay into a scratch
    /// directory hashes identically).
    pub fn hyper_json(&self) -> String {
        serde_json::to_string(&TrainHyper {
            iters: self.iters,
            batch: self.batch,
            seed: self.seed,
            layers: self.layers,
            hidden: &self.hidden,
            mode: &self.mode,
            log_scale_clamp: self.log_scale_clamp,
            base_lr: self.base_lr,
            max_lr: self.max_lr,
            gamma: self.gamma,
            step_size: self.step_size,
            cycle_period: self.cycle_period,
            cycle_decay: self.cycle_decay,
            val_fraction: self.val_fraction,
            report_every: self.report_every,
        })
        .expect("hyperparameters serialize")
    }

    pub fn resolve(file: TrainFile, f: TrainFlags) -> Result<Self> {
        let cfg = TrainCfg {
            data: pick(f.data, file.data, None, "data")?,
            out: pick(f.out, file.out, None, "out")?,
            iters: pick(f.iters, file.iters, Some(200_000), "iters")?,
            batch: pick(f.batch, file.batch, Some(30_000), "batch")?,
            seed: pick(f.seed, file.seed, Some(0), "seed")?,
            layers: pick(f.layers, file.layers, Some(5), "layers")?,
            hidden: pick(f.hidden, file.hidden, Some(vec![20, 20, 20]), "hidden")?,
            mode: pick(f.mode, file.mode, Some("full_maf".into()), "mode")?,
            log_scale_clamp: pick(None, file.log_scale_clamp, Some(7.0), "log_scale_clamp")?,
            base_lr: pick(None, file.base_lr, Some(3e-4), "base_lr")?,
            max_lr: pick(None, file.max_lr, Some(5e-4), "max_lr")?,
            gamma: pick(None, file.gamma, Some(0.99999), "gamma")?,
            step_size: pick(None, file.step_size, Some(10_000), "step_size")?,
            cycle_period: pick(None, file.cycle_period, Some(40_000), "cycle_period")?,
            cycle_decay: pick(None, file.cycle_decay, Some(0.5), "cycle_decay")?,
            val_fraction: pick(f.val_fraction, file.val_fraction, Some(0.1), "val_fraction")?,
            report_every: pick(f.report_every, file.report_every, Some(1), "report_every")?,
        };
        if slowflow_core::flow::ConditionerMode::parse(&cfg.mode).is_none() {
            return Err(AppError::config(format!(
                "unknown conditioner mode `{}` (full_maf or hypernet)",
                cfg.mode
            )));
        }
        if cfg.batch == 0 {
            return Err(AppError::config("batch must be >= 1"));
        }
        Ok(cfg)
    }
}

// ----------------------------------------------------------------- rollout

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutCfg {
    pub model: String,
    pub x0: Vec<f64>,
    pub steps: Option<usize>,
    pub t_end: Option<f64>,
    pub paths: usize,
    pub seed: u64,
    pub out: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutFile {
    pub model: Option<String>,
    pub x0: Option<Vec<f64>>,
    pub steps: Option<usize>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

impl RolloutCfg {
    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        file: RolloutFile,
        model: Option<String>,
        x0: Option<Vec<f64>>,
        steps: Option<usize>,
        t_end: Option<f64>,
        paths: Option<usize>,
        seed: Option<u64>,
        out: Option<String>,
    ) -> Result<Self> {
        let cfg = RolloutCfg {
            model: pick(model, file.model, None, "model")?,
            x0: pick(x0, file.x0, None, "x0")?,
            steps: steps.or(file.steps),
            t_end: t_end.or(file.t_end),
            paths: pick(paths, file.paths, Some(10), "paths")?,
            seed: pick(seed, file.seed, Some(0), "seed")?,
            out: pick(out, file.out, None, "out")?,
        };
        if cfg.steps.is_none() && cfg.t_end.is_none() {
            return Err(AppError::config("need either --steps or --T"));
        }
        if cfg.paths == 0 {
            return Err(AppError::config("paths must be >= 1"));
        }
        Ok(cfg)
    }
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateCfg {
    pub model: Option<String>,
    pub system: String,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub ens: usize,
    pub checkpoints: Vec<f64>,
    pub dt: f64,
    pub lag: Option<f64>,
    pub seed: u64,
    pub threads: usize,
    pub self_test: bool,
    pub out: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateFile {
    pub model: Option<String>,
    pub system: Option<String>,
    pub x0: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    pub ens: Option<usize>,
    pub checkpoints: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub lag: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub self_test: Option<bool>,
    pub out: Option<String>,
}

pub struct ValidateFlags {
    pub model: Option<String>,
    pub system: Option<String>,
    pub x0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub ens: Option<usize>,
    pub checkpoints: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub lag: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub self_test: bool,
    pub out: Option<String>,
}

impl ValidateCfg {
    pub fn resolve(file: ValidateFile, f: ValidateFlags) -> Result<Self> {
        let cfg = ValidateCfg {
            model: f.model.or(file.model),
            system: pick(f.system, file.system, None, "system")?,
            x0: pick(f.x0, file.x0, None, "x0")?,
            t_end: pick(f.t_end, file.t_end, None, "T")?,
            ens: pick(f.ens, file.ens, Some(10_000), "ens")?,
            checkpoints: f.checkpoints.or(file.checkpoints).unwrap_or_default(),
            dt: pick(f.dt, file.dt, Some(1e-4), "dt")?,
            lag: f.lag.or(file.lag),
            seed: pick(f.seed, file.seed, Some(0), "seed")?,
            threads: pick(f.threads, file.threads, Some(1), "threads")?,
            self_test: f.self_test || file.self_test.unwrap_or(false),
            out: pick(f.out, file.out, None, "out")?,
        };
        parse_preset(&cfg.system)?;
        if cfg.model.is_none() && !cfg.self_test {
            return Err(AppError::config("need --model (or --self-test)"));
        }
        if cfg.ens == 0 {
            return Err(AppError::config("ens must be >= 1"));
        }
        Ok(cfg)
    }
}
