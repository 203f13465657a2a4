//! Subcommand implementations shared by the binary and the test suites.
//!
//! Every command writes its primary artifacts plus a provenance sidecar
//! (`<out>.provenance.json`) holding the resolved configuration, the code
//! version, and the artifact list. `replay` re-executes a sidecar into a
//! scratch directory and byte-compares the numerical payloads.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use slowflow_core::dataset::{build_pairs, normalize};
use slowflow_core::flow::{ConditionerMode, FlowConfig};
use slowflow_core::integrate::SimGrid;
use slowflow_core::rng::stream_rng;
use slowflow_core::stats::{build_report, rollout, ComparisonReport, MODEL_SEED_SALT, RESERVOIR_CAP};
use slowflow_core::system::{System, SlowFastSystem};
use slowflow_core::train::{train_with_clock, TrainConfig};
use slowflow_core::Error as CoreError;

use crate::config::{
    parse_domain, parse_preset, GenerateCfg, RolloutCfg, TrainCfg, ValidateCfg,
};
use crate::error::AppError;
use crate::fnv::fnv1a64_hex;
use crate::format::report::{
    comparison_json, curves_csv, fd_histogram, histogram_csv, ks_csv, train_report_csv,
};
use crate::format::{dataset, fmt_f64, model, read_bytes, trajectory, write_text};
use crate::svg;
use crate::threads::{model_ensemble_threaded, truth_ensemble_threaded};
use crate::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// ------------------------------------------------------------- provenance

#[derive(Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub command: String,
    pub version: String,
    pub settings: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact {
    pub role: String,
    pub path: String,
    /// Whether `replay` byte-compares this artifact (wall-clock columns and
    /// figures are excluded).
    pub compare: bool,
}

fn artifact(role: &str, path: impl Into<String>, compare: bool) -> Artifact {
    Artifact {
        role: role.into(),
        path: path.into(),
        compare,
    }
}

pub fn sidecar_path(out: &str) -> String {
    format!("{out}.provenance.json")
}

fn write_sidecar<S: Serialize>(
    out: &str,
    command: &str,
    settings: &S,
    artifacts: &[Artifact],
) -> Result<()> {
    let sidecar = Sidecar {
        command: command.into(),
        version: VERSION.into(),
        settings: serde_json::to_value(settings)
            .map_err(|e| AppError::config(e.to_string()))?,
        artifacts: artifacts.to_vec(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| AppError::config(e.to_string()))?;
    write_text(Path::new(&sidecar_path(out)), &json)
}

fn build_system(name: &str, domain: &Option<String>) -> Result<System> {
    let mut sys = System::preset(parse_preset(name)?);
    if let Some(d) = domain {
        sys.set_ic_domain(parse_domain(d)?).map_err(AppError::Core)?;
    }
    Ok(sys)
}

// --------------------------------------------------------------- generate

pub fn cmd_generate(cfg: &GenerateCfg) -> Result<()> {
    let sys = build_system(&cfg.system, &cfg.domain)?;
    let grid = SimGrid::new(cfg.dt, cfg.lag);
    let ds = build_pairs(&sys, cfg.pairs, cfg.t_burst, &grid, cfg.seed)?;
    let ds = if cfg.normalize { normalize(&ds)? } else { ds };

    let out = Path::new(&cfg.out);
    dataset::save(out, &ds)?;
    let mut artifacts = vec![artifact("dataset", &cfg.out, true)];
    if cfg.csv {
        let csv = format!("{}.csv", cfg.out);
        dataset::export_csv(Path::new(&csv), &ds)?;
        artifacts.push(artifact("dataset_csv", csv, true));
    }
    write_sidecar(&cfg.out, "generate", cfg, &artifacts)?;
    println!(
        "wrote {} pairs ({} trajectories of {} lags, system {}) to {}",
        ds.len(),
        ds.n_trajectories(),
        ds.pairs_per_trajectory,
        cfg.system,
        cfg.out
    );
    Ok(())
}

// ------------------------------------------------------------------ train

pub fn cmd_train(cfg: &TrainCfg) -> Result<()> {
    let ds = dataset::load(Path::new(&cfg.data))?;
    let flow = FlowConfig {
        dim: ds.dim,
        n_layers: cfg.layers,
        hidden: cfg.hidden.clone(),
        mode: ConditionerMode::parse(&cfg.mode)
            .ok_or_else(|| AppError::config(format!("unknown mode {}", cfg.mode)))?,
        log_scale_clamp: cfg.log_scale_clamp,
    };
    let train_cfg = TrainConfig {
        flow,
        iterations: cfg.iters,
        batch_size: cfg.batch,
        base_lr: cfg.base_lr,
        max_lr: cfg.max_lr,
        gamma: cfg.gamma,
        step_size: cfg.step_size,
        cycle_period: cfg.cycle_period,
        cycle_decay: cfg.cycle_decay,
        seed: cfg.seed,
        val_fraction: cfg.val_fraction,
        report_every: cfg.report_every,
        ..TrainConfig::new(FlowConfig::new(ds.dim))
    };
    let config_hash = fnv1a64_hex(cfg.hyper_json().as_bytes());

    let started = Instant::now();
    let outcome = match train_with_clock(&ds, &train_cfg, &mut || started.elapsed().as_secs_f64())
    {
        Ok(outcome) => outcome,
        Err(CoreError::TrainingDiverged {
            iteration,
            last_good,
        }) => {
            let rescue = format!("{}.lastgood", cfg.out);
            model::save(
                Path::new(&rescue),
                &last_good,
                Some(config_hash),
                Some(cfg.seed),
            )?;
            eprintln!("training diverged at iteration {iteration}; last good checkpoint kept at {rescue}");
            return Err(AppError::Core(CoreError::TrainingDiverged {
                iteration,
                last_good,
            }));
        }
        Err(e) => return Err(e.into()),
    };

    model::save(
        Path::new(&cfg.out),
        &outcome.best,
        Some(config_hash.clone()),
        Some(cfg.seed),
    )?;
    let final_path = format!("{}.final", cfg.out);
    model::save(
        Path::new(&final_path),
        &outcome.last,
        Some(config_hash),
        Some(cfg.seed),
    )?;
    let report_path = format!("{}.report.csv", cfg.out);
    train_report_csv(Path::new(&report_path), &outcome.report)?;
    write_sidecar(
        &cfg.out,
        "train",
        cfg,
        &[
            artifact("model_best", &cfg.out, true),
            artifact("model_final", &final_path, true),
            // Wall-clock column varies run to run.
            artifact("report_csv", &report_path, false),
        ],
    )?;
    println!(
        "final validation NLL: {}",
        fmt_f64(outcome.report.final_nll_val)
    );
    println!(
        "best validation NLL: {} at iteration {}",
        fmt_f64(outcome.report.best_nll_val),
        outcome.report.best_iteration
    );
    Ok(())
}

// ---------------------------------------------------------------- rollout

fn steps_from(cfg_steps: Option<usize>, t_end: Option<f64>, lag: f64) -> Result<usize> {
    match (cfg_steps, t_end) {
        (Some(s), _) => Ok(s),
        (None, Some(t)) => {
            let ratio = t / lag;
            let k = ratio.round();
            if (ratio - k).abs() > 1e-9 * ratio.abs().max(1.0) || k < 0.0 {
                return Err(AppError::config(format!(
                    "horizon {t} is not a whole number of lags ({lag})"
                )));
            }
            Ok(k as usize)
        }
        (None, None) => Err(AppError::config("need steps or T")),
    }
}

pub fn cmd_rollout(cfg: &RolloutCfg) -> Result<()> {
    let loaded = model::load(Path::new(&cfg.model))?;
    let m = loaded.model;
    if cfg.x0.len() != m.dim() {
        return Err(AppError::Core(CoreError::Shape(format!(
            "x0 has {} coordinates, model expects {}",
            cfg.x0.len(),
            m.dim()
        ))));
    }
    let n_steps = steps_from(cfg.steps, cfg.t_end, m.lag())?;
    let mut trajs = Vec::with_capacity(cfg.paths);
    for i in 0..cfg.paths {
        let mut rng = stream_rng(cfg.seed, i as u64);
        trajs.push(rollout(&m, &cfg.x0, n_steps, &mut rng)?);
    }

    let out = Path::new(&cfg.out);
    trajectory::save(out, &trajs, None, cfg.seed)?;
    let csv = format!("{}.csv", cfg.out);
    trajectory::export_csv(Path::new(&csv), &trajs)?;
    let mut artifacts = vec![
        artifact("trajectories", &cfg.out, true),
        artifact("trajectories_csv", &csv, true),
    ];
    for c in 0..m.dim() {
        let columns: Vec<Vec<f64>> = trajs
            .iter()
            .map(|t| (0..t.len()).map(|k| t.state(k)[c]).collect())
            .collect();
        let series: Vec<svg::Series> = trajs
            .iter()
            .zip(columns.iter())
            .enumerate()
            .map(|(i, (t, ys))| svg::Series {
                label: None,
                xs: &t.times,
                ys,
                color: svg::path_color(i),
                dashed: false,
            })
            .collect();
        let path = format!("{}.x{}.svg", cfg.out, c + 1);
        svg::line_plot(
            Path::new(&path),
            &format!("model sample paths, coordinate x{}", c + 1),
            "t",
            &format!("x{}", c + 1),
            &series,
        )?;
        artifacts.push(artifact(&format!("paths_svg_x{}", c + 1), path, false));
    }
    write_sidecar(&cfg.out, "rollout", cfg, &artifacts)?;
    println!(
        "wrote {} paths of {} steps (lag {}) to {}",
        cfg.paths,
        n_steps,
        fmt_f64(m.lag()),
        cfg.out
    );
    Ok(())
}

// --------------------------------------------------------------- validate

pub fn cmd_validate(cfg: &ValidateCfg) -> Result<()> {
    let sys = build_system(&cfg.system, &None)?;
    let report = if cfg.self_test {
        let lag = cfg.lag.unwrap_or(0.01);
        let grid = SimGrid::new(cfg.dt, lag);
        let a = truth_ensemble_threaded(
            &sys,
            &cfg.x0,
            cfg.t_end,
            &grid,
            cfg.ens,
            cfg.seed,
            &cfg.checkpoints,
            RESERVOIR_CAP,
            cfg.threads,
        )?;
        let b = truth_ensemble_threaded(
            &sys,
            &cfg.x0,
            cfg.t_end,
            &grid,
            cfg.ens,
            cfg.seed + 1,
            &cfg.checkpoints,
            RESERVOIR_CAP,
            cfg.threads,
        )?;
        build_report(a, b)?
    } else {
        let loaded = model::load(Path::new(cfg.model.as_deref().expect("validated")))?;
        let m = loaded.model;
        if m.dim() != sys.dim_slow() {
            return Err(AppError::Core(CoreError::Shape(format!(
                "model dim {} vs system slow dim {}",
                m.dim(),
                sys.dim_slow()
            ))));
        }
        if let Some(lag) = cfg.lag {
            if (lag - m.lag()).abs() > 1e-9 * m.lag() {
                return Err(AppError::config(format!(
                    "requested lag {lag} differs from the model's lag {}",
                    m.lag()
                )));
            }
        }
        let grid = SimGrid::new(cfg.dt, m.lag());
        let n_steps = grid.lags_until(cfg.t_end)?;
        let truth = truth_ensemble_threaded(
            &sys,
            &cfg.x0,
            cfg.t_end,
            &grid,
            cfg.ens,
            cfg.seed,
            &cfg.checkpoints,
            RESERVOIR_CAP,
            cfg.threads,
        )?;
        let model_stats = model_ensemble_threaded(
            &m,
            &cfg.x0,
            n_steps,
            cfg.ens,
            cfg.seed ^ MODEL_SEED_SALT,
            &cfg.checkpoints,
            RESERVOIR_CAP,
            cfg.threads,
        )?;
        build_report(truth, model_stats)?
    };

    let artifacts = write_validation_outputs(&cfg.out, cfg, &report)?;
    write_sidecar(&cfg.out, "validate", cfg, &artifacts)?;

    for e in &report.ks {
        println!(
            "KS t={} x{} = {}",
            fmt_f64(e.time),
            e.coordinate + 1,
            fmt_f64(e.ks)
        );
    }
    for c in 0..report.dim {
        println!(
            "x{}: max |mean dev| = {} (truth range {}), max |std dev| = {} (truth range {})",
            c + 1,
            fmt_f64(report.max_mean_dev[c]),
            fmt_f64(report.truth_mean_range[c]),
            fmt_f64(report.max_std_dev[c]),
            fmt_f64(report.truth_std_range[c]),
        );
    }

    if cfg.self_test {
        // Both ensembles sample the same law; KS must sit below the 1%
        // critical value.
        let n = cfg.ens as f64;
        let critical = 1.63 * (2.0 / n).sqrt();
        for e in &report.ks {
            if e.ks >= critical {
                return Err(AppError::SelfTest(format!(
                    "KS {} at t={} exceeds critical {critical}",
                    e.ks, e.time
                )));
            }
        }
        println!("self-test passed: all KS below {critical}");
    }
    Ok(())
}

fn write_validation_outputs(
    out: &str,
    cfg: &ValidateCfg,
    report: &ComparisonReport,
) -> Result<Vec<Artifact>> {
    let echo = serde_json::to_value(cfg).map_err(|e| AppError::config(e.to_string()))?;
    let json_path = format!("{out}.report.json");
    comparison_json(Path::new(&json_path), report, &echo)?;
    // The JSON echoes the configuration including output paths, so replay
    // compares the path-free KS CSV instead.
    let mut artifacts = vec![artifact("report_json", &json_path, false)];
    let ks_path = format!("{out}.ks.csv");
    ks_csv(Path::new(&ks_path), report)?;
    artifacts.push(artifact("ks_csv", &ks_path, true));

    let (label_a, label_b) = if cfg.self_test {
        ("truth (seed A)", "truth (seed B)")
    } else {
        ("truth", "model")
    };
    for c in 0..report.dim {
        let coord = format!("x{}", c + 1);
        let csv_path = format!("{out}.{coord}.curves.csv");
        curves_csv(Path::new(&csv_path), report, c)?;
        artifacts.push(artifact(&format!("curves_csv_{coord}"), &csv_path, true));

        let col = |v: &[f64]| -> Vec<f64> {
            v.iter().skip(c).step_by(report.dim).copied().collect()
        };
        let mean_t = col(&report.truth.mean);
        let mean_m = col(&report.model.mean);
        let std_t = col(&report.truth.std);
        let std_m = col(&report.model.std);
        let mean_path = format!("{out}.{coord}.mean.svg");
        svg::line_plot(
            Path::new(&mean_path),
            &format!("ensemble mean, {coord}"),
            "t",
            &format!("mean {coord}"),
            &[
                svg::Series {
                    label: Some(label_a.into()),
                    xs: &report.times,
                    ys: &mean_t,
                    color: svg::COLOR_TRUTH,
                    dashed: false,
                },
                svg::Series {
                    label: Some(label_b.into()),
                    xs: &report.times,
                    ys: &mean_m,
                    color: svg::COLOR_MODEL,
                    dashed: true,
                },
            ],
        )?;
        artifacts.push(artifact(&format!("mean_svg_{coord}"), &mean_path, false));
        let std_path = format!("{out}.{coord}.std.svg");
        svg::line_plot(
            Path::new(&std_path),
            &format!("ensemble STD, {coord}"),
            "t",
            &format!("std {coord}"),
            &[
                svg::Series {
                    label: Some(label_a.into()),
                    xs: &report.times,
                    ys: &std_t,
                    color: svg::COLOR_TRUTH,
                    dashed: false,
                },
                svg::Series {
                    label: Some(label_b.into()),
                    xs: &report.times,
                    ys: &std_m,
                    color: svg::COLOR_MODEL,
                    dashed: true,
                },
            ],
        )?;
        artifacts.push(artifact(&format!("std_svg_{coord}"), &std_path, false));

        for (tc, mc) in report
            .truth
            .checkpoints
            .iter()
            .zip(report.model.checkpoints.iter())
        {
            let h = fd_histogram(&tc.column(c), &mc.column(c));
            let tag = format!("{coord}.t{}", fmt_f64(tc.time));
            let csv_path = format!("{out}.{tag}.hist.csv");
            histogram_csv(Path::new(&csv_path), &h)?;
            artifacts.push(artifact(&format!("hist_csv_{tag}"), &csv_path, true));
            let svg_path = format!("{out}.{tag}.hist.svg");
            svg::histogram_plot(
                Path::new(&svg_path),
                &format!("distribution of {coord} at t = {}", fmt_f64(tc.time)),
                &coord,
                &h,
                label_a,
                label_b,
            )?;
            artifacts.push(artifact(&format!("hist_svg_{tag}"), &svg_path, false));
        }
    }
    Ok(artifacts)
}

// ----------------------------------------------------------------- replay

pub fn cmd_replay(sidecar_path: &str, scratch: Option<String>) -> Result<()> {
    let bytes = read_bytes(Path::new(sidecar_path))?;
    let sidecar: Sidecar = serde_json::from_slice(&bytes)
        .map_err(|e| AppError::format(sidecar_path, e.to_string()))?;

    let scratch_dir = match &scratch {
        Some(s) => PathBuf::from(s),
        None => std::env::temp_dir().join(format!("slowflow-replay-{}", std::process::id())),
    };
    std::fs::create_dir_all(&scratch_dir)
        .map_err(|e| AppError::io(scratch_dir.display().to_string(), e))?;

    // Move the primary output into the scratch dir; every derived artifact
    // name follows from it.
    let remap = |out: &str| -> String {
        let name = Path::new(out)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        scratch_dir.join(name).display().to_string()
    };

    let original_out: String;
    match sidecar.command.as_str() {
        "generate" => {
            let mut cfg: GenerateCfg = serde_json::from_value(sidecar.settings.clone())
                .map_err(|e| AppError::format(sidecar_path, e.to_string()))?;
            original_out = cfg.out.clone();
            cfg.out = remap(&cfg.out);
            cmd_generate(&cfg)?;
        }
        "train" => {
            let mut cfg: TrainCfg = serde_json::from_value(sidecar.settings.clone())
                .map_err(|e| AppError::format(sidecar_path, e.to_string()))?;
            original_out = cfg.out.clone();
            cfg.out = remap(&cfg.out);
            cmd_train(&cfg)?;
        }
        "rollout" => {
            let mut cfg: RolloutCfg = serde_json::from_value(sidecar.settings.clone())
                .map_err(|e| AppError::format(sidecar_path, e.to_string()))?;
            original_out = cfg.out.clone();
            cfg.out = remap(&cfg.out);
            cmd_rollout(&cfg)?;
        }
        "validate" => {
            let mut cfg: ValidateCfg = serde_json::from_value(sidecar.settings.clone())
                .map_err(|e| AppError::format(sidecar_path, e.to_string()))?;
            original_out = cfg.out.clone();
            cfg.out = remap(&cfg.out);
            cmd_validate(&cfg)?;
        }
        other => {
            return Err(AppError::format(
                sidecar_path,
                format!("unknown command {other}"),
            ))
        }
    }

    let mut mismatches = Vec::new();
    let mut compared = 0;
    for a in sidecar.artifacts.iter().filter(|a| a.compare) {
        // The artifact path is derived from the primary out; rebase it.
        let replayed = a.path.replacen(&original_out, &remap(&original_out), 1);
        let orig_bytes = read_bytes(Path::new(&a.path))?;
        let new_bytes = read_bytes(Path::new(&replayed))?;
        compared += 1;
        if orig_bytes == new_bytes {
            println!("replay OK: {} ({})", a.path, a.role);
        } else {
            println!("replay MISMATCH: {} ({})", a.path, a.role);
            mismatches.push(a.path.clone());
        }
    }
    if mismatches.is_empty() {
        std::fs::remove_dir_all(&scratch_dir).ok();
        println!("replay reproduced {compared} artifacts byte-identically");
        Ok(())
    } else {
        eprintln!("replayed artifacts kept in {}", scratch_dir.display());
        Err(AppError::ReplayMismatch(format!(
            "{} of {compared} artifacts differ: {}",
            mismatches.len(),
            mismatches.join(", ")
        )))
    }
}
