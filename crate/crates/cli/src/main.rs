use clap::{Args, Parser, Subcommand};
use slowflow::commands;
use slowflow::config::{
    load_toml, GenerateCfg, GenerateFile, RolloutCfg, RolloutFile, TrainCfg, TrainFile,
    TrainFlags, ValidateCfg, ValidateFile, ValidateFlags,
};
use slowflow::{exit_code, Result};

/// Generative one-step models for the slow variables of multiscale SDEs:
/// generate burst training data from the benchmark systems, fit the
/// conditional flow by maximum likelihood, roll it out, and validate
/// against ground-truth ensembles.
#[derive(Parser)]
#[command(name = "slowflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate short bursts and assemble the pairwise training set.
    Generate(GenerateArgs),
    /// Fit the conditional flow on a dataset by maximum likelihood.
    Train(TrainArgs),
    /// Iterate a trained model from a start state and write sample paths.
    Rollout(RolloutArgs),
    /// Compare model rollouts against ground-truth ensembles.
    Validate(ValidateArgs),
    /// Re-execute a provenance sidecar and byte-compare the outputs.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<String>,
    /// Benchmark system (ex1..ex4, triad, or full names like skew_product).
    #[arg(long)]
    system: Option<String>,
    /// Number of training pairs M.
    #[arg(long)]
    pairs: Option<usize>,
    /// Burst horizon; each trajectory contributes T/lag pairs.
    #[arg(long = "T")]
    t_burst: Option<f64>,
    /// Fine integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Recording lag between pair members.
    #[arg(long)]
    lag: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip per-coordinate standardization.
    #[arg(long)]
    raw: bool,
    /// Override the IC sampling box, e.g. "-1.5:2,-1:1.6".
    #[arg(long)]
    domain: Option<String>,
    /// Also write a CSV mirror of the dataset.
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<String>,
    /// Dataset file from `generate`.
    #[arg(long)]
    data: Option<String>,
    /// Optimizer iterations.
    #[arg(long)]
    iters: Option<u64>,
    /// Batch size (sampled with replacement).
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flow depth (affine autoregressive layers).
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden widths of each conditioner network.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Conditioner inputs: full_maf or hypernet.
    #[arg(long)]
    mode: Option<String>,
    /// Checkpoint cadence for the report and validation loss.
    #[arg(long)]
    report_every: Option<u64>,
    /// Fraction of trajectories held out for validation.
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Best checkpoint path; also writes <out>.final and <out>.report.csv.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct RolloutArgs {
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Start state, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Number of steps; alternatively give --T.
    #[arg(long)]
    steps: Option<usize>,
    /// Horizon in time units (a whole number of lags).
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Number of independent sample paths.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: Option<String>,
    /// Trained model; omit with --self-test.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Comparison horizon.
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Ensemble size per side.
    #[arg(long)]
    ens: Option<usize>,
    /// Distribution checkpoint times, comma-separated.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<f64>>,
    /// Fine step for the ground-truth integrator.
    #[arg(long)]
    dt: Option<f64>,
    /// Lag override (self-test only; models carry their own).
    #[arg(long)]
    lag: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensemble generation (results are identical for
    /// any thread count).
    #[arg(long)]
    threads: Option<usize>,
    /// Compare two ground-truth ensembles with different seeds instead of a
    /// model; fails if the KS distance exceeds the 1% critical value.
    #[arg(long)]
    self_test: bool,
    /// Output prefix for the report, CSVs, and SVGs.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Provenance sidecar written by a previous run.
    #[arg(long)]
    sidecar: String,
    /// Scratch directory for the replayed outputs (default: temp dir,
    /// removed when everything matches).
    #[arg(long)]
    out: Option<String>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let file: GenerateFile = load_toml(a.config.as_deref())?;
            let cfg = GenerateCfg::resolve(
                file, a.system, a.pairs, a.t_burst, a.dt, a.lag, a.seed, a.raw, a.domain, a.csv,
                a.out,
            )?;
            commands::cmd_generate(&cfg)
        }
        Command::Train(a) => {
            let file: TrainFile = load_toml(a.config.as_deref())?;
            let cfg = TrainCfg::resolve(
                file,
                TrainFlags {
                    data: a.data,
                    out: a.out,
                    iters: a.iters,
                    batch: a.batch,
                    seed: a.seed,
                    layers: a.layers,
                    hidden: a.hidden,
                    mode: a.mode,
                    report_every: a.report_every,
                    val_fraction: a.val_fraction,
                },
            )?;
            commands::cmd_train(&cfg)
        }
        Command::Rollout(a) => {
            let file: RolloutFile = load_toml(a.config.as_deref())?;
            let cfg = RolloutCfg::resolve(
                file, a.model, a.x0, a.steps, a.t_end, a.paths, a.seed, a.out,
            )?;
            commands::cmd_rollout(&cfg)
        }
        Command::Validate(a) => {
            let file: ValidateFile = load_toml(a.config.as_deref())?;
            let cfg = ValidateCfg::resolve(
                file,
                ValidateFlags {
                    model: a.model,
                    system: a.system,
                    x0: a.x0,
                    t_end: a.t_end,
                    ens: a.ens,
                    checkpoints: a.checkpoints,
                    dt: a.dt,
                    lag: a.lag,
                    seed: a.seed,
                    threads: a.threads,
                    self_test: a.self_test,
                    out: a.out,
                },
            )?;
            commands::cmd_validate(&cfg)
        }
        Command::Replay(a) => commands::cmd_replay(&a.sidecar, a.out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
