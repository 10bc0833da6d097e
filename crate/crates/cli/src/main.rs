use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use redunet_cli::archive::{load_model, Model};
use redunet_cli::config::{ExperimentConfig, Kind};
use redunet_cli::experiments::{evaluate_archive, export_kernels, run_experiment};
use redunet_cli::selftest::run_selftest;
use redunet_cli::{csv, CliError, CliResult};

#[derive(Parser)]
#[command(name = "redunet", version, about = "Forward-constructed rate-reduction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a network and write loss curve, cosine matrices, accuracies and the model archive.
    Construct(ExperimentArgs),
    /// Accuracy of an archived model on the experiment's test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Accuracy of an archived model on the rotated or translated test set.
    AugmentEval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Write the convolution kernels of one layer of an invariant model.
    ExportKernel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Oracle-equivalence checks and the operator-construction benchmark.
    Selftest {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment kind when no config file is given.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    energy: Option<String>,
    /// Any other config key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ExperimentArgs {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut config = match (&self.config, &self.kind) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let c = ExperimentConfig::parse(&text)?;
                if let Some(k) = &self.kind {
                    c.kind.name().eq(k).then_some(()).ok_or_else(|| {
                        CliError::Config(format!("--kind {k} conflicts with config kind {}", c.kind))
                    })?;
                }
                c
            }
            (None, Some(k)) => ExperimentConfig::defaults(k.parse::<Kind>()?),
            (None, None) => return Err(CliError::Config("give --config or --kind".into())),
        };
        let flags = [
            ("seed", &self.seed),
            ("out", &self.out),
            ("layers", &self.layers),
            ("eta", &self.eta),
            ("eps", &self.eps),
            ("lambda", &self.lambda),
            ("channels", &self.channels),
            ("stride", &self.stride),
            ("energy", &self.energy),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            config.set(k.trim(), v.trim())?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("REDUNET_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("REDUNET_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn print_metrics(metrics: &[(String, f64)]) {
    for (name, v) in metrics {
        println!("{name} = {v}");
    }
}

fn evaluate(model_path: &PathBuf, exp: &ExperimentArgs, augmented: bool) -> CliResult<()> {
    let config = exp.resolve()?;
    let model = load_model(model_path)?;
    let metrics = evaluate_archive(&config, &model, augmented)?;
    std::fs::create_dir_all(&config.out)?;
    let name = if augmented { "augment_eval.csv" } else { "eval.csv" };
    csv::write_metrics(&config.out.join(name), &metrics)?;
    print_metrics(&metrics);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Construct(exp) => {
            let config = exp.resolve()?;
            info!("running {} into {}", config.kind, config.out.display());
            let report = run_experiment(&config)?;
            print_metrics(&report.metrics);
        }
        Command::Eval { model, exp } => evaluate(&model, &exp, false)?,
        Command::AugmentEval { model, exp } => evaluate(&model, &exp, true)?,
        Command::ExportKernel { model, layer, out } => {
            let Model::Spectral(m) = load_model(&model)? else {
                return Err(CliError::Config("kernels exist only for shift-invariant models".into()));
            };
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("kernel_layer{layer}.csv"));
            export_kernels(&m, layer, &path)?;
            println!("{}", path.display());
        }
        Command::Selftest { out } => {
            let (checks, bench) = run_selftest(&out)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: max error {:.3e}", if c.passed() { "PASS" } else { "FAIL" }, c.name, c.error);
                ok &= c.passed();
            }
            println!(
                "benchmark: per-frequency {:.3e} s, dense {:.3e} s, speedup {:.1}x",
                bench.spectral_secs,
                bench.dense_secs,
                bench.speedup()
            );
            if !ok {
                return Err(CliError::Numerical("oracle checks failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
