use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use arn_semcom::adversary::ClassifierKind;
use arn_semcom::experiment::gradsuite;
use arn_semcom::experiment::{AttackMode, Experiment, ExperimentConfig, MetricsRecord};
use arn_semcom::Result;

/// Security-aware semantic communication experiments.
#[derive(Debug, Parser)]
#[command(name = "arn-semcom", version)]
struct Cli {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; replaces every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for checkpoints, metrics and plots.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the base semantic link and save base.ckpt.
    TrainBase,
    /// Train Eve on intercepted codewords and save eve.ckpt.
    TrainEve,
    /// Train the attacker's substitute classifier and save substitute.ckpt.
    TrainSubstitute,
    /// Train the Alice/Bob modules and save secure_<mode>.ckpt.
    TrainSecure {
        /// Overrides the configured attack mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<AttackMode>,
        #[arg(long)]
        train_missing: bool,
    },
    /// Evaluate every scenario at the configured SNR.
    Eval {
        #[arg(long)]
        train_missing: bool,
    },
    /// Evaluate every scenario over the SNR grid (metrics.csv).
    SweepSnr {
        #[arg(long)]
        train_missing: bool,
    },
    /// Train and evaluate one module pair per attack budget (metrics_psr.csv).
    SweepPsr {
        #[arg(long)]
        train_missing: bool,
    },
    /// Evaluate FGSM at every sweep budget (metrics_fgsm.csv).
    FgsmBaseline {
        #[arg(long)]
        train_missing: bool,
    },
    /// Finite-difference check of every gradient path.
    Gradcheck,
    /// Print the effective configuration.
    ShowConfig,
}

fn parse_mode(s: &str) -> std::result::Result<AttackMode, String> {
    match s {
        "white_box" => Ok(AttackMode::WhiteBox),
        "black_box" => Ok(AttackMode::BlackBox),
        other => Err(format!("unknown mode {other:?} (expected white_box or black_box)")),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Ok(match seed {
        Some(s) => cfg.with_master_seed(s),
        None => cfg,
    })
}

fn print_records(records: &[MetricsRecord]) {
    for r in records {
        let psr = r.psr_db.map_or_else(|| "-".to_string(), |p| format!("{p:.2}"));
        println!(
            "{:<14} snr {:>5.1} dB  psr {:>7} dB  mse {:.5}  eve accuracy {:.4}",
            r.scenario.as_str(),
            r.snr_db,
            psr,
            r.mse,
            r.eve_accuracy
        );
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = load_config(cli.config.as_deref(), cli.seed)?;
    let open = |cfg: ExperimentConfig, train_missing: bool| -> Result<Experiment> {
        let mut ex = Experiment::new(cfg, &cli.out)?;
        ex.train_missing = train_missing;
        Ok(ex)
    };
    match cli.command {
        Command::ShowConfig => print!("{}", cfg.to_toml_string()),
        Command::Gradcheck => {
            let cases = gradsuite::gradient_suite(cfg.seeds.init)?;
            for c in &cases {
                println!("{:<32} {:>7} coords  max rel error {:.3e}", c.name, c.coords, c.max_rel_error);
            }
            let worst = gradsuite::max_error(&cases);
            println!("max relative error {worst:.3e}");
            return Ok(worst < gradsuite::TOLERANCE);
        }
        Command::TrainBase => {
            let ex = open(cfg, false)?;
            ex.train_base()?;
        }
        Command::TrainEve | Command::TrainSubstitute => {
            let kind = match cli.command {
                Command::TrainEve => ClassifierKind::Eve,
                _ => ClassifierKind::Substitute,
            };
            let ex = open(cfg, false)?;
            let base = ex.base()?;
            ex.train_classifier(kind, &base)?;
        }
        Command::TrainSecure { mode, train_missing } => {
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let ex = open(cfg, train_missing)?;
            let base = ex.base()?;
            let (_, history) = ex.train_secure(ex.cfg.mode, &base)?;
            println!(
                "trained {} epochs (converged: {}), final smoothed loss {:.6}",
                history.epochs,
                history.converged,
                history.history.smoothed_last(100).unwrap_or(f64::NAN)
            );
        }
        Command::Eval { train_missing } => print_records(&open(cfg, train_missing)?.eval()?),
        Command::SweepSnr { train_missing } => print_records(&open(cfg, train_missing)?.sweep_snr()?),
        Command::SweepPsr { train_missing } => print_records(&open(cfg, train_missing)?.sweep_psr()?),
        Command::FgsmBaseline { train_missing } => print_records(&open(cfg, train_missing)?.fgsm_baseline()?),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
