use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use weakparse::commands::{self, CliError, ConfigLayer, TrainJob};
use weakparse_core::GrammarMode;

#[derive(Parser)]
#[command(name = "weakparse", version, about = "Semantic parsing of arithmetic utterances from denotations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn mode(self) -> GrammarMode {
        match self {
            OnOff::On => GrammarMode::WithBrackets,
            OnOff::Off => GrammarMode::NoBrackets,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            OnOff::On => "on",
            OnOff::Off => "off",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SupervisionArg {
    Gold,
    Denotation,
}

#[derive(Subcommand)]
enum Command {
    /// Sample distinct utterances and write train/test files.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8000)]
        total: usize,
        #[arg(long, default_value_t = 6000)]
        train: usize,
        #[arg(long, default_value = "train.tsv")]
        train_out: PathBuf,
        #[arg(long, default_value = "test.tsv")]
        test_out: PathBuf,
    },
    /// Precompute every consistent logical form per (size, denotation).
    BuildIndex {
        #[arg(long, value_enum)]
        brackets: OnOff,
        #[arg(long, default_value_t = 4)]
        max_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model with gold or denotation supervision.
    Train {
        /// TOML file with any of the settings below; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        supervision: Option<SupervisionArg>,
        #[arg(long, value_enum)]
        brackets: Option<OnOff>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Stages as `len:epochs,...`, e.g. `3:20,5:20,7:160`; empty for none.
        #[arg(long)]
        curriculum: Option<String>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        base_cases: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use only the first N training records.
        #[arg(long)]
        limit_train: Option<usize>,
        /// Use only the first N test records.
        #[arg(long)]
        limit_test: Option<usize>,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Denotation accuracy of a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Per-epoch CSV of metrics files, plus a summary table for several runs.
    Report {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::GenData { seed, total, train, train_out, test_out } => {
            commands::gen_data(seed, total, train, &train_out, &test_out)
        }
        Command::BuildIndex { brackets, max_size, out } => commands::build_index(brackets.mode(), max_size, &out),
        Command::Train {
            config,
            supervision,
            brackets,
            epochs,
            seed,
            curriculum,
            train,
            test,
            index,
            base_cases,
            metrics,
            checkpoint,
            limit_train,
            limit_test,
            quiet,
        } => {
            let flags = ConfigLayer {
                supervision: supervision.map(|s| match s {
                    SupervisionArg::Gold => "gold".into(),
                    SupervisionArg::Denotation => "denotation".into(),
                }),
                brackets: brackets.map(|b| b.as_str().into()),
                epochs,
                seed,
                curriculum,
                ..ConfigLayer::default()
            };
            let file = match &config {
                Some(path) => ConfigLayer::from_toml(path)?,
                None => ConfigLayer::default(),
            };
            let job = TrainJob {
                config: flags.over(file).resolve()?,
                train,
                test,
                index,
                base_cases,
                metrics,
                checkpoint,
                limit_train,
                limit_test,
            };
            let outcome = commands::train(&job, |m| {
                if !quiet {
                    let acc = m.test_accuracy.map_or("-".into(), |a| format!("{:.4}", a));
                    eprintln!(
                        "epoch {:>3}  loss {:>9.4}  correct-forms {:.3}  accuracy {acc}  skipped {}",
                        m.epoch, m.mean_loss, m.returned_correct_fraction, m.skipped
                    );
                }
            })?;
            Ok(format!("final denotation accuracy {:.4}", outcome.final_accuracy))
        }
        Command::Eval { checkpoint, test } => {
            let (acc, n) = commands::eval(&checkpoint, &test)?;
            Ok(format!("denotation accuracy {acc:.4} on {n} examples"))
        }
        Command::Report { metrics, csv } => commands::report(&metrics, csv.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{}", out.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
