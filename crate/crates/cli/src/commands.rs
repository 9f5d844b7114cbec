//! Subcommand implementations, independent of argument parsing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use weakparse_core::dataset::{self, Record};
use weakparse_core::index::DenotationTable;
use weakparse_core::trainer::{self, Curriculum, EpochMetrics, Supervision, TrainConfig, Trainer};
use weakparse_core::{CandidateIndex, GrammarMode};

use crate::formats::{self, Checkpoint, FormatError, MetricsFile, MetricsRow, MetricsWriter, RunInfo};

/// Exit status 1 for bad input or configuration, 2 for I/O failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Format(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

pub fn gen_data(seed: u64, total: usize, train: usize, train_out: &Path, test_out: &Path) -> Result<String, CliError> {
    let data = dataset::generate(seed, total, train).map_err(invalid)?;
    formats::write_dataset(train_out, &data.train)?;
    formats::write_dataset(test_out, &data.test)?;
    Ok(format!("wrote {} training and {} test records", data.train.len(), data.test.len()))
}

/// Indexes every size from 2 operands up to `max_size`.
pub fn build_index(mode: GrammarMode, max_size: usize, out: &Path) -> Result<String, CliError> {
    if !(2..=4).contains(&max_size) {
        return Err(invalid(format!("--max-size must be between 2 and 4, got {max_size}")));
    }
    let table = DenotationTable::build(max_size);
    let sizes: Vec<usize> = (2..=max_size).collect();
    let index = CandidateIndex::build(&table, &sizes, mode);
    formats::write_index(out, &index)?;
    Ok(format!("wrote {} (size, denotation) records", index.records().count()))
}

/// Training settings as read from a TOML file or collected from flags.
/// Every field is optional; flags override the file, the file overrides
/// the defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub supervision: Option<String>,
    pub brackets: Option<String>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub curriculum: Option<String>,
    pub dropout: Option<f64>,
    pub init_bound: Option<f64>,
    pub learning_rate: Option<f64>,
    pub smoothing: Option<f64>,
    pub epsilon: Option<f64>,
}

impl ConfigLayer {
    pub fn from_toml(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| FormatError::Io { path: path.to_path_buf(), source })?;
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    /// `self` wins over `lower`.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            supervision: self.supervision.or(lower.supervision),
            brackets: self.brackets.or(lower.brackets),
            epochs: self.epochs.or(lower.epochs),
            seed: self.seed.or(lower.seed),
            curriculum: self.curriculum.or(lower.curriculum),
            dropout: self.dropout.or(lower.dropout),
            init_bound: self.init_bound.or(lower.init_bound),
            learning_rate: self.learning_rate.or(lower.learning_rate),
            smoothing: self.smoothing.or(lower.smoothing),
            epsilon: self.epsilon.or(lower.epsilon),
        }
    }

    pub fn resolve(self) -> Result<TrainConfig, CliError> {
        let mut cfg = TrainConfig::default();
        if let Some(s) = self.supervision {
            cfg.supervision = s.parse().map_err(invalid)?;
        }
        if let Some(b) = self.brackets {
            cfg.grammar = formats::parse_brackets_flag(&b)
                .ok_or_else(|| invalid(format!("brackets must be `on` or `off`, got `{b}`")))?;
        }
        if let Some(s) = self.curriculum {
            cfg.curriculum = s.parse::<Curriculum>().map_err(invalid)?;
        }
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.dropout = self.dropout.unwrap_or(cfg.dropout);
        cfg.init_bound = self.init_bound.unwrap_or(cfg.init_bound);
        cfg.learning_rate = self.learning_rate.unwrap_or(cfg.learning_rate);
        cfg.smoothing = self.smoothing.unwrap_or(cfg.smoothing);
        cfg.epsilon = self.epsilon.unwrap_or(cfg.epsilon);
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct TrainJob {
    pub config: TrainConfig,
    pub train: PathBuf,
    pub test: PathBuf,
    pub index: Option<PathBuf>,
    pub base_cases: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub limit_train: Option<usize>,
    pub limit_test: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochMetrics>,
    pub final_accuracy: f64,
}

fn load_split(path: &Path, limit: Option<usize>) -> Result<Vec<Record>, CliError> {
    let mut records = formats::read_dataset(path)?;
    if let Some(n) = limit {
        records.truncate(n);
    }
    Ok(records)
}

/// Loads the inputs, trains, streams metrics and saves the final model.
pub fn train(job: &TrainJob, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome, CliError> {
    let cfg = &job.config;
    let train = load_split(&job.train, job.limit_train)?;
    let test = load_split(&job.test, job.limit_test)?;

    let (index, base_cases) = match cfg.supervision {
        Supervision::Gold => (None, None),
        Supervision::Denotation => {
            let index_path = job.index.as_ref().ok_or_else(|| invalid("denotation supervision needs --index"))?;
            let base_path =
                job.base_cases.as_ref().ok_or_else(|| invalid("denotation supervision needs --base-cases"))?;
            let index = formats::read_index(index_path)?;
            if index.mode() != cfg.grammar {
                return Err(invalid(format!(
                    "{} was built with brackets={}, training uses brackets={}",
                    index_path.display(),
                    formats::brackets_flag(index.mode()),
                    formats::brackets_flag(cfg.grammar)
                )));
            }
            if let Some(r) = train.iter().find(|r| !index.sizes().any(|s| s == r.utterance.operand_count())) {
                return Err(invalid(format!(
                    "{} has no entries for {}-operand utterances such as `{}`",
                    index_path.display(),
                    r.utterance.operand_count(),
                    r.utterance
                )));
            }
            (Some(index), Some(formats::read_base_cases(base_path, cfg.grammar)?))
        }
    };

    let mut metrics = match &job.metrics {
        Some(path) => Some(MetricsWriter::create(
            path,
            RunInfo { supervision: cfg.supervision, grammar: cfg.grammar, seed: cfg.seed },
        )?),
        None => None,
    };
    let mut trainer = Trainer::new(cfg.clone(), &train, &test, index.as_ref(), base_cases.as_ref()).map_err(invalid)?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    while trainer.epoch() < cfg.epochs {
        let m = trainer.train_epoch().map_err(invalid)?;
        if let Some(w) = metrics.as_mut() {
            w.append(&MetricsRow::from(&m))?;
        }
        on_epoch(&m);
        epochs.push(m);
    }
    let final_accuracy = match epochs.last().and_then(|m| m.test_accuracy) {
        Some(a) => a,
        None => trainer::evaluate(trainer.test_examples(), trainer.params(), cfg.grammar),
    };
    if let Some(path) = &job.checkpoint {
        let ckpt = Checkpoint { seed: cfg.seed, grammar: cfg.grammar, params: trainer.into_params() };
        formats::write_checkpoint(path, &ckpt)?;
    }
    Ok(TrainOutcome { epochs, final_accuracy })
}

/// Denotation accuracy of a saved model on a dataset file.
pub fn eval(checkpoint: &Path, test: &Path) -> Result<(f64, usize), CliError> {
    let ckpt = formats::read_checkpoint(checkpoint, None)?;
    let records = formats::read_dataset(test)?;
    let examples: Vec<_> = records.iter().map(|r| trainer::Example::new(r, ckpt.grammar)).collect();
    Ok((trainer::evaluate(&examples, &ckpt.params, ckpt.grammar), examples.len()))
}

/// Per-epoch CSV of one or more metrics files. With several files each row
/// is prefixed by the run it came from.
pub fn metrics_csv(files: &[MetricsFile]) -> String {
    let tagged = files.len() > 1;
    let mut out = String::new();
    if tagged {
        out.push_str("supervision,brackets,seed,");
    }
    out.push_str("epoch,mean_loss,returned_correct_fraction,test_accuracy,skipped\n");
    for file in files {
        let prefix = match (tagged, file.info) {
            (false, _) => String::new(),
            (true, Some(i)) => format!("{},{},{},", i.supervision, formats::brackets_flag(i.grammar), i.seed),
            (true, None) => ",,,".into(),
        };
        for row in &file.rows {
            let acc = row.test_accuracy.map_or(String::new(), |a| a.to_string());
            writeln!(
                out,
                "{prefix}{},{},{},{acc},{}",
                row.epoch, row.mean_loss, row.returned_correct_fraction, row.skipped
            )
            .unwrap();
        }
    }
    out
}

/// Final test accuracy of a run: the last evaluated epoch.
pub fn final_accuracy(file: &MetricsFile) -> Option<f64> {
    file.rows.iter().rev().find_map(|r| r.test_accuracy)
}

/// Final accuracies laid out as methods by grammar. Cells with several
/// runs list every seed.
pub fn summary_table(files: &[MetricsFile]) -> String {
    let mut cells: BTreeMap<(bool, bool), Vec<(u64, f64)>> = BTreeMap::new();
    for f in files {
        if let (Some(info), Some(acc)) = (f.info, final_accuracy(f)) {
            let key = (info.supervision == Supervision::Denotation, info.grammar.with_brackets());
            cells.entry(key).or_default().push((info.seed, acc));
        }
    }
    let cell = |den: bool, brackets: bool| -> String {
        match cells.get(&(den, brackets)) {
            None => "-".into(),
            Some(runs) if runs.len() == 1 => format!("{:.1}%", 100.0 * runs[0].1),
            Some(runs) => runs
                .iter()
                .map(|(seed, a)| format!("{:.1}% (seed {seed})", 100.0 * a))
                .collect::<Vec<_>>()
                .join(", "),
        }
    };
    let rows = [
        ("Train with logical form", cell(false, false), cell(false, true)),
        ("Train with denotation", cell(true, false), cell(true, true)),
    ];
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Method".len());
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max("without brackets".len());
    let w2 = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max("with brackets".len());
    let mut lines = vec![
        format!("{:<w0$} | {:<w1$} | {:<w2$}", "Method", "without brackets", "with brackets"),
        format!("{}-+-{}-+-{}", "-".repeat(w0), "-".repeat(w1), "-".repeat(w2)),
    ];
    lines.extend(rows.iter().map(|(name, a, b)| format!("{name:<w0$} | {a:<w1$} | {b:<w2$}")));
    lines.iter().map(|l| format!("{}\n", l.trim_end())).collect()
}

pub fn report(paths: &[PathBuf], csv_out: Option<&Path>) -> Result<String, CliError> {
    if paths.is_empty() {
        return Err(invalid("report needs at least one metrics file"));
    }
    let files = paths.iter().map(|p| formats::read_metrics(p)).collect::<Result<Vec<_>, _>>()?;
    let csv = metrics_csv(&files);
    let mut out = String::new();
    match csv_out {
        Some(path) => std::fs::write(path, &csv)
            .map_err(|source| FormatError::Io { path: path.to_path_buf(), source })?,
        None => out.push_str(&csv),
    }
    if files.len() > 1 {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&summary_table(&files));
    }
    Ok(out)
}
