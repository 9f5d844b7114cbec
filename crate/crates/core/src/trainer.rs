//! Gold and denotation supervised training, curriculum and evaluation.
//!
//! With denotation supervision the logical form is latent. For every
//! example the trainer looks up all forms of the right size with the right
//! value, keeps those most similar to the nearest base case, and lets the
//! current model pick the one it finds most probable. That pick is the
//! training target for this step, so earlier wrong picks can be revised as
//! the model improves.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::arith::{Denotation, GrammarMode, LogicalForm, Utterance, TARGET_LEN};
use crate::dataset::Record;
use crate::filter::{filter_candidates, BaseCaseSet};
use crate::index::{CandidateIndex, IndexError};
use crate::nn::model::{self, Dropout, ModelError};
use crate::nn::params::{Dims, ModelParams};
use crate::nn::vocab::{decode_target, encode_source, encode_target};
use crate::nn::RmsProp;
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrainError {
    #[error("no logical form of this size executes to the denotation")]
    NoCandidates,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    Gold,
    Denotation,
}

impl FromStr for Supervision {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gold" => Ok(Supervision::Gold),
            "denotation" => Ok(Supervision::Denotation),
            _ => Err(TrainError::Config(alloc::format!("unknown supervision `{s}`"))),
        }
    }
}

impl fmt::Display for Supervision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Supervision::Gold => "gold",
            Supervision::Denotation => "denotation",
        })
    }
}

/// `epochs` epochs admitting utterances of at most `max_len` words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub max_len: usize,
    pub epochs: usize,
}

/// Piecewise-constant schedule from short to long utterances. Epochs past
/// the last stage keep its length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Curriculum {
    pub stages: Vec<Stage>,
}

impl Default for Curriculum {
    fn default() -> Self {
        Curriculum {
            stages: alloc::vec![
                Stage { max_len: 3, epochs: 20 },
                Stage { max_len: 5, epochs: 20 },
                Stage { max_len: 7, epochs: 160 },
            ],
        }
    }
}

impl Curriculum {
    /// No staging: every length from the first epoch.
    pub fn flat() -> Self {
        Curriculum { stages: Vec::new() }
    }

    /// Once the stages run out every length is admitted.
    pub fn max_len(&self, epoch: usize) -> usize {
        let mut start = 0;
        for stage in &self.stages {
            if epoch < start + stage.epochs {
                return stage.max_len;
            }
            start += stage.epochs;
        }
        7
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    pub fn validate(&self, epochs: usize) -> Result<(), TrainError> {
        if self.stages.iter().any(|s| !matches!(s.max_len, 3 | 5 | 7)) {
            return Err(TrainError::Config("curriculum lengths must be 3, 5 or 7".into()));
        }
        if self.stages.windows(2).any(|w| w[1].max_len < w[0].max_len) {
            return Err(TrainError::Config("curriculum lengths must not decrease".into()));
        }
        if self.total_epochs() > epochs {
            return Err(TrainError::Config(alloc::format!(
                "curriculum spans {} epochs but only {epochs} are scheduled",
                self.total_epochs()
            )));
        }
        Ok(())
    }
}

impl FromStr for Curriculum {
    type Err = TrainError;

    /// `"3:20,5:20,7:160"`; an empty string means no staging.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TrainError::Config(alloc::format!("bad curriculum `{s}`, expected len:epochs,..."));
        let stages = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|part| {
                let (len, epochs) = part.split_once(':').ok_or_else(bad)?;
                Ok(Stage {
                    max_len: len.trim().parse().map_err(|_| bad())?,
                    epochs: epochs.trim().parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        Ok(Curriculum { stages })
    }
}

impl fmt::Display for Curriculum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", s.max_len, s.epochs)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub supervision: Supervision,
    pub grammar: GrammarMode,
    pub epochs: usize,
    pub seed: u64,
    pub curriculum: Curriculum,
    pub dims: Dims,
    pub dropout: f64,
    pub init_bound: f64,
    pub learning_rate: f64,
    pub smoothing: f64,
    pub epsilon: f64,
    /// Evaluate on the test split after every epoch (otherwise only after
    /// the last one).
    pub eval_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            supervision: Supervision::Denotation,
            grammar: GrammarMode::NoBrackets,
            epochs: 200,
            seed: 0,
            curriculum: Curriculum::default(),
            dims: Dims::default(),
            dropout: 0.3,
            init_bound: 0.05,
            learning_rate: RmsProp::LEARNING_RATE,
            smoothing: RmsProp::SMOOTHING,
            epsilon: RmsProp::EPSILON,
            eval_every_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.curriculum.validate(self.epochs)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::Config("dropout must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && (0.0..1.0).contains(&self.smoothing) && self.epsilon > 0.0) {
            return Err(TrainError::Config("invalid optimizer hyperparameters".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Share of trained targets equal to the gold form.
    pub returned_correct_fraction: f64,
    /// `None` when the test split was not evaluated this epoch.
    pub test_accuracy: Option<f64>,
    /// Examples dropped because no candidate survived.
    pub skipped: usize,
    pub trained: usize,
    /// Trained targets that do not execute to their example's denotation.
    pub inconsistent_targets: usize,
}

/// A training or test example in one grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub utterance: Utterance,
    pub source: Vec<usize>,
    pub denotation: Denotation,
    /// Kept for metrics; never a target under denotation supervision.
    pub gold: LogicalForm,
}

impl Example {
    pub fn new(record: &Record, mode: GrammarMode) -> Self {
        Example {
            source: encode_source(&record.utterance).to_vec(),
            utterance: record.utterance.clone(),
            denotation: record.denotation,
            gold: record.gold(mode).clone(),
        }
    }

    pub fn content_len(&self) -> usize {
        self.utterance.words().len()
    }
}

/// The filtered candidate set for one utterance: all consistent forms of
/// its size, cut to those sharing the most symbols with the nearest base
/// case's form.
pub fn filtered_candidates(
    utterance: &Utterance,
    denotation: Denotation,
    index: &CandidateIndex,
    base_cases: &BaseCaseSet,
) -> Result<Vec<LogicalForm>, TrainError> {
    let omega = index.candidates(denotation, utterance.operand_count())?;
    if omega.is_empty() {
        return Err(TrainError::NoCandidates);
    }
    let base = base_cases.select(utterance);
    Ok(filter_candidates(omega, &base.logical_form))
}

/// Picks the latent logical form to train on for `(utterance, denotation)`.
pub fn infer_training_form(
    utterance: &Utterance,
    denotation: Denotation,
    index: &CandidateIndex,
    base_cases: &BaseCaseSet,
    params: &ModelParams,
) -> Result<LogicalForm, TrainError> {
    let mut gamma = filtered_candidates(utterance, denotation, index, base_cases)?;
    let ids: Vec<Vec<usize>> = gamma.iter().map(encode_target).collect();
    let pick = crate::nn::score_candidates(params, &encode_source(utterance), &ids)?;
    Ok(gamma.swap_remove(pick))
}

/// Greedy-decodes `example` and checks the executed value.
pub fn decodes_correctly(params: &ModelParams, example: &Example, grammar: GrammarMode) -> bool {
    match model::greedy_decode(params, &example.source, TARGET_LEN) {
        Ok(ids) => decode_target(&ids).execute(grammar) == Ok(example.denotation),
        Err(_) => false,
    }
}

/// Share of examples whose decoded form executes to the gold denotation.
/// Malformed decodes and division by zero count as wrong.
pub fn evaluate(examples: &[Example], params: &ModelParams, grammar: GrammarMode) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let correct = examples.iter().filter(|e| decodes_correctly(params, e, grammar)).count();
    correct as f64 / examples.len() as f64
}

struct Candidates {
    forms: Vec<LogicalForm>,
    ids: Vec<Vec<usize>>,
}

/// Training state: parameters, optimizer and random streams.
pub struct Trainer<'a> {
    config: TrainConfig,
    params: ModelParams,
    optimizer: RmsProp,
    train: Vec<Example>,
    test: Vec<Example>,
    index: Option<&'a CandidateIndex>,
    base_cases: Option<&'a BaseCaseSet>,
    gamma: Vec<Option<Result<Candidates, TrainError>>>,
    shuffle_rng: Rng,
    dropout_rng: Rng,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    /// `index` and `base_cases` are required under denotation supervision
    /// and must match the configured grammar.
    pub fn new(
        config: TrainConfig,
        train: &[Record],
        test: &[Record],
        index: Option<&'a CandidateIndex>,
        base_cases: Option<&'a BaseCaseSet>,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if config.supervision == Supervision::Denotation {
            let (Some(index), Some(base)) = (index, base_cases) else {
                return Err(TrainError::Config("denotation supervision needs an index and base cases".into()));
            };
            if index.mode() != config.grammar || base.mode() != config.grammar {
                return Err(TrainError::Config("index or base cases use the other grammar".into()));
            }
        }
        let params = ModelParams::init_uniform(config.dims, config.init_bound, &mut stream(config.seed, Stream::Init));
        let optimizer = RmsProp::with_hyper(&params, config.learning_rate, config.smoothing, config.epsilon);
        let mode = config.grammar;
        Ok(Trainer {
            gamma: (0..train.len()).map(|_| None).collect(),
            train: train.iter().map(|r| Example::new(r, mode)).collect(),
            test: test.iter().map(|r| Example::new(r, mode)).collect(),
            shuffle_rng: stream(config.seed, Stream::Shuffle),
            dropout_rng: stream(config.seed, Stream::Dropout),
            config,
            params,
            optimizer,
            index,
            base_cases,
            epoch: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn test_examples(&self) -> &[Example] {
        &self.test
    }

    /// The filtered set does not depend on the model, so it is computed
    /// once per example.
    fn fill_candidates(&mut self, i: usize) {
        if self.gamma[i].is_none() {
            let ex = &self.train[i];
            let (index, base) = (self.index.expect("checked"), self.base_cases.expect("checked"));
            let entry = filtered_candidates(&ex.utterance, ex.denotation, index, base).map(|forms| Candidates {
                ids: forms.iter().map(encode_target).collect(),
                forms,
            });
            self.gamma[i] = Some(entry);
        }
    }

    /// One pass over the examples admitted by the curriculum, in seeded
    /// random order, with one update per example.
    pub fn train_epoch(&mut self) -> Result<EpochMetrics, TrainError> {
        let max_len = self.config.curriculum.max_len(self.epoch);
        let mut order: Vec<usize> = (0..self.train.len())
            .filter(|&i| self.train[i].content_len() <= max_len)
            .collect();
        order.shuffle(&mut self.shuffle_rng);

        let mode = self.config.grammar;
        let mut metrics = EpochMetrics {
            epoch: self.epoch,
            mean_loss: 0.0,
            returned_correct_fraction: 0.0,
            test_accuracy: None,
            skipped: 0,
            trained: 0,
            inconsistent_targets: 0,
        };
        let mut total_loss = 0.0;
        let mut correct = 0usize;

        for i in order {
            let target: LogicalForm = match self.config.supervision {
                Supervision::Gold => self.train[i].gold.clone(),
                Supervision::Denotation => {
                    self.fill_candidates(i);
                    let cands = match self.gamma[i].as_ref().expect("filled") {
                        Ok(c) => c,
                        Err(TrainError::NoCandidates) => {
                            metrics.skipped += 1;
                            continue;
                        }
                        Err(e) => return Err(e.clone()),
                    };
                    let pick = if cands.ids.len() == 1 {
                        0
                    } else {
                        crate::nn::score_candidates(&self.params, &self.train[i].source, &cands.ids)?
                    };
                    cands.forms[pick].clone()
                }
            };
            let ex = &self.train[i];
            if target == ex.gold {
                correct += 1;
            }
            if target.execute(mode) != Ok(ex.denotation) {
                metrics.inconsistent_targets += 1;
            }

            let mut dropout = Dropout { rate: self.config.dropout, rng: &mut self.dropout_rng };
            let drop = (self.config.dropout > 0.0).then_some(&mut dropout);
            let (loss, trace) = model::nll(&self.params, &ex.source, &encode_target(&target), drop)?;
            let grads = model::backprop(&self.params, &trace);
            self.optimizer.step(&mut self.params, &grads);
            total_loss += loss;
            metrics.trained += 1;
        }

        if metrics.trained > 0 {
            metrics.mean_loss = total_loss / metrics.trained as f64;
            metrics.returned_correct_fraction = correct as f64 / metrics.trained as f64;
        }
        self.epoch += 1;
        if self.config.eval_every_epoch || self.epoch == self.config.epochs {
            metrics.test_accuracy = Some(evaluate(&self.test, &self.params, mode));
        }
        Ok(metrics)
    }

    /// Runs the remaining epochs, reporting each one as it finishes.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<Vec<EpochMetrics>, TrainError> {
        let mut out = Vec::with_capacity(self.config.epochs.saturating_sub(self.epoch));
        while self.epoch < self.config.epochs {
            let m = self.train_epoch()?;
            on_epoch(&m);
            out.push(m);
        }
        Ok(out)
    }
}
