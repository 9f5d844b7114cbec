//! Weakly supervised semantic parsing for spoken arithmetic.
//!
//! The crate learns to translate utterances such as `five plus three times two`
//! into executable logical forms when training data only carries the value the
//! expression denotes. It contains every algorithmic piece of the pipeline:
//!
//! * [`arith`] - utterances, expression trees, exact evaluation, linearization
//!   and parsing of logical forms in both grammars.
//! * [`index`] - dynamic programming over denotations that recovers every
//!   logical form of a given size with a given value.
//! * [`filter`] - bag-of-words base case retrieval and candidate filtering.
//! * [`nn`] - an attention encoder-decoder written from scratch, with exact
//!   backpropagation and RMSProp.
//! * [`trainer`] - gold and denotation supervised training, curriculum
//!   scheduling and evaluation.
//! * [`dataset`] - seeded generation of the synthetic corpus.
//!
//! The crate is `no_std` and only needs an allocator; file formats and the
//! command line live in the `weakparse` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod arith;
pub mod dataset;
pub mod filter;
pub mod index;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod trainer;

pub use arith::{
    evaluate, linearize, parse_logical_form, precedence_parse, render_utterance, ArithError,
    Atom, Denotation, ExprTree, FlatExpr, GrammarMode, LfToken, LogicalForm, Operator, Utterance,
    Word,
};
pub use filter::{BaseCase, BaseCaseSet, FeatureBag};
pub use index::{CandidateIndex, CandidateSet, DenotationTable, IndexError};
