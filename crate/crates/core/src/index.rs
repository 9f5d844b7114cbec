//! Dynamic programming on denotations.
//!
//! Many logical forms share a value, so the number of distinct denotations
//! grows far slower than the number of expressions. [`DenotationTable`]
//! records, for every operand count and every reachable value, how that value
//! can be produced from smaller ones. Walking those derivations backwards
//! recovers the full candidate set for a target value without any pruning.
//!
//! Two grammars are covered:
//!
//! * bracketed trees: any binary tree over the operands;
//! * flat sequences read with standard precedence: a left-associative sum of
//!   left-associative products. Both levels are denotationally invariant, so
//!   they get their own tables (`terms` and `sums`).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::arith::{Denotation, GrammarMode, LfToken, LogicalForm, Operator, MAX_OPERANDS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("no candidates were stored for operand count {0}")]
    IndexMissing(usize),
    #[error("index holds {stored:?} candidates, {requested:?} requested")]
    ModeMismatch { stored: GrammarMode, requested: GrammarMode },
    #[error("invalid index record: {0}")]
    Invalid(String),
}

/// How a value of a given size was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Derivation {
    Leaf(u8),
    /// Whole-sized product chain promoted to a sum (flat grammar only).
    Term,
    Combine {
        op: Operator,
        left_size: usize,
        left: Denotation,
        right: Denotation,
    },
}

type Level = BTreeMap<Denotation, Vec<Derivation>>;

/// Reachable denotations per operand count, with every derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenotationTable {
    max_operands: usize,
    // index = operand count; slot 0 unused
    trees: Vec<Level>,
    terms: Vec<Level>,
    sums: Vec<Level>,
}

impl DenotationTable {
    /// Forward pass: `D[1] = {1..5}` and `D[n]` combines `D[i]` with
    /// `D[n - i]` under every operator, skipping zero divisors.
    pub fn build(max_operands: usize) -> Self {
        assert!(
            (1..=MAX_OPERANDS).contains(&max_operands),
            "operand count must lie in 1..={MAX_OPERANDS}"
        );
        let leaves: Level = (1..=5u8)
            .map(|v| (Denotation::integer(i64::from(v)), alloc::vec![Derivation::Leaf(v)]))
            .collect();

        let mut trees = alloc::vec![Level::new(), leaves.clone()];
        for n in 2..=max_operands {
            let mut level = Level::new();
            for left_size in 1..n {
                combine(&trees[left_size], &trees[n - left_size], left_size, &Operator::ALL, &mut level);
            }
            trees.push(level);
        }

        let mult = [Operator::Mul, Operator::Div];
        let add = [Operator::Add, Operator::Sub];
        let mut terms = alloc::vec![Level::new(), leaves.clone()];
        for n in 2..=max_operands {
            let mut level = Level::new();
            combine(&terms[n - 1], &leaves, n - 1, &mult, &mut level);
            terms.push(level);
        }
        let mut sums = alloc::vec![Level::new()];
        for n in 1..=max_operands {
            let mut level = Level::new();
            for d in terms[n].keys() {
                level.entry(*d).or_default().push(Derivation::Term);
            }
            for left_size in 1..n {
                combine(&sums[left_size], &terms[n - left_size], left_size, &add, &mut level);
            }
            sums.push(level);
        }

        DenotationTable { max_operands, trees, terms, sums }
    }

    pub fn max_operands(&self) -> usize {
        self.max_operands
    }

    fn level(&self, size: usize, mode: GrammarMode) -> Option<&Level> {
        if size == 0 || size > self.max_operands {
            return None;
        }
        Some(match mode {
            GrammarMode::WithBrackets => &self.trees[size],
            GrammarMode::NoBrackets => &self.sums[size],
        })
    }

    /// Distinct values reachable with `size` operands.
    pub fn denotations(&self, size: usize, mode: GrammarMode) -> impl Iterator<Item = Denotation> + '_ {
        self.level(size, mode).into_iter().flat_map(|l| l.keys().copied())
    }

    pub fn derivations(&self, size: usize, mode: GrammarMode, d: Denotation) -> &[Derivation] {
        self.level(size, mode)
            .and_then(|l| l.get(&d))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Number of distinct values for `size` operands.
    pub fn reachable_count(&self, size: usize, mode: GrammarMode) -> usize {
        self.level(size, mode).map_or(0, Level::len)
    }

    /// Backward reconstruction of every logical form of `size` operands
    /// whose value is `d`. Unreachable values give an empty set.
    pub fn enumerate(&self, d: Denotation, size: usize, mode: GrammarMode) -> CandidateSet {
        let bodies = match mode {
            GrammarMode::WithBrackets => self.tree_bodies(size, d),
            GrammarMode::NoBrackets => self.sum_bodies(size, d),
        };
        CandidateSet::from_forms(
            mode,
            bodies.into_iter().map(|body| {
                let mut tokens = Vec::with_capacity(body.len() + 2);
                tokens.push(LfToken::Go);
                tokens.extend(body);
                tokens.push(LfToken::End);
                LogicalForm(tokens)
            }),
        )
    }

    fn tree_bodies(&self, size: usize, d: Denotation) -> Vec<Vec<LfToken>> {
        let mut out = Vec::new();
        for der in self.derivations(size, GrammarMode::WithBrackets, d) {
            match *der {
                Derivation::Leaf(v) => out.push(alloc::vec![LfToken::Digit(v)]),
                Derivation::Term => unreachable!("flat-only derivation"),
                Derivation::Combine { op, left_size, left, right } => {
                    let lhs = self.tree_bodies(left_size, left);
                    let rhs = self.tree_bodies(size - left_size, right);
                    let (open, close) = if op.is_multiplicative() {
                        (LfToken::OpenParen, LfToken::CloseParen)
                    } else {
                        (LfToken::OpenSquare, LfToken::CloseSquare)
                    };
                    for l in &lhs {
                        for r in &rhs {
                            let mut body = Vec::with_capacity(l.len() + r.len() + 3);
                            body.push(open);
                            body.extend_from_slice(l);
                            body.push(LfToken::Op(op));
                            body.extend_from_slice(r);
                            body.push(close);
                            out.push(body);
                        }
                    }
                }
            }
        }
        out
    }

    fn term_bodies(&self, size: usize, d: Denotation) -> Vec<Vec<LfToken>> {
        let mut out = Vec::new();
        if let Some(ders) = self.terms.get(size).and_then(|l| l.get(&d)) {
            for der in ders {
                match *der {
                    Derivation::Leaf(v) => out.push(alloc::vec![LfToken::Digit(v)]),
                    Derivation::Combine { op, left_size, left, right } => {
                        let lhs = self.term_bodies(left_size, left);
                        let rhs = self.tree_bodies(1, right);
                        concat_into(&lhs, op, &rhs, &mut out);
                    }
                    Derivation::Term => unreachable!("terms are never promoted"),
                }
            }
        }
        out
    }

    fn sum_bodies(&self, size: usize, d: Denotation) -> Vec<Vec<LfToken>> {
        let mut out = Vec::new();
        if let Some(ders) = self.sums.get(size).and_then(|l| l.get(&d)) {
            for der in ders {
                match *der {
                    Derivation::Term => out.extend(self.term_bodies(size, d)),
                    Derivation::Combine { op, left_size, left, right } => {
                        let lhs = self.sum_bodies(left_size, left);
                        let rhs = self.term_bodies(size - left_size, right);
                        concat_into(&lhs, op, &rhs, &mut out);
                    }
                    Derivation::Leaf(_) => unreachable!("sums hold no leaves"),
                }
            }
        }
        out
    }
}

fn combine(lhs: &Level, rhs: &Level, left_size: usize, ops: &[Operator], out: &mut Level) {
    for a in lhs.keys() {
        for b in rhs.keys() {
            for &op in ops {
                // zero divisors and overflow have no denotation
                if let Ok(v) = op.apply(*a, *b) {
                    out.entry(v).or_default().push(Derivation::Combine {
                        op,
                        left_size,
                        left: *a,
                        right: *b,
                    });
                }
            }
        }
    }
}

fn concat_into(lhs: &[Vec<LfToken>], op: Operator, rhs: &[Vec<LfToken>], out: &mut Vec<Vec<LfToken>>) {
    for l in lhs {
        for r in rhs {
            let mut body = Vec::with_capacity(l.len() + r.len() + 1);
            body.extend_from_slice(l);
            body.push(LfToken::Op(op));
            body.extend_from_slice(r);
            out.push(body);
        }
    }
}

/// Logical forms consistent with one denotation, in canonical order
/// (lexicographic by their space-separated token strings, no duplicates).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    mode: GrammarMode,
    forms: Vec<LogicalForm>,
}

impl CandidateSet {
    pub fn empty(mode: GrammarMode) -> Self {
        CandidateSet { mode, forms: Vec::new() }
    }

    /// Sorts into canonical order and drops duplicates.
    pub fn from_forms(mode: GrammarMode, forms: impl IntoIterator<Item = LogicalForm>) -> Self {
        let mut keyed: Vec<(String, LogicalForm)> =
            forms.into_iter().map(|f| (alloc::format!("{f}"), f)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        CandidateSet { mode, forms: keyed.into_iter().map(|(_, f)| f).collect() }
    }

    pub fn mode(&self) -> GrammarMode {
        self.mode
    }

    pub fn forms(&self) -> &[LogicalForm] {
        &self.forms
    }

    pub fn into_forms(self) -> Vec<LogicalForm> {
        self.forms
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn contains(&self, form: &LogicalForm) -> bool {
        self.forms.contains(form)
    }
}

/// Precomputed `(size, denotation) -> candidates` map for one grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateIndex {
    mode: GrammarMode,
    sizes: BTreeSet<usize>,
    entries: BTreeMap<(usize, Denotation), Vec<LogicalForm>>,
}

impl CandidateIndex {
    /// Materializes every reachable denotation for each requested size.
    pub fn build(table: &DenotationTable, sizes: &[usize], mode: GrammarMode) -> Self {
        let mut index = CandidateIndex::new(mode);
        for &size in sizes {
            assert!(size >= 1 && size <= table.max_operands(), "size {size} outside the table");
            index.sizes.insert(size);
            for d in table.denotations(size, mode) {
                index.entries.insert((size, d), table.enumerate(d, size, mode).into_forms());
            }
        }
        index
    }

    pub fn new(mode: GrammarMode) -> Self {
        CandidateIndex { mode, sizes: BTreeSet::new(), entries: BTreeMap::new() }
    }

    /// Adds a loaded record after checking that every candidate parses in
    /// this grammar, has `size` operands and executes to `d`, and that the
    /// list is in canonical order.
    pub fn insert_record(
        &mut self,
        size: usize,
        d: Denotation,
        forms: Vec<LogicalForm>,
    ) -> Result<(), IndexError> {
        for form in &forms {
            let tree = form
                .parse(self.mode)
                .map_err(|e| IndexError::Invalid(alloc::format!("`{form}`: {e}")))?;
            if tree.leaf_count() != size {
                return Err(IndexError::Invalid(alloc::format!("`{form}` does not have {size} operands")));
            }
            match crate::arith::evaluate(&tree) {
                Ok(v) if v == d => {}
                _ => return Err(IndexError::Invalid(alloc::format!("`{form}` does not execute to {d}"))),
            }
        }
        let canonical = CandidateSet::from_forms(self.mode, forms.iter().cloned());
        if canonical.forms() != forms.as_slice() {
            return Err(IndexError::Invalid(alloc::format!(
                "candidates for ({size}, {d}) are not in canonical order"
            )));
        }
        self.sizes.insert(size);
        if self.entries.insert((size, d), forms).is_some() {
            return Err(IndexError::Invalid(alloc::format!("duplicate record ({size}, {d})")));
        }
        Ok(())
    }

    /// Marks a size as covered even if no record for it was seen.
    pub fn declare_size(&mut self, size: usize) {
        self.sizes.insert(size);
    }

    pub fn mode(&self) -> GrammarMode {
        self.mode
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.sizes.iter().copied()
    }

    /// Records in canonical order: by size, then denotation.
    pub fn records(&self) -> impl Iterator<Item = (usize, Denotation, &[LogicalForm])> {
        self.entries.iter().map(|((s, d), f)| (*s, *d, f.as_slice()))
    }

    pub fn lookup(&self, d: Denotation, size: usize, mode: GrammarMode) -> Result<CandidateSet, IndexError> {
        if mode != self.mode {
            return Err(IndexError::ModeMismatch { stored: self.mode, requested: mode });
        }
        Ok(CandidateSet { mode, forms: self.candidates(d, size)?.to_vec() })
    }

    /// Borrowing variant of [`CandidateIndex::lookup`] in the stored grammar.
    pub fn candidates(&self, d: Denotation, size: usize) -> Result<&[LogicalForm], IndexError> {
        if !self.sizes.contains(&size) {
            return Err(IndexError::IndexMissing(size));
        }
        Ok(self.entries.get(&(size, d)).map(Vec::as_slice).unwrap_or(&[]))
    }
}
