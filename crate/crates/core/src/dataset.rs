//! Synthetic corpus: utterances of 3, 5 or 7 words over the numbers one to
//! five and the four operator words, with their gold logical forms in both
//! grammars and their denotations.

use alloc::vec::Vec;

use rand::seq::index;
use thiserror::Error;

use crate::arith::{
    evaluate, linearize, precedence_parse, render_utterance, ArithError, Atom, Denotation,
    FlatExpr, GrammarMode, LogicalForm, Operator, Utterance,
};
use crate::rng::{stream, Stream};

/// Number of distinct utterances with 2, 3 and 4 operands.
pub const SPACE_BY_OPERANDS: [usize; 3] = [100, 2_000, 40_000];
/// All legal utterances.
pub const SPACE_SIZE: usize = 42_100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("requested {requested} utterances but only {available} exist")]
    TooMany { requested: usize, available: usize },
    #[error("training split {train} exceeds total {total}")]
    BadSplit { train: usize, total: usize },
    #[error("record `{utterance}`: {reason}")]
    Inconsistent { utterance: Utterance, reason: &'static str },
    #[error(transparent)]
    Arith(#[from] ArithError),
}

/// One example. The gold forms are kept for metrics only; denotation
/// supervision never shows them to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub utterance: Utterance,
    pub bracketed: LogicalForm,
    pub flat: LogicalForm,
    pub denotation: Denotation,
}

impl Record {
    pub fn from_utterance(utterance: Utterance) -> Result<Self, ArithError> {
        let flat = utterance.flat();
        let tree = precedence_parse(flat.atoms())?;
        Ok(Record {
            bracketed: linearize(&tree, GrammarMode::WithBrackets),
            flat: LogicalForm::from_flat(&flat),
            denotation: evaluate(&tree)?,
            utterance,
        })
    }

    /// Checks that both forms describe the utterance and execute to the
    /// recorded denotation.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let expected = Record::from_utterance(self.utterance.clone())?;
        let fail = |reason| DatasetError::Inconsistent { utterance: self.utterance.clone(), reason };
        if self.bracketed != expected.bracketed {
            return Err(fail("bracketed form does not match the utterance"));
        }
        if self.flat != expected.flat {
            return Err(fail("flat form does not match the utterance"));
        }
        if self.denotation != expected.denotation {
            return Err(fail("denotation does not match the logical form"));
        }
        Ok(())
    }

    pub fn gold(&self, mode: GrammarMode) -> &LogicalForm {
        match mode {
            GrammarMode::WithBrackets => &self.bracketed,
            GrammarMode::NoBrackets => &self.flat,
        }
    }
}

/// The `i`-th legal flat expression: all two-operand expressions first,
/// then three, then four, each block in mixed-radix order.
pub fn nth_expression(mut i: usize) -> FlatExpr {
    assert!(i < SPACE_SIZE, "index {i} outside the space");
    let mut operands = 2;
    for size in SPACE_BY_OPERANDS {
        if i < size {
            break;
        }
        i -= size;
        operands += 1;
    }
    let mut atoms = Vec::with_capacity(2 * operands - 1);
    atoms.push(Atom::Num((i % 5) as u8 + 1));
    i /= 5;
    for _ in 1..operands {
        atoms.push(Atom::Op(Operator::ALL[i % 4]));
        i /= 4;
        atoms.push(Atom::Num((i % 5) as u8 + 1));
        i /= 5;
    }
    FlatExpr::new(atoms).expect("generated alternation")
}

/// Train/test split of distinct utterances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<Record>,
    pub test: Vec<Record>,
}

/// Samples `total` distinct utterances uniformly without replacement from
/// the legal space; the first `train` become the training split.
pub fn generate(seed: u64, total: usize, train: usize) -> Result<Dataset, DatasetError> {
    if total > SPACE_SIZE {
        return Err(DatasetError::TooMany { requested: total, available: SPACE_SIZE });
    }
    if train > total {
        return Err(DatasetError::BadSplit { train, total });
    }
    let mut rng = stream(seed, Stream::Dataset);
    let mut records = index::sample(&mut rng, SPACE_SIZE, total)
        .into_iter()
        .map(|i| Record::from_utterance(render_utterance(&nth_expression(i))?))
        .collect::<Result<Vec<_>, ArithError>>()?;
    let test = records.split_off(train);
    Ok(Dataset { train: records, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::string::ToString;

    #[test]
    fn space_counts() {
        // 5^n * 4^(n-1) for n = 2, 3, 4
        for (n, size) in (2u32..=4).zip(SPACE_BY_OPERANDS) {
            assert_eq!(5usize.pow(n) * 4usize.pow(n - 1), size);
        }
        assert_eq!(SPACE_BY_OPERANDS.iter().sum::<usize>(), SPACE_SIZE);
    }

    #[test]
    fn enumeration_is_a_bijection() {
        let all: BTreeSet<FlatExpr> = (0..SPACE_SIZE).map(nth_expression).collect();
        assert_eq!(all.len(), SPACE_SIZE);
        assert_eq!(nth_expression(0).operand_count(), 2);
        assert_eq!(nth_expression(100).operand_count(), 3);
        assert_eq!(nth_expression(SPACE_SIZE - 1).operand_count(), 4);
    }

    #[test]
    fn generation_is_seeded_and_disjoint() {
        let a = generate(11, 500, 400).unwrap();
        let b = generate(11, 500, 400).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(12, 500, 400).unwrap());
        assert_eq!((a.train.len(), a.test.len()), (400, 100));
        let train: BTreeSet<_> = a.train.iter().map(|r| r.utterance.clone()).collect();
        assert_eq!(train.len(), 400);
        assert!(a.test.iter().all(|r| !train.contains(&r.utterance)));
        for r in a.train.iter().chain(&a.test) {
            r.validate().unwrap();
            assert_eq!(r.bracketed.execute(GrammarMode::WithBrackets).unwrap(), r.denotation);
            assert_eq!(r.flat.execute(GrammarMode::NoBrackets).unwrap(), r.denotation);
        }
    }

    #[test]
    fn whole_space_can_be_drawn() {
        let d = generate(0, SPACE_SIZE, SPACE_SIZE).unwrap();
        assert_eq!(d.train.len(), SPACE_SIZE);
        assert!(matches!(generate(0, SPACE_SIZE + 1, 0), Err(DatasetError::TooMany { .. })));
        assert!(matches!(generate(0, 10, 11), Err(DatasetError::BadSplit { .. })));
    }

    #[test]
    fn record_fields() {
        let r = Record::from_utterance("five plus three times two".parse().unwrap()).unwrap();
        assert_eq!(r.bracketed.to_string(), "Go [ 5 + ( 3 * 2 ) ] End");
        assert_eq!(r.flat.to_string(), "Go 5 + 3 * 2 End");
        assert_eq!(r.denotation, Denotation::integer(11));
        let mut bad = r.clone();
        bad.denotation = Denotation::integer(16);
        assert!(bad.validate().is_err());
    }
}
