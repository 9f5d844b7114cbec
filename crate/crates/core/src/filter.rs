//! Base case retrieval and candidate filtering by bag-of-words overlap.
//!
//! Similar utterances should have similar logical forms. For an input
//! utterance the most similar base case is retrieved, and the candidate set
//! is cut down to the forms sharing the most symbols with that base case's
//! logical form.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::arith::{ArithError, Denotation, GrammarMode, LfToken, LogicalForm, Utterance, Word};
use crate::index::CandidateSet;

/// Multiset of content tokens. Framing tokens (`<eos>`, `PAD`, `Go`, `End`)
/// are never counted; brackets are.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureBag(BTreeMap<&'static str, u32>);

impl FeatureBag {
    pub fn of_words(words: &[Word]) -> Self {
        Self::collect(words.iter().filter(|w| !w.is_framing()).map(|w| w.as_str()))
    }

    pub fn of_utterance(u: &Utterance) -> Self {
        Self::of_words(u.words())
    }

    pub fn of_form(tokens: &[LfToken]) -> Self {
        Self::collect(tokens.iter().filter(|t| !t.is_framing()).map(|t| t.as_str()))
    }

    fn collect(items: impl Iterator<Item = &'static str>) -> Self {
        let mut bag = BTreeMap::new();
        for item in items {
            *bag.entry(item).or_insert(0) += 1;
        }
        FeatureBag(bag)
    }

    pub fn count(&self, feature: &str) -> u32 {
        self.0.get(feature).copied().unwrap_or(0)
    }

    /// Total number of features, multiplicity included.
    pub fn len(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Size of the multiset intersection.
    pub fn similarity(&self, other: &FeatureBag) -> u32 {
        self.0
            .iter()
            .map(|(k, a)| (*a).min(other.count(k)))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaseCaseError {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("`{form}` executes to {actual}, recorded {recorded}")]
    WrongDenotation { form: LogicalForm, actual: Denotation, recorded: Denotation },
    #[error("base case set is empty")]
    Empty,
}

/// A curated utterance with its gold logical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseCase {
    pub utterance: Utterance,
    pub logical_form: LogicalForm,
    pub denotation: Denotation,
    utterance_bag: FeatureBag,
    form_bag: FeatureBag,
}

impl BaseCase {
    /// Checks that the logical form parses in `mode` and executes to the
    /// recorded denotation.
    pub fn new(
        utterance: Utterance,
        logical_form: LogicalForm,
        denotation: Denotation,
        mode: GrammarMode,
    ) -> Result<Self, BaseCaseError> {
        let actual = logical_form.execute(mode)?;
        if actual != denotation {
            return Err(BaseCaseError::WrongDenotation { form: logical_form, actual, recorded: denotation });
        }
        Ok(BaseCase {
            utterance_bag: FeatureBag::of_utterance(&utterance),
            form_bag: FeatureBag::of_form(logical_form.tokens()),
            utterance,
            logical_form,
            denotation,
        })
    }
}

const BUILTIN_CASES: [(&str, &str); 7] = [
    ("one plus two", "Go [ 1 + 2 ] End"),
    ("three minus four times five", "Go [ 3 - ( 4 * 5 ) ] End"),
    ("one times two divide three", "Go ( ( 1 * 2 ) / 3 ) End"),
    ("two divide four plus five", "Go [ ( 2 / 4 ) + 5 ] End"),
    ("five divide one times two plus three", "Go [ ( ( 5 / 1 ) * 2 ) + 3 ] End"),
    ("four minus two times three plus one", "Go [ [ 4 - ( 2 * 3 ) ] + 1 ] End"),
    ("three divide four minus five plus two", "Go [ [ ( 3 / 4 ) - 5 ] + 2 ] End"),
];

/// Ordered, non-empty list of base cases in one grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseCaseSet {
    mode: GrammarMode,
    cases: Vec<BaseCase>,
}

impl BaseCaseSet {
    pub fn new(mode: GrammarMode, cases: Vec<BaseCase>) -> Result<Self, BaseCaseError> {
        if cases.is_empty() {
            return Err(BaseCaseError::Empty);
        }
        Ok(BaseCaseSet { mode, cases })
    }

    /// The seven curated pairs; without brackets the bracket tokens are
    /// simply dropped.
    pub fn builtin(mode: GrammarMode) -> Self {
        let cases = BUILTIN_CASES
            .iter()
            .map(|(u, s)| {
                let utterance: Utterance = u.parse().expect("curated utterance");
                let mut form: LogicalForm = s.parse().expect("curated form");
                let d = form.execute(GrammarMode::WithBrackets).expect("curated form executes");
                if mode == GrammarMode::NoBrackets {
                    form.0.retain(|t| !t.is_bracket());
                }
                BaseCase::new(utterance, form, d, mode).expect("curated base case")
            })
            .collect();
        BaseCaseSet { mode, cases }
    }

    pub fn mode(&self) -> GrammarMode {
        self.mode
    }

    pub fn cases(&self) -> &[BaseCase] {
        &self.cases
    }

    /// The base case sharing the most words with `u`; ties go to the
    /// earliest case.
    pub fn select(&self, u: &Utterance) -> &BaseCase {
        let bag = FeatureBag::of_utterance(u);
        let mut best = &self.cases[0];
        let mut best_score = best.utterance_bag.similarity(&bag);
        for case in &self.cases[1..] {
            let score = case.utterance_bag.similarity(&bag);
            if score > best_score {
                best = case;
                best_score = score;
            }
        }
        best
    }
}

/// Keeps every candidate whose overlap with `reference` is maximal. The
/// canonical order of `omega` is preserved.
pub fn filter_candidates(omega: &[LogicalForm], reference: &LogicalForm) -> Vec<LogicalForm> {
    let target = FeatureBag::of_form(reference.tokens());
    let scores: Vec<u32> = omega
        .iter()
        .map(|s| FeatureBag::of_form(s.tokens()).similarity(&target))
        .collect();
    let Some(&best) = scores.iter().max() else {
        return Vec::new();
    };
    omega
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s == best)
        .map(|(f, _)| f.clone())
        .collect()
}

/// [`filter_candidates`] over a [`CandidateSet`].
pub fn filter_set(omega: &CandidateSet, reference: &LogicalForm) -> CandidateSet {
    CandidateSet::from_forms(omega.mode(), filter_candidates(omega.forms(), reference))
}
