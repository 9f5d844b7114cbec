use proptest::prelude::*;
use weakparse_core::filter::filter_candidates;
use weakparse_core::index::DenotationTable;
use weakparse_core::oracle::brute_force_candidates;
use weakparse_core::trainer::Curriculum;
use weakparse_core::{
    evaluate, linearize, precedence_parse, render_utterance, Atom, BaseCaseSet, Denotation, ExprTree,
    FeatureBag, FlatExpr, GrammarMode, LogicalForm, Operator, Utterance, Word,
};

fn operator() -> impl Strategy<Value = Operator> {
    prop::sample::select(Operator::ALL.to_vec())
}

/// Trees with at most four leaves.
fn tree() -> impl Strategy<Value = ExprTree> {
    let leaf = (1u8..=5).prop_map(ExprTree::Leaf);
    leaf.prop_recursive(3, 4, 2, |inner| {
        (operator(), inner.clone(), inner).prop_map(|(op, l, r)| ExprTree::node(op, l, r))
    })
    .prop_filter("at most four operands", |t| t.leaf_count() <= 4)
}

fn flat(operands: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = FlatExpr> {
    operands.prop_flat_map(|n| {
        (prop::collection::vec(1u8..=5, n), prop::collection::vec(operator(), n - 1)).prop_map(|(nums, ops)| {
            let mut atoms = vec![Atom::Num(nums[0])];
            for (op, n) in ops.into_iter().zip(&nums[1..]) {
                atoms.push(Atom::Op(op));
                atoms.push(Atom::Num(*n));
            }
            FlatExpr::new(atoms).unwrap()
        })
    })
}

fn mode() -> impl Strategy<Value = GrammarMode> {
    prop_oneof![Just(GrammarMode::WithBrackets), Just(GrammarMode::NoBrackets)]
}

fn words() -> impl Strategy<Value = Vec<Word>> {
    prop::collection::vec(prop::sample::select(Word::ALL.to_vec()), 0..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bracketed_round_trip(t in tree().prop_filter("a logical form has an operator", |t| t.leaf_count() >= 2)) {
        let lf = linearize(&t, GrammarMode::WithBrackets);
        prop_assert_eq!(lf.parse(GrammarMode::WithBrackets).unwrap(), t.clone());
        let text = lf.to_string();
        prop_assert_eq!(text.parse::<LogicalForm>().unwrap(), lf);
    }

    #[test]
    fn execution_matches_tree_evaluation(t in tree().prop_filter("operator", |t| t.leaf_count() >= 2)) {
        let lf = linearize(&t, GrammarMode::WithBrackets);
        prop_assert_eq!(lf.execute(GrammarMode::WithBrackets), evaluate(&t));
    }

    #[test]
    fn flat_forms_reparse_to_the_same_sequence(f in flat(2..=4)) {
        let lf = LogicalForm::from_flat(&f);
        let tree = lf.parse(GrammarMode::NoBrackets).unwrap();
        prop_assert_eq!(tree.flatten(), f.clone());
        prop_assert_eq!(linearize(&tree, GrammarMode::NoBrackets), lf);
        prop_assert_eq!(tree, precedence_parse(f.atoms()).unwrap());
    }

    #[test]
    fn precedence_tree_rebrackets_to_the_same_value(f in flat(2..=4)) {
        // the bracketed gold form and the flat form must agree on value
        let tree = precedence_parse(f.atoms()).unwrap();
        let bracketed = linearize(&tree, GrammarMode::WithBrackets);
        let flat = LogicalForm::from_flat(&f);
        prop_assert_eq!(bracketed.execute(GrammarMode::WithBrackets), flat.execute(GrammarMode::NoBrackets));
    }

    #[test]
    fn utterances_render_and_read_back(f in flat(2..=4)) {
        let u = render_utterance(&f).unwrap();
        prop_assert_eq!(u.flat(), f.clone());
        prop_assert_eq!(u.words().len(), 2 * f.operand_count() - 1);
        prop_assert_eq!(u.to_string().parse::<Utterance>().unwrap(), u.clone());
        let mut tokens = u.tokens();
        prop_assert_eq!(tokens.pop(), Some(Word::Eos));
    }

    #[test]
    fn denotation_text_round_trip(n in -10_000i64..10_000, d in 1i64..500) {
        let x = Denotation::new(n, d).unwrap();
        prop_assert_eq!(x.to_string().parse::<Denotation>().unwrap(), x);
    }

    #[test]
    fn similarity_is_a_symmetric_bounded_overlap(a in words(), b in words()) {
        let (x, y) = (FeatureBag::of_words(&a), FeatureBag::of_words(&b));
        prop_assert_eq!(x.similarity(&y), y.similarity(&x));
        prop_assert!(x.similarity(&y) <= x.len().min(y.len()));
        prop_assert_eq!(x.similarity(&x), x.len());
        let content = a.iter().filter(|w| !w.is_framing()).count() as u32;
        prop_assert_eq!(x.len(), content);
    }

    #[test]
    fn filtered_set_is_a_nonempty_maximal_subset(
        d in -20i64..40,
        size in 2usize..=3,
        m in mode(),
        reference in tree().prop_filter("operator", |t| t.leaf_count() >= 2),
    ) {
        let omega = brute_force_candidates(Denotation::integer(d), size, m);
        let reference = linearize(&reference, m);
        let kept = filter_candidates(omega.forms(), &reference);
        prop_assert_eq!(kept.is_empty(), omega.is_empty());
        let target = FeatureBag::of_form(reference.tokens());
        let score = |f: &LogicalForm| FeatureBag::of_form(f.tokens()).similarity(&target);
        let best = omega.forms().iter().map(score).max();
        // kept forms appear in omega in the same relative order
        let mut pos = 0;
        for f in &kept {
            prop_assert_eq!(Some(score(f)), best);
            let at = omega.forms()[pos..].iter().position(|g| g == f);
            prop_assert!(at.is_some());
            pos += at.unwrap() + 1;
        }
        let maximal = omega.forms().iter().filter(|f| Some(score(f)) == best).count();
        prop_assert_eq!(kept.len(), maximal);
    }

    #[test]
    fn base_case_choice_maximizes_overlap_whatever_the_order(f in flat(2..=4), shift in 0usize..7) {
        let set = BaseCaseSet::builtin(GrammarMode::WithBrackets);
        let u = render_utterance(&f).unwrap();
        let bag = FeatureBag::of_utterance(&u);
        let score = |c: &weakparse_core::BaseCase| FeatureBag::of_utterance(&c.utterance).similarity(&bag);
        let best = set.cases().iter().map(score).max().unwrap();
        prop_assert_eq!(score(set.select(&u)), best);

        let mut rotated = set.cases().to_vec();
        rotated.rotate_left(shift);
        let rotated = BaseCaseSet::new(GrammarMode::WithBrackets, rotated).unwrap();
        prop_assert_eq!(score(rotated.select(&u)), best);
        // the first maximizer in list order wins
        let first = rotated.cases().iter().find(|c| score(c) == best).unwrap();
        prop_assert_eq!(&rotated.select(&u).utterance, &first.utterance);
    }

    #[test]
    fn dp_matches_brute_force_on_sampled_queries(d_num in -30i64..60, d_den in 1i64..6, size in 2usize..=3, m in mode()) {
        let table = DenotationTable::build(3);
        let d = Denotation::new(d_num, d_den).unwrap();
        prop_assert_eq!(table.enumerate(d, size, m), brute_force_candidates(d, size, m));
    }

    #[test]
    fn curriculum_lengths_never_decrease(
        stages in prop::collection::vec((0usize..3, 0usize..30), 0..4),
        probe in 0usize..200,
    ) {
        let mut stages: Vec<(usize, usize)> = stages.into_iter().map(|(l, e)| ([3, 5, 7][l], e)).collect();
        stages.sort_by_key(|s| s.0);
        let text: Vec<String> = stages.iter().map(|(l, e)| format!("{l}:{e}")).collect();
        let c: Curriculum = text.join(",").parse().unwrap();
        prop_assert!(c.validate(c.total_epochs()).is_ok());
        prop_assert!(c.max_len(probe) <= c.max_len(probe + 1));
        prop_assert!([3, 5, 7].contains(&c.max_len(probe)));
    }
}
