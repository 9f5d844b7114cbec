use weakparse_core::dataset::{generate, Record};
use weakparse_core::nn::params::Dims;
use weakparse_core::trainer::{
    filtered_candidates, infer_training_form, Curriculum, EpochMetrics, Supervision, TrainConfig, Trainer,
};
use weakparse_core::{BaseCaseSet, CandidateIndex, DenotationTable, GrammarMode};

fn small_config(supervision: Supervision, grammar: GrammarMode, seed: u64) -> TrainConfig {
    TrainConfig {
        supervision,
        grammar,
        epochs: 4,
        seed,
        curriculum: "3:1,5:1".parse().unwrap(),
        dims: Dims::with_width(8),
        ..TrainConfig::default()
    }
}

fn split(seed: u64) -> (Vec<Record>, Vec<Record>) {
    let d = generate(seed, 160, 120).unwrap();
    (d.train, d.test)
}

fn run(cfg: TrainConfig, index: &CandidateIndex, base: &BaseCaseSet) -> (Vec<EpochMetrics>, Vec<f64>) {
    let (train, test) = split(cfg.seed);
    let mut t = Trainer::new(cfg, &train, &test, Some(index), Some(base)).unwrap();
    let metrics = t.run(|_| {}).unwrap();
    let flat: Vec<f64> = t.params().tensors().iter().flat_map(|m| m.data.clone()).collect();
    (metrics, flat)
}

fn index(mode: GrammarMode) -> CandidateIndex {
    CandidateIndex::build(&DenotationTable::build(4), &[2, 3, 4], mode)
}

#[test]
fn denotation_targets_always_execute_to_the_denotation() {
    for mode in [GrammarMode::NoBrackets, GrammarMode::WithBrackets] {
        let (idx, base) = (index(mode), BaseCaseSet::builtin(mode));
        let (metrics, _) = run(small_config(Supervision::Denotation, mode, 3), &idx, &base);
        assert_eq!(metrics.len(), 4);
        for m in &metrics {
            assert_eq!(m.inconsistent_targets, 0);
            assert_eq!(m.skipped, 0);
            assert!((0.0..=1.0).contains(&m.returned_correct_fraction));
            assert!(m.test_accuracy.is_some());
        }
    }
}

#[test]
fn curriculum_limits_what_each_epoch_sees() {
    let mode = GrammarMode::NoBrackets;
    let (idx, base) = (index(mode), BaseCaseSet::builtin(mode));
    let (train, _) = split(3);
    let upto = |n: usize| train.iter().filter(|r| r.utterance.words().len() <= n).count();
    let (metrics, _) = run(small_config(Supervision::Gold, mode, 3), &idx, &base);
    let seen: Vec<usize> = metrics.iter().map(|m| m.trained).collect();
    assert_eq!(seen, [upto(3), upto(5), upto(7), upto(7)]);
    assert!(metrics.iter().all(|m| m.returned_correct_fraction == 1.0 || m.trained == 0));
}

#[test]
fn identical_configs_give_identical_runs() {
    let mode = GrammarMode::WithBrackets;
    let (idx, base) = (index(mode), BaseCaseSet::builtin(mode));
    let a = run(small_config(Supervision::Denotation, mode, 7), &idx, &base);
    let b = run(small_config(Supervision::Denotation, mode, 7), &idx, &base);
    assert_eq!(a, b);
    let c = run(small_config(Supervision::Denotation, mode, 8), &idx, &base);
    assert_ne!(a.1, c.1);
}

#[test]
fn gold_training_reduces_loss() {
    let mode = GrammarMode::NoBrackets;
    let cfg = TrainConfig {
        epochs: 6,
        curriculum: Curriculum::flat(),
        ..small_config(Supervision::Gold, mode, 1)
    };
    let (train, test) = split(1);
    let mut t = Trainer::new(cfg, &train, &test, None, None).unwrap();
    let m = t.run(|_| {}).unwrap();
    assert!(m.last().unwrap().mean_loss < m[0].mean_loss);
}

#[test]
fn filtered_candidates_match_the_worked_example() {
    let mode = GrammarMode::WithBrackets;
    let (idx, base) = (index(mode), BaseCaseSet::builtin(mode));
    let u = "five plus three times two".parse().unwrap();
    let d = "11".parse().unwrap();
    let gamma = filtered_candidates(&u, d, &idx, &base).unwrap();
    let gold = "Go [ 5 + ( 3 * 2 ) ] End".parse().unwrap();
    assert!(gamma.contains(&gold));
    let omega = idx.candidates(d, 3).unwrap();
    assert!(gamma.len() < omega.len());
    let params = weakparse_core::nn::ModelParams::init_uniform(Dims::default(), 0.05, &mut weakparse_core::rng::stream(0, weakparse_core::rng::Stream::Init));
    let pick = infer_training_form(&u, d, &idx, &base, &params).unwrap();
    assert!(gamma.contains(&pick));
    assert_eq!(pick.execute(mode).unwrap(), d);
}
