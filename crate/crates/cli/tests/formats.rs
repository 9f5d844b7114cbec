use proptest::prelude::*;
use tempfile::tempdir;
use weakparse::formats::*;
use weakparse_core::dataset::generate;
use weakparse_core::index::DenotationTable;
use weakparse_core::nn::params::{Dims, ModelParams};
use weakparse_core::rng::{stream, Stream};
use weakparse_core::trainer::Supervision;
use weakparse_core::{BaseCaseSet, CandidateIndex, GrammarMode};

fn checkpoint(dims: Dims, seed: u64) -> Checkpoint {
    Checkpoint {
        seed,
        grammar: GrammarMode::WithBrackets,
        params: ModelParams::init_uniform(dims, 0.05, &mut stream(seed, Stream::Init)),
    }
}

#[test]
fn dataset_round_trips() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("d.tsv");
    let data = generate(5, 300, 200).unwrap();
    write_dataset(&path, &data.train).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), data.train);
}

#[test]
fn dataset_with_a_wrong_denotation_is_rejected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("d.tsv");
    std::fs::write(&path, "one plus two\tGo [ 1 + 2 ] End\tGo 1 + 2 End\t3\none plus two\tGo [ 1 + 2 ] End\tGo 1 + 2 End\t4\n").unwrap();
    match read_dataset(&path).unwrap_err() {
        FormatError::Parse { line, .. } => assert_eq!(line, 2),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn index_round_trips_in_both_grammars() {
    let dir = tempdir().unwrap();
    let table = DenotationTable::build(3);
    for mode in [GrammarMode::NoBrackets, GrammarMode::WithBrackets] {
        let index = CandidateIndex::build(&table, &[2, 3], mode);
        let path = dir.path().join("i.tsv");
        write_index(&path, &index).unwrap();
        let back = read_index(&path).unwrap();
        assert_eq!(back, index);
        assert_eq!(format_index(&back), format_index(&index));
    }
}

#[test]
fn index_with_an_inconsistent_form_is_rejected() {
    let dir = tempdir().unwrap();
    let index = CandidateIndex::build(&DenotationTable::build(2), &[2], GrammarMode::NoBrackets);
    let text = format_index(&index).replacen("Go 1 + 2 End", "Go 1 + 3 End", 1);
    assert_ne!(text, format_index(&index));
    let path = dir.path().join("i.tsv");
    std::fs::write(&path, text).unwrap();
    assert!(read_index(&path).is_err());
}

#[test]
fn bundled_base_cases_load_and_match_the_builtin_set() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");
    for (file, mode) in [("base_cases_brackets.tsv", GrammarMode::WithBrackets), ("base_cases_flat.tsv", GrammarMode::NoBrackets)] {
        let set = read_base_cases(std::path::Path::new(root).join(file).as_path(), mode).unwrap();
        assert_eq!(set, BaseCaseSet::builtin(mode));
    }
}

#[test]
fn base_case_with_a_wrong_value_is_rejected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("b.tsv");
    std::fs::write(&path, "one plus two <eos>\tGo [ 1 + 2 ] End\t3.5\n").unwrap();
    assert!(read_base_cases(&path, GrammarMode::WithBrackets).is_err());
    std::fs::write(&path, "two divide three <eos>\tGo ( 2 / 3 ) End\t0.667\n").unwrap();
    assert_eq!(read_base_cases(&path, GrammarMode::WithBrackets).unwrap().cases().len(), 1);
}

#[test]
fn base_cases_round_trip() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("b.tsv");
    let set = BaseCaseSet::builtin(GrammarMode::NoBrackets);
    write_base_cases(&path, &set).unwrap();
    assert_eq!(read_base_cases(&path, GrammarMode::NoBrackets).unwrap(), set);
}

#[test]
fn checkpoint_round_trips_exactly() {
    let c = checkpoint(Dims::with_width(6), 3);
    let bytes = encode_checkpoint(&c);
    assert_eq!(decode_checkpoint(&bytes, Some(Dims::with_width(6))).unwrap(), c);
    assert_eq!(decode_checkpoint(&bytes, None).unwrap(), c);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let c = checkpoint(Dims::with_width(4), 1);
    let bytes = encode_checkpoint(&c);
    assert!(decode_checkpoint(&bytes, Some(Dims::default())).unwrap_err().contains("dimensions"));
    assert!(decode_checkpoint(&bytes[..bytes.len() - 1], None).unwrap_err().contains("truncated"));
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(decode_checkpoint(&longer, None).unwrap_err().contains("trailing"));
    let mut magic = bytes.clone();
    magic[0] ^= 1;
    assert!(decode_checkpoint(&magic, None).is_err());
    assert!(decode_checkpoint(&[], None).is_err());
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempdir().unwrap();
    let gone = dir.path().join("nope");
    assert!(read_dataset(&gone).unwrap_err().is_io());
    assert!(read_index(&gone).unwrap_err().is_io());
    assert!(read_checkpoint(&gone, None).unwrap_err().is_io());
    assert!(read_metrics(&gone).unwrap_err().is_io());
}

fn row() -> impl Strategy<Value = MetricsRow> {
    (0usize..500, 0.0f64..1e4, 0.0f64..=1.0, prop::option::of(0.0f64..=1.0), 0usize..100).prop_map(
        |(epoch, mean_loss, returned_correct_fraction, test_accuracy, skipped)| MetricsRow {
            epoch,
            mean_loss,
            returned_correct_fraction,
            test_accuracy,
            skipped,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_stream_reads_back_exactly(rows in prop::collection::vec(row(), 0..20), seed in any::<u64>(), den in any::<bool>()) {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let info = RunInfo {
            supervision: if den { Supervision::Denotation } else { Supervision::Gold },
            grammar: GrammarMode::NoBrackets,
            seed,
        };
        let mut w = MetricsWriter::create(&path, info).unwrap();
        for r in &rows {
            w.append(r).unwrap();
        }
        drop(w);
        let back = read_metrics(&path).unwrap();
        prop_assert_eq!(back.info, Some(info));
        prop_assert_eq!(back.rows, rows);
    }

    #[test]
    fn checkpoint_decoding_never_panics(cut in 0usize..2000, flip in 0usize..2000, seed in 0u64..50) {
        let bytes = encode_checkpoint(&checkpoint(Dims::with_width(3), seed));
        let cut = cut.min(bytes.len());
        let _ = decode_checkpoint(&bytes[..cut], None);
        let mut damaged = bytes.clone();
        let at = flip % damaged.len();
        damaged[at] = damaged[at].wrapping_add(1);
        let _ = decode_checkpoint(&damaged, None);
    }
}
