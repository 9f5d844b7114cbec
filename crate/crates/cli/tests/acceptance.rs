//! End-to-end acceptance suite. Prints one PASS/FAIL/SKIP line per
//! criterion and exits non-zero if any criterion fails.
//!
//! The training criteria run at full scale (6000/2000 examples, 200 epochs)
//! and take hours on one core. Set `WEAKPARSE_ACCEPTANCE=quick` to run only
//! the fast criteria; the rest are then reported as SKIP, never PASS.
//! `WEAKPARSE_ACCEPTANCE=smoke` runs the full pipeline on a few hundred
//! examples for a few epochs to exercise the plumbing; its training
//! criteria are also reported as SKIP.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use weakparse::commands::{self, TrainJob, TrainOutcome};
use weakparse::formats;
use weakparse_core::nn::params::{Dims, ModelParams};
use weakparse_core::nn::vocab::{encode_source, encode_target};
use weakparse_core::oracle::{brute_force_all, gradient_check, Stencil};
use weakparse_core::rng::{stream, Stream};
use weakparse_core::trainer::{Curriculum, Supervision, TrainConfig};
use weakparse_core::{Denotation, DenotationTable, GrammarMode, LogicalForm, Utterance};

const NB: GrammarMode = GrammarMode::NoBrackets;
const WB: GrammarMode = GrammarMode::WithBrackets;

static SMOKE: OnceLock<bool> = OnceLock::new();

fn smoke() -> bool {
    *SMOKE.get().unwrap_or(&false)
}

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Suite {
    results: Vec<(String, Verdict)>,
    scaled_down: bool,
}

impl Suite {
    fn record(&mut self, id: &str, verdict: Verdict, detail: impl Display) {
        let tag = match verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        };
        println!("[{tag}] {id}: {detail}");
        self.results.push((id.to_string(), verdict));
    }

    fn check(&mut self, id: &str, ok: bool, detail: impl Display) {
        if self.scaled_down {
            let would = if ok { "pass" } else { "fail" };
            return self.record(id, Verdict::Skip, format!("smoke scale, would {would}: {detail}"));
        }
        self.record(id, if ok { Verdict::Pass } else { Verdict::Fail }, detail);
    }
}

fn work_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn base_cases(mode: GrammarMode) -> PathBuf {
    data_file(if mode.with_brackets() { "base_cases_brackets.tsv" } else { "base_cases_flat.tsv" })
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---- 1. gradient oracle ----

fn worst_error(p: &ModelParams, utterance: &str, form: &str, stencil: Stencil, h: f64) -> (f64, f64, usize) {
    let src = encode_source(&utterance.parse::<Utterance>().unwrap());
    let tgt = encode_target(&form.parse::<LogicalForm>().unwrap());
    let (mut rel, mut abs, mut tensors) = (0.0f64, 0.0f64, 0);
    for dropout in [None, Some((0.3, 1))] {
        let checks = gradient_check(p, &src, &tgt, dropout, stencil, h, 1e-6).unwrap();
        tensors = checks.len();
        rel = checks.iter().map(|c| c.max_rel_error).fold(rel, f64::max);
        abs = checks.iter().map(|c| c.max_abs_error).fold(abs, f64::max);
    }
    (rel, abs, tensors)
}

fn gradient_oracle(suite: &mut Suite) {
    let start = Instant::now();
    let p = ModelParams::init_uniform(Dims::with_width(4), 0.05, &mut stream(0, Stream::Init));
    let (worst, abs, tensors) = worst_error(&p, "five plus three times two", "Go [ 5 + ( 3 * 2 ) ] End", Stencil::ThreePoint, 1e-4);
    let elapsed = start.elapsed();
    suite.check(
        "1 gradient oracle",
        worst < 1e-4 && tensors == p.tensor_names().len() && elapsed < Duration::from_secs(60),
        format!(
            "max relative error {worst:.2e} (max absolute {abs:.1e}) over {tensors} tensors, with and without dropout, in {}",
            secs(elapsed)
        ),
    );
    // A longer target has a larger loss, so roundoff in the difference
    // quotient grows; shown for reference, not part of the criterion.
    let long = ("four minus two times three plus one", "Go [ [ 4 - ( 2 * 3 ) ] + 1 ] End");
    let (three, three_abs, _) = worst_error(&p, long.0, long.1, Stencil::ThreePoint, 1e-4);
    let (five, five_abs, _) = worst_error(&p, long.0, long.1, Stencil::FivePoint, 1e-3);
    println!(
        "  note: 13-token target: three-point h=1e-4 {three:.2e} (abs {three_abs:.1e}); five-point h=1e-3 {five:.2e} (abs {five_abs:.1e})"
    );
}

// ---- 2. DP oracle ----

fn dp_oracle(suite: &mut Suite) {
    let start = Instant::now();
    let table = DenotationTable::build(4);
    let mut compared = 0usize;
    let mut mismatches = 0usize;
    for mode in [NB, WB] {
        for size in [2, 3] {
            let brute = brute_force_all(size, mode);
            let ours: BTreeSet<Denotation> = table.denotations(size, mode).collect();
            let theirs: BTreeSet<Denotation> = brute.keys().copied().collect();
            if ours != theirs {
                mismatches += 1;
            }
            for (d, expected) in &brute {
                compared += 1;
                if table.enumerate(*d, size, mode) != *expected {
                    mismatches += 1;
                }
            }
        }
        let brute = brute_force_all(4, mode);
        let mut reachable: Vec<Denotation> = table.denotations(4, mode).collect();
        reachable.shuffle(&mut stream(0, Stream::Dataset));
        for d in reachable.iter().take(50) {
            compared += 1;
            if Some(&table.enumerate(*d, 4, mode)) != brute.get(d) {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    suite.check(
        "2 DP oracle equivalence",
        mismatches == 0 && elapsed < Duration::from_secs(300),
        format!("{compared} (size, denotation) queries in both grammars, {mismatches} mismatches, in {}", secs(elapsed)),
    );
}

// ---- 3. executor fixtures ----

fn executor_fixtures(suite: &mut Suite) {
    let expected = [(3, 1), (-17, 1), (2, 3), (11, 2), (13, 1), (-1, 1), (-9, 4)];
    let mut wrong = Vec::new();
    for mode in [WB, NB] {
        let set = match formats::read_base_cases(&base_cases(mode), mode) {
            Ok(s) => s,
            Err(e) => {
                wrong.push(e.to_string());
                continue;
            }
        };
        for (case, (n, d)) in set.cases().iter().zip(expected) {
            let want = Denotation::new(n, d).unwrap();
            match case.logical_form.execute(mode) {
                Ok(v) if v == want => {}
                other => wrong.push(format!("{} -> {other:?}, expected {want}", case.logical_form)),
            }
        }
        if set.cases().len() != expected.len() {
            wrong.push(format!("{} rows", set.cases().len()));
        }
    }
    suite.check(
        "3 executor fixtures",
        wrong.is_empty(),
        if wrong.is_empty() { "all seven rows exact in both grammars".to_string() } else { wrong.join("; ") },
    );
}

// ---- training runs ----

struct Files {
    train: PathBuf,
    test: PathBuf,
    index_nb: PathBuf,
    index_wb: PathBuf,
}

fn prepare(dir: &Path) -> Files {
    let files = Files {
        train: dir.join("train.tsv"),
        test: dir.join("test.tsv"),
        index_nb: dir.join("index_off.tsv"),
        index_wb: dir.join("index_on.tsv"),
    };
    commands::gen_data(0, 8000, 6000, &files.train, &files.test).unwrap();
    commands::build_index(NB, 4, &files.index_nb).unwrap();
    commands::build_index(WB, 4, &files.index_wb).unwrap();
    files
}

struct Run {
    label: String,
    outcome: TrainOutcome,
    elapsed: Duration,
}

impl Run {
    fn accuracy(&self) -> f64 {
        self.outcome.final_accuracy
    }

    /// Mean returned-correct fraction over the last ten epochs.
    fn late_rcf(&self) -> f64 {
        let tail: Vec<f64> = self.outcome.epochs.iter().rev().take(10).map(|m| m.returned_correct_fraction).collect();
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

struct Setup {
    supervision: Supervision,
    grammar: GrammarMode,
    seed: u64,
    epochs: usize,
    curriculum: Curriculum,
    limit: Option<(usize, usize)>,
}

impl Setup {
    fn full(supervision: Supervision, grammar: GrammarMode, seed: u64) -> Self {
        Setup { supervision, grammar, seed, epochs: 200, curriculum: Curriculum::default(), limit: None }
    }

    fn label(&self) -> String {
        let scale = match self.limit {
            Some((a, b)) => format!("{a}x{b}"),
            None => "full".into(),
        };
        format!("{}-{}-s{}-{scale}", self.supervision, formats::brackets_flag(self.grammar), self.seed)
    }
}

fn train(files: &Files, dir: &Path, mut setup: Setup) -> Run {
    if smoke() {
        setup.epochs = 3;
        setup.curriculum = "3:1,5:1".parse().unwrap();
        setup.limit = Some((300, 100));
    }
    let label = setup.label();
    let config = TrainConfig {
        supervision: setup.supervision,
        grammar: setup.grammar,
        epochs: setup.epochs,
        seed: setup.seed,
        curriculum: setup.curriculum,
        ..TrainConfig::default()
    };
    let index = match setup.supervision {
        Supervision::Gold => None,
        Supervision::Denotation => Some(if setup.grammar.with_brackets() { &files.index_wb } else { &files.index_nb }.clone()),
    };
    let job = TrainJob {
        config,
        train: files.train.clone(),
        test: files.test.clone(),
        index,
        base_cases: Some(base_cases(setup.grammar)),
        metrics: Some(dir.join(format!("{label}.tsv"))),
        checkpoint: None,
        limit_train: setup.limit.map(|l| l.0),
        limit_test: setup.limit.map(|l| l.1),
    };
    let start = Instant::now();
    let outcome = commands::train(&job, |m| {
        if (m.epoch + 1) % 10 == 0 {
            eprintln!(
                "  {label} epoch {:>3}  loss {:.4}  correct-forms {:.3}  accuracy {}  ({})",
                m.epoch + 1,
                m.mean_loss,
                m.returned_correct_fraction,
                m.test_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
                secs(start.elapsed())
            );
        }
    })
    .unwrap();
    let run = Run { label, outcome, elapsed: start.elapsed() };
    println!("  run {}: accuracy {:.4}, {}", run.label, run.accuracy(), secs(run.elapsed));
    run
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn consistency(suite: &mut Suite, runs: &[&Run]) {
    let epochs: usize = runs.iter().map(|r| r.outcome.epochs.len()).sum();
    let targets: usize = runs.iter().flat_map(|r| &r.outcome.epochs).map(|m| m.trained).sum();
    let bad: usize = runs.iter().flat_map(|r| &r.outcome.epochs).map(|m| m.inconsistent_targets).sum();
    suite.check(
        "9 consistency invariant",
        bad == 0 && targets > 0,
        format!("{bad} inconsistent of {targets} denotation-mode targets over {epochs} epochs in {} runs", runs.len()),
    );
}

fn full_scale(suite: &mut Suite, dir: &Path) {
    let files = prepare(dir);
    suite.scaled_down = smoke();

    // 4. gold, no brackets
    let gold_nb = train(&files, dir, Setup::full(Supervision::Gold, NB, 0));
    suite.check("4a gold supervision, no brackets, full", gold_nb.accuracy() >= 0.95, format!("accuracy {} (need >= 95%)", pct(gold_nb.accuracy())));
    let reduced = train(
        &files,
        dir,
        Setup { epochs: 100, curriculum: Curriculum::flat(), limit: Some((1000, 300)), ..Setup::full(Supervision::Gold, NB, 0) },
    );
    suite.check(
        "4b gold supervision, no brackets, reduced",
        reduced.accuracy() >= 0.90 && reduced.elapsed < Duration::from_secs(15 * 60),
        format!("accuracy {} (need >= 90%) in {} (need < 900s)", pct(reduced.accuracy()), secs(reduced.elapsed)),
    );

    // 5. gold, brackets
    let gold_wb = train(&files, dir, Setup::full(Supervision::Gold, WB, 0));
    suite.check("5 gold supervision, brackets", gold_wb.accuracy() >= 0.85, format!("accuracy {} (need >= 85%)", pct(gold_wb.accuracy())));

    // 6. denotation, both grammars, first of three seeds to clear the bar
    let mut den = Vec::new();
    for (grammar, bar) in [(NB, 0.60), (WB, 0.55)] {
        let mut runs: Vec<Run> = Vec::new();
        for seed in 0..3 {
            let run = train(&files, dir, Setup::full(Supervision::Denotation, grammar, seed));
            let cleared = run.accuracy() >= bar;
            runs.push(run);
            if cleared {
                break;
            }
        }
        let passing = runs.iter().position(|r| r.accuracy() >= bar);
        let all: Vec<String> = runs.iter().map(|r| format!("{} {}", r.label, pct(r.accuracy()))).collect();
        suite.check(
            &format!("6 denotation supervision, {}", if grammar.with_brackets() { "brackets" } else { "no brackets" }),
            passing.is_some(),
            format!("{} (need >= {})", all.join(", "), pct(bar)),
        );
        den.push((runs, passing));
    }

    // 7. the no-bracket denotation run of criterion 6
    let (nb_runs, nb_pass) = &den[0];
    let late = &nb_runs[nb_pass.unwrap_or(0)];
    let rcf = late.late_rcf();
    suite.check(
        "7 returned-correct fraction",
        (0.30..=0.60).contains(&rcf) && late.accuracy() > rcf,
        format!("{}: last-10 mean {rcf:.3} (need in [0.30, 0.60]), final accuracy {:.3} (need > mean)", late.label, late.accuracy()),
    );

    // 8. ordering at seed 0
    let (den_nb, den_wb) = (den[0].0[0].accuracy(), den[1].0[0].accuracy());
    let tol = 0.02;
    let pairs = [
        ("gold/off >= denotation/off", gold_nb.accuracy(), den_nb),
        ("gold/on >= denotation/on", gold_wb.accuracy(), den_wb),
        ("gold/off >= gold/on", gold_nb.accuracy(), gold_wb.accuracy()),
        ("denotation/off >= denotation/on", den_nb, den_wb),
    ];
    let broken: Vec<String> = pairs.iter().filter(|p| p.1 + tol < p.2).map(|p| format!("{} ({} vs {})", p.0, pct(p.1), pct(p.2))).collect();
    suite.check(
        "8 ordering at seed 0",
        broken.is_empty(),
        if broken.is_empty() { "all four orderings hold within 2 points".to_string() } else { format!("violated: {}", broken.join("; ")) },
    );

    let mut den_runs: Vec<&Run> = Vec::new();
    for (runs, _) in &den {
        den_runs.extend(runs.iter());
    }
    consistency(suite, &den_runs);

    let mut metrics: Vec<PathBuf> = [&gold_nb, &gold_wb].iter().map(|r| dir.join(format!("{}.tsv", r.label))).collect();
    metrics.extend(den_runs.iter().map(|r| dir.join(format!("{}.tsv", r.label))));
    let summary = commands::report(&metrics, Some(&dir.join("all_runs.csv"))).unwrap();
    println!("\n{summary}");
}

// ---- 10. determinism ----

fn cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_weakparse"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism(suite: &mut Suite, dir: &Path) {
    let dir = dir.join("determinism");
    std::fs::create_dir_all(&dir).unwrap();
    let start = Instant::now();
    let mut ok = cli(&dir, &["gen-data", "--seed", "11", "--total", "800", "--train", "600", "--train-out", "tr", "--test-out", "te"]);
    ok &= cli(&dir, &["build-index", "--brackets", "off", "--out", "ix_off"]);
    ok &= cli(&dir, &["build-index", "--brackets", "on", "--out", "ix_on"]);
    let nb_cases = base_cases(NB);
    let wb_cases = base_cases(WB);
    let mut compared = 0;
    let mut differing = Vec::new();
    for (sup, brackets, index, cases) in [
        ("gold", "off", "ix_off", &nb_cases),
        ("denotation", "off", "ix_off", &nb_cases),
        ("denotation", "on", "ix_on", &wb_cases),
    ] {
        for rep in ["a", "b"] {
            ok &= cli(
                &dir,
                &[
                    "train", "--supervision", sup, "--brackets", brackets, "--seed", "5", "--epochs", "6", "--curriculum", "3:1,5:1",
                    "--train", "tr", "--test", "te", "--index", index, "--base-cases", cases.to_str().unwrap(),
                    "--metrics", &format!("{sup}-{brackets}-{rep}.tsv"), "--checkpoint", &format!("{sup}-{brackets}-{rep}.ckpt"), "--quiet",
                ],
            );
        }
        for ext in ["tsv", "ckpt"] {
            let read = |rep: &str| std::fs::read(dir.join(format!("{sup}-{brackets}-{rep}.{ext}"))).unwrap_or_default();
            compared += 1;
            if read("a").is_empty() || read("a") != read("b") {
                differing.push(format!("{sup}-{brackets}.{ext}"));
            }
        }
    }
    suite.check(
        "10 determinism",
        ok && differing.is_empty(),
        format!(
            "{compared} file pairs from repeated CLI runs (600 train, 6 epochs), {} differ, in {}",
            differing.len(),
            secs(start.elapsed())
        ),
    );
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture passed through by cargo are ignored
    let mode = std::env::var("WEAKPARSE_ACCEPTANCE").unwrap_or_default();
    let quick = mode == "quick";
    SMOKE.set(mode == "smoke").unwrap();
    let dir = work_dir();
    let mut suite = Suite { results: Vec::new(), scaled_down: false };

    gradient_oracle(&mut suite);
    dp_oracle(&mut suite);
    executor_fixtures(&mut suite);
    determinism(&mut suite, &dir);
    if quick {
        for id in ["4 gold, no brackets", "5 gold, brackets", "6 denotation", "7 returned-correct fraction", "8 ordering", "9 consistency invariant"] {
            suite.record(id, Verdict::Skip, "full-scale training disabled by WEAKPARSE_ACCEPTANCE=quick");
        }
    } else {
        full_scale(&mut suite, &dir);
    }

    let failed: Vec<&str> = suite.results.iter().filter(|r| r.1 == Verdict::Fail).map(|r| r.0.as_str()).collect();
    let passed = suite.results.iter().filter(|r| r.1 == Verdict::Pass).count();
    let skipped = suite.results.iter().filter(|r| r.1 == Verdict::Skip).count();
    println!("\nacceptance: {passed} passed, {} failed, {skipped} skipped", failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
