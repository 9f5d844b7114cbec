//! On-disk formats. Everything is line-oriented UTF-8 text except the
//! checkpoint, which is little-endian binary.
//!
//! * dataset: `utterance \t bracketed form \t flat form \t num/den`
//! * index: a `#` header naming the grammar and sizes, then
//!   `size \t num/den \t form ; form ; ...`
//! * base cases: `utterance <eos> \t form \t value`, where the value is an
//!   exact `num/den` or a decimal rounded to three places
//! * metrics: a `#` header, then `epoch \t loss \t rcf \t accuracy \t skipped`

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;
use weakparse_core::dataset::Record;
use weakparse_core::filter::BaseCase;
use weakparse_core::nn::params::{Dims, ModelParams};
use weakparse_core::nn::vocab::{source_hash, target_hash};
use weakparse_core::trainer::{EpochMetrics, Supervision};
use weakparse_core::{BaseCaseSet, CandidateIndex, Denotation, GrammarMode, LogicalForm, Utterance};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

impl FormatError {
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Non-empty lines that are not `#` comments, numbered from 1.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn fields<'a, const N: usize>(path: &Path, line: usize, text: &'a str) -> Result<[&'a str; N], FormatError> {
    let parts: Vec<&str> = text.split('\t').collect();
    parts.try_into().map_err(|p: Vec<&str>| FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("expected {N} tab-separated fields, found {}", p.len()),
    })
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, what: &str, text: &str) -> Result<T, FormatError>
where
    T::Err: std::fmt::Display,
{
    text.trim().parse().map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad {what} `{text}`: {e}"),
    })
}

pub fn brackets_flag(mode: GrammarMode) -> &'static str {
    if mode.with_brackets() {
        "on"
    } else {
        "off"
    }
}

pub fn parse_brackets_flag(s: &str) -> Option<GrammarMode> {
    match s {
        "on" => Some(GrammarMode::WithBrackets),
        "off" => Some(GrammarMode::NoBrackets),
        _ => None,
    }
}

// ---- dataset ----

pub fn format_dataset(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{}\t{}\t{}\t{}", r.utterance, r.bracketed, r.flat, r.denotation).unwrap();
    }
    out
}

pub fn write_dataset(path: &Path, records: &[Record]) -> Result<(), FormatError> {
    write_text(path, &format_dataset(records))
}

/// Loads and validates every record: both forms must describe the
/// utterance and execute to the stored denotation.
pub fn read_dataset(path: &Path) -> Result<Vec<Record>, FormatError> {
    let text = read_text(path)?;
    data_lines(&text)
        .map(|(n, line)| {
            let [u, b, f, d] = fields::<4>(path, n, line)?;
            let record = Record {
                utterance: parse_field::<Utterance>(path, n, "utterance", u)?,
                bracketed: parse_field::<LogicalForm>(path, n, "bracketed form", b)?,
                flat: parse_field::<LogicalForm>(path, n, "flat form", f)?,
                denotation: parse_field::<Denotation>(path, n, "denotation", d)?,
            };
            record.validate().map_err(|e| FormatError::Parse {
                path: path.to_path_buf(),
                line: n,
                message: e.to_string(),
            })?;
            Ok(record)
        })
        .collect()
}

// ---- candidate index ----

const INDEX_MAGIC: &str = "# weakparse index";

pub fn format_index(index: &CandidateIndex) -> String {
    let sizes: Vec<String> = index.sizes().map(|s| s.to_string()).collect();
    let mut out = format!("{INDEX_MAGIC}\tbrackets={}\tsizes={}\n", brackets_flag(index.mode()), sizes.join(","));
    for (size, d, forms) in index.records() {
        let joined: Vec<String> = forms.iter().map(|f| f.to_string()).collect();
        writeln!(out, "{size}\t{d}\t{}", joined.join(" ; ")).unwrap();
    }
    out
}

pub fn write_index(path: &Path, index: &CandidateIndex) -> Result<(), FormatError> {
    write_text(path, &format_index(index))
}

/// Loads an index, re-checking every candidate against its key.
pub fn read_index(path: &Path) -> Result<CandidateIndex, FormatError> {
    let text = read_text(path)?;
    let invalid = |message: String| FormatError::Invalid { path: path.to_path_buf(), message };
    let header = text.lines().next().unwrap_or_default();
    let [magic, mode, sizes] = fields::<3>(path, 1, header)?;
    if magic != INDEX_MAGIC {
        return Err(invalid("not an index file".into()));
    }
    let mode = mode
        .strip_prefix("brackets=")
        .and_then(parse_brackets_flag)
        .ok_or_else(|| invalid(format!("bad grammar field `{mode}`")))?;
    let mut index = CandidateIndex::new(mode);
    for s in sizes.strip_prefix("sizes=").unwrap_or_default().split(',').filter(|s| !s.is_empty()) {
        index.declare_size(parse_field(path, 1, "size", s)?);
    }
    for (n, line) in data_lines(&text) {
        let [size, d, forms] = fields::<3>(path, n, line)?;
        let forms = forms
            .split(" ; ")
            .map(|f| parse_field::<LogicalForm>(path, n, "logical form", f))
            .collect::<Result<Vec<_>, _>>()?;
        index
            .insert_record(parse_field(path, n, "size", size)?, parse_field(path, n, "denotation", d)?, forms)
            .map_err(|e| FormatError::Parse { path: path.to_path_buf(), line: n, message: e.to_string() })?;
    }
    Ok(index)
}

// ---- base cases ----

pub fn format_base_cases(set: &BaseCaseSet) -> String {
    let mut out = String::new();
    for case in set.cases() {
        writeln!(out, "{} <eos>\t{}\t{}", case.utterance, case.logical_form, case.denotation.decimal()).unwrap();
    }
    out
}

pub fn write_base_cases(path: &Path, set: &BaseCaseSet) -> Result<(), FormatError> {
    write_text(path, &format_base_cases(set))
}

/// Loads base cases for one grammar. Each form is executed; the result must
/// equal an exact recorded value or round to a recorded decimal.
pub fn read_base_cases(path: &Path, mode: GrammarMode) -> Result<BaseCaseSet, FormatError> {
    let text = read_text(path)?;
    let mut cases = Vec::new();
    for (n, line) in data_lines(&text) {
        let parse_err = |message: String| FormatError::Parse { path: path.to_path_buf(), line: n, message };
        let [u, form, value] = fields::<3>(path, n, line)?;
        let utterance: Utterance = parse_field(path, n, "utterance", u)?;
        let form: LogicalForm = parse_field(path, n, "logical form", form)?;
        let actual = form.execute(mode).map_err(|e| parse_err(format!("`{form}`: {e}")))?;
        let value = value.trim();
        let matches = match value.parse::<Denotation>() {
            Ok(exact) => exact == actual,
            Err(_) => actual.decimal() == value,
        };
        if !matches {
            return Err(parse_err(format!("`{form}` executes to {actual}, recorded {value}")));
        }
        cases.push(BaseCase::new(utterance, form, actual, mode).map_err(|e| parse_err(e.to_string()))?);
    }
    BaseCaseSet::new(mode, cases).map_err(|e| FormatError::Invalid { path: path.to_path_buf(), message: e.to_string() })
}

// ---- checkpoint ----

const CHECKPOINT_MAGIC: &[u8; 8] = b"WKPSCKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters plus what is needed to use them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub grammar: GrammarMode,
    pub params: ModelParams,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let d = ckpt.params.dims;
    let mut out = Vec::with_capacity(64 + 8 * ckpt.params.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [d.src_vocab, d.tgt_vocab, d.embed, d.hidden, d.layers, d.attention] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&source_hash().to_le_bytes());
    out.extend_from_slice(&target_hash().to_le_bytes());
    out.extend_from_slice(&ckpt.seed.to_le_bytes());
    out.push(ckpt.grammar.with_brackets() as u8);
    let tensors = ckpt.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let (head, rest) = self.bytes.split_first_chunk::<N>()?;
        self.bytes = rest;
        Some(*head)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take().map(u64::from_le_bytes)
    }
}

/// Decodes a checkpoint. With `expected` set, models of other sizes are
/// rejected.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<Dims>) -> Result<Checkpoint, String> {
    let mut r = Reader { bytes };
    let truncated = || "truncated checkpoint".to_string();
    if r.take::<8>().as_ref() != Some(CHECKPOINT_MAGIC) {
        return Err("not a checkpoint file".into());
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let mut dims = [0usize; 6];
    for v in &mut dims {
        *v = r.u32().ok_or_else(truncated)? as usize;
    }
    let [src_vocab, tgt_vocab, embed, hidden, layers, attention] = dims;
    let dims = Dims { src_vocab, tgt_vocab, embed, hidden, layers, attention };
    if let Some(want) = expected {
        if want != dims {
            return Err(format!("checkpoint dimensions {dims:?} differ from expected {want:?}"));
        }
    }
    if dims.src_vocab != Dims::default().src_vocab || dims.tgt_vocab != Dims::default().tgt_vocab {
        return Err("checkpoint vocabulary sizes differ from this build".into());
    }
    if r.u64() != Some(source_hash()) || r.u64() != Some(target_hash()) {
        return Err("checkpoint vocabulary differs from this build".into());
    }
    let seed = r.u64().ok_or_else(truncated)?;
    let grammar = match r.take::<1>().ok_or_else(truncated)?[0] {
        0 => GrammarMode::NoBrackets,
        1 => GrammarMode::WithBrackets,
        b => return Err(format!("bad grammar flag {b}")),
    };
    if dims.layers == 0 || dims.hidden == 0 || dims.embed == 0 || dims.attention == 0 || dims.layers > 64 {
        return Err(format!("implausible dimensions {dims:?}"));
    }
    let mut params = ModelParams::zeros(dims);
    let count = r.u32().ok_or_else(truncated)? as usize;
    let names = params.tensor_names();
    if count != names.len() {
        return Err(format!("expected {} tensors, found {count}", names.len()));
    }
    for (t, name) in params.tensors_mut().into_iter().zip(names) {
        let (rows, cols) = (r.u32().ok_or_else(truncated)? as usize, r.u32().ok_or_else(truncated)? as usize);
        if (rows, cols) != (t.rows, t.cols) {
            return Err(format!("tensor {name} is {rows}x{cols}, expected {}x{}", t.rows, t.cols));
        }
        for v in &mut t.data {
            *v = f64::from_le_bytes(r.take().ok_or_else(truncated)?);
        }
    }
    if !r.bytes.is_empty() {
        return Err("trailing bytes after checkpoint".into());
    }
    Ok(Checkpoint { seed, grammar, params })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), FormatError> {
    fs::write(path, encode_checkpoint(ckpt)).map_err(io_err(path))
}

pub fn read_checkpoint(path: &Path, expected: Option<Dims>) -> Result<Checkpoint, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_checkpoint(&bytes, expected).map_err(|message| FormatError::Invalid { path: path.to_path_buf(), message })
}

// ---- metrics ----

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub returned_correct_fraction: f64,
    pub test_accuracy: Option<f64>,
    pub skipped: usize,
}

impl From<&EpochMetrics> for MetricsRow {
    fn from(m: &EpochMetrics) -> Self {
        MetricsRow {
            epoch: m.epoch,
            mean_loss: m.mean_loss,
            returned_correct_fraction: m.returned_correct_fraction,
            test_accuracy: m.test_accuracy,
            skipped: m.skipped,
        }
    }
}

impl MetricsRow {
    /// Floats use the shortest representation that reads back exactly.
    pub fn to_line(&self) -> String {
        let acc = self.test_accuracy.map_or_else(|| "-".to_string(), |a| a.to_string());
        format!("{}\t{}\t{}\t{}\t{}", self.epoch, self.mean_loss, self.returned_correct_fraction, acc, self.skipped)
    }
}

/// Which experiment a metrics file belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunInfo {
    pub supervision: Supervision,
    pub grammar: GrammarMode,
    pub seed: u64,
}

impl RunInfo {
    fn header(&self) -> String {
        format!(
            "# supervision={}\tbrackets={}\tseed={}",
            self.supervision,
            brackets_flag(self.grammar),
            self.seed
        )
    }

    fn parse_header(line: &str) -> Option<RunInfo> {
        let mut sup = None;
        let mut grammar = None;
        let mut seed = None;
        for part in line.strip_prefix("# ")?.split('\t') {
            let (k, v) = part.split_once('=')?;
            match k {
                "supervision" => sup = v.parse().ok(),
                "brackets" => grammar = parse_brackets_flag(v),
                "seed" => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(RunInfo { supervision: sup?, grammar: grammar?, seed: seed? })
    }
}

/// Append-only metrics stream, flushed after every epoch.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, info: RunInfo) -> Result<Self, FormatError> {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut w = MetricsWriter { path: path.to_path_buf(), out: BufWriter::new(file) };
        w.line(&info.header())?;
        Ok(w)
    }

    fn line(&mut self, text: &str) -> Result<(), FormatError> {
        writeln!(self.out, "{text}").and_then(|_| self.out.flush()).map_err(io_err(&self.path))
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<(), FormatError> {
        self.line(&row.to_line())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub info: Option<RunInfo>,
    pub rows: Vec<MetricsRow>,
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile, FormatError> {
    let text = read_text(path)?;
    let info = text.lines().next().and_then(RunInfo::parse_header);
    let rows = data_lines(&text)
        .map(|(n, line)| {
            let [e, l, r, a, s] = fields::<5>(path, n, line)?;
            Ok(MetricsRow {
                epoch: parse_field(path, n, "epoch", e)?,
                mean_loss: parse_field(path, n, "loss", l)?,
                returned_correct_fraction: parse_field(path, n, "returned-correct fraction", r)?,
                test_accuracy: if a == "-" { None } else { Some(parse_field(path, n, "accuracy", a)?) },
                skipped: parse_field(path, n, "skipped count", s)?,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(MetricsFile { info, rows })
}
