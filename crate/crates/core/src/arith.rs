//! Utterances, logical forms and exact evaluation.
//!
//! Three representations of the same arithmetic expression live here:
//!
//! * an [`Utterance`] - English words, `five plus three times two <eos>`;
//! * a [`FlatExpr`] - the alternating operand/operator list behind it;
//! * an [`ExprTree`] - the binary tree that fixes evaluation order, which is
//!   what a logical form means.
//!
//! Logical forms are written as token sequences framed by `Go`/`End`, either
//! with brackets ([`GrammarMode::WithBrackets`]) or relying on operator
//! precedence ([`GrammarMode::NoBrackets`]).

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};
use thiserror::Error;

/// Padded length of an encoder input: seven words plus `<eos>`.
pub const SOURCE_LEN: usize = 8;
/// Padded length of a decoder target, `Go` and `End` included.
pub const TARGET_LEN: usize = 16;
/// Largest operand count an utterance can carry.
pub const MAX_OPERANDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("unknown word `{0}`")]
    UnknownWord(String),
    #[error("unknown logical form symbol `{0}`")]
    UnknownSymbol(String),
    #[error("invalid utterance: {0}")]
    InvalidUtterance(&'static str),
    #[error("malformed logical form: {0}")]
    Malformed(&'static str),
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("invalid denotation `{0}`")]
    InvalidDenotation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
}

impl Operator {
    pub const ALL: [Operator; 4] = [Operator::Add, Operator::Sub, Operator::Mul, Operator::Div];

    pub fn precedence(self) -> u8 {
        match self {
            Operator::Add | Operator::Sub => 1,
            Operator::Mul | Operator::Div => 2,
        }
    }

    pub fn is_multiplicative(self) -> bool {
        self.precedence() == 2
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "+",
            Operator::Sub => "-",
            Operator::Mul => "*",
            Operator::Div => "/",
        }
    }

    pub fn word(self) -> Word {
        match self {
            Operator::Add => Word::Plus,
            Operator::Sub => Word::Minus,
            Operator::Mul => Word::Times,
            Operator::Div => Word::Divide,
        }
    }

    /// Applies the operator to two denotations.
    pub fn apply(self, lhs: Denotation, rhs: Denotation) -> Result<Denotation, ArithError> {
        let (a, b) = (lhs.0, rhs.0);
        let out = match self {
            Operator::Add => a.checked_add(&b),
            Operator::Sub => a.checked_sub(&b),
            Operator::Mul => a.checked_mul(&b),
            Operator::Div => {
                if b.is_zero() {
                    return Err(ArithError::DivisionByZero);
                }
                a.checked_div(&b)
            }
        };
        out.map(Denotation).ok_or(ArithError::Overflow)
    }
}

/// A word of the closed source vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Word {
    One,
    Two,
    Three,
    Four,
    Five,
    Plus,
    Minus,
    Times,
    Divide,
    Eos,
    Pad,
}

impl Word {
    pub const ALL: [Word; 11] = [
        Word::One,
        Word::Two,
        Word::Three,
        Word::Four,
        Word::Five,
        Word::Plus,
        Word::Minus,
        Word::Times,
        Word::Divide,
        Word::Eos,
        Word::Pad,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Word::One => "one",
            Word::Two => "two",
            Word::Three => "three",
            Word::Four => "four",
            Word::Five => "five",
            Word::Plus => "plus",
            Word::Minus => "minus",
            Word::Times => "times",
            Word::Divide => "divide",
            Word::Eos => "<eos>",
            Word::Pad => "PAD",
        }
    }

    pub fn number(n: u8) -> Option<Word> {
        Some(match n {
            1 => Word::One,
            2 => Word::Two,
            3 => Word::Three,
            4 => Word::Four,
            5 => Word::Five,
            _ => return None,
        })
    }

    pub fn as_atom(self) -> Option<Atom> {
        Some(match self {
            Word::One => Atom::Num(1),
            Word::Two => Atom::Num(2),
            Word::Three => Atom::Num(3),
            Word::Four => Atom::Num(4),
            Word::Five => Atom::Num(5),
            Word::Plus => Atom::Op(Operator::Add),
            Word::Minus => Atom::Op(Operator::Sub),
            Word::Times => Atom::Op(Operator::Mul),
            Word::Divide => Atom::Op(Operator::Div),
            Word::Eos | Word::Pad => return None,
        })
    }

    /// `<eos>` and `PAD` frame a sentence but carry no content.
    pub fn is_framing(self) -> bool {
        matches!(self, Word::Eos | Word::Pad)
    }
}

impl FromStr for Word {
    type Err = ArithError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "⟨eos⟩" | "<EOS>" => return Ok(Word::Eos),
            _ => {}
        }
        Word::ALL
            .iter()
            .copied()
            .find(|w| w.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ArithError::UnknownWord(s.to_string()))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One element of an alternating operand/operator list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Num(u8),
    Op(Operator),
}

/// A validated alternating list `n op n op ... n` with operands in 1..=5.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlatExpr(Vec<Atom>);

impl FlatExpr {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, ArithError> {
        if atoms.len().is_multiple_of(2) {
            return Err(ArithError::Malformed("flat expression must have odd length"));
        }
        for (i, atom) in atoms.iter().enumerate() {
            match (i % 2, atom) {
                (0, Atom::Num(n)) if (1..=5).contains(n) => {}
                (0, Atom::Num(_)) => return Err(ArithError::Malformed("operand outside 1..=5")),
                (1, Atom::Op(_)) => {}
                _ => return Err(ArithError::Malformed("operands and operators must alternate")),
            }
        }
        Ok(FlatExpr(atoms))
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.0
    }

    pub fn operand_count(&self) -> usize {
        self.0.len().div_ceil(2)
    }
}

impl fmt::Display for FlatExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, atom) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match atom {
                Atom::Num(n) => write!(f, "{n}")?,
                Atom::Op(op) => f.write_str(op.symbol())?,
            }
        }
        Ok(())
    }
}

/// The natural-language input: alternating number and operator words.
///
/// Only the content words are stored; `<eos>` and padding are produced by
/// [`Utterance::padded`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Utterance {
    words: Vec<Word>,
}

impl Utterance {
    /// Builds an utterance from a full token sequence: content, exactly one
    /// `<eos>`, then optional `PAD` up to [`SOURCE_LEN`].
    pub fn from_tokens(tokens: &[Word]) -> Result<Self, ArithError> {
        let eos = tokens
            .iter()
            .position(|w| *w == Word::Eos)
            .ok_or(ArithError::InvalidUtterance("missing <eos>"))?;
        if tokens.len() > SOURCE_LEN {
            return Err(ArithError::InvalidUtterance("longer than the padded length"));
        }
        if tokens[eos + 1..].iter().any(|w| *w != Word::Pad) {
            return Err(ArithError::InvalidUtterance("only PAD may follow <eos>"));
        }
        Self::from_content(&tokens[..eos])
    }

    /// Builds an utterance from its content words alone.
    pub fn from_content(words: &[Word]) -> Result<Self, ArithError> {
        if !matches!(words.len(), 3 | 5 | 7) {
            return Err(ArithError::InvalidUtterance("content length must be 3, 5 or 7"));
        }
        for (i, w) in words.iter().enumerate() {
            match (i % 2, w.as_atom()) {
                (0, Some(Atom::Num(_))) | (1, Some(Atom::Op(_))) => {}
                (_, None) => return Err(ArithError::InvalidUtterance("framing token inside content")),
                _ => {
                    return Err(ArithError::InvalidUtterance(
                        "numbers and operators must alternate",
                    ))
                }
            }
        }
        Ok(Utterance { words: words.to_vec() })
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Content words followed by `<eos>`.
    pub fn tokens(&self) -> Vec<Word> {
        let mut out = self.words.clone();
        out.push(Word::Eos);
        out
    }

    /// Content, `<eos>`, then `PAD` up to [`SOURCE_LEN`].
    pub fn padded(&self) -> [Word; SOURCE_LEN] {
        let mut out = [Word::Pad; SOURCE_LEN];
        out[..self.words.len()].copy_from_slice(&self.words);
        out[self.words.len()] = Word::Eos;
        out
    }

    pub fn operand_count(&self) -> usize {
        self.words.len().div_ceil(2)
    }

    pub fn flat(&self) -> FlatExpr {
        // content was validated at construction
        FlatExpr(self.words.iter().filter_map(|w| w.as_atom()).collect())
    }
}

impl FromStr for Utterance {
    type Err = ArithError;

    /// Parses space-separated words; a trailing `<eos>` and `PAD`s are optional.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut tokens = s.split_whitespace().map(Word::from_str).collect::<Result<Vec<_>, _>>()?;
        if !tokens.contains(&Word::Eos) {
            if tokens.contains(&Word::Pad) {
                return Err(ArithError::InvalidUtterance("PAD before <eos>"));
            }
            tokens.push(Word::Eos);
        }
        Utterance::from_tokens(&tokens)
    }
}

impl fmt::Display for Utterance {
    /// Content words only, space separated.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(w.as_str())?;
        }
        Ok(())
    }
}

/// Exact value of a logical form, always in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Denotation(Ratio<i64>);

impl Denotation {
    pub fn new(numer: i64, denom: i64) -> Result<Self, ArithError> {
        if denom == 0 {
            return Err(ArithError::DivisionByZero);
        }
        Ok(Denotation(Ratio::new(numer, denom)))
    }

    pub fn integer(n: i64) -> Self {
        Denotation(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// Decimal rendering rounded to three places with trailing zeros
    /// trimmed (`-17.0`, `0.667`, `-2.25`).
    pub fn decimal(&self) -> String {
        let mut s = alloc::format!("{:.3}", self.to_f64());
        while s.ends_with('0') && !s.ends_with(".0") {
            s.pop();
        }
        if s == "-0.0" {
            s.remove(0);
        }
        s
    }
}

impl fmt::Display for Denotation {
    /// `num/den`, or the bare integer when the denominator is one.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Denotation {
    type Err = ArithError;

    /// Accepts `n` or `n/d` with `d > 0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ArithError::InvalidDenotation(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: i64 = n.parse().map_err(|_| bad())?;
        let d: i64 = d.parse().map_err(|_| bad())?;
        if d <= 0 {
            return Err(bad());
        }
        Denotation::new(n, d)
    }
}

/// A binary expression tree: the meaning of a logical form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExprTree {
    Leaf(u8),
    Node(Operator, Box<ExprTree>, Box<ExprTree>),
}

impl ExprTree {
    pub fn node(op: Operator, left: ExprTree, right: ExprTree) -> Self {
        ExprTree::Node(op, Box::new(left), Box::new(right))
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ExprTree::Leaf(_) => 1,
            ExprTree::Node(_, l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            ExprTree::Leaf(_) => 0,
            ExprTree::Node(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// In-order operand/operator sequence, brackets dropped.
    pub fn flatten(&self) -> FlatExpr {
        fn walk(t: &ExprTree, out: &mut Vec<Atom>) {
            match t {
                ExprTree::Leaf(n) => out.push(Atom::Num(*n)),
                ExprTree::Node(op, l, r) => {
                    walk(l, out);
                    out.push(Atom::Op(*op));
                    walk(r, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        FlatExpr(out)
    }
}

/// Bottom-up exact evaluation. The value of a node depends only on its
/// operator and the values of its children.
pub fn evaluate(tree: &ExprTree) -> Result<Denotation, ArithError> {
    match tree {
        ExprTree::Leaf(n) => Ok(Denotation::integer(i64::from(*n))),
        ExprTree::Node(op, l, r) => op.apply(evaluate(l)?, evaluate(r)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GrammarMode {
    WithBrackets,
    NoBrackets,
}

impl GrammarMode {
    pub fn with_brackets(self) -> bool {
        self == GrammarMode::WithBrackets
    }
}

/// A symbol of the closed logical form vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LfToken {
    Pad,
    Go,
    End,
    OpenSquare,
    CloseSquare,
    OpenParen,
    CloseParen,
    Digit(u8),
    Op(Operator),
}

impl LfToken {
    /// Every symbol, `PAD` first.
    pub const ALL: [LfToken; 16] = [
        LfToken::Pad,
        LfToken::Go,
        LfToken::End,
        LfToken::OpenSquare,
        LfToken::CloseSquare,
        LfToken::OpenParen,
        LfToken::CloseParen,
        LfToken::Digit(1),
        LfToken::Digit(2),
        LfToken::Digit(3),
        LfToken::Digit(4),
        LfToken::Digit(5),
        LfToken::Op(Operator::Add),
        LfToken::Op(Operator::Sub),
        LfToken::Op(Operator::Mul),
        LfToken::Op(Operator::Div),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LfToken::Pad => "PAD",
            LfToken::Go => "Go",
            LfToken::End => "End",
            LfToken::OpenSquare => "[",
            LfToken::CloseSquare => "]",
            LfToken::OpenParen => "(",
            LfToken::CloseParen => ")",
            LfToken::Digit(1) => "1",
            LfToken::Digit(2) => "2",
            LfToken::Digit(3) => "3",
            LfToken::Digit(4) => "4",
            LfToken::Digit(5) => "5",
            LfToken::Digit(_) => "?",
            LfToken::Op(op) => op.symbol(),
        }
    }

    pub fn is_framing(self) -> bool {
        matches!(self, LfToken::Pad | LfToken::Go | LfToken::End)
    }

    pub fn is_bracket(self) -> bool {
        matches!(
            self,
            LfToken::OpenSquare | LfToken::CloseSquare | LfToken::OpenParen | LfToken::CloseParen
        )
    }

    fn from_atom(atom: Atom) -> LfToken {
        match atom {
            Atom::Num(n) => LfToken::Digit(n),
            Atom::Op(op) => LfToken::Op(op),
        }
    }
}

impl FromStr for LfToken {
    type Err = ArithError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LfToken::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ArithError::UnknownSymbol(s.to_string()))
    }
}

impl fmt::Display for LfToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A logical form token sequence, normally framed `Go ... End`.
///
/// The sequence itself is not validated; use [`parse_logical_form`] to
/// recover its tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogicalForm(pub Vec<LfToken>);

impl LogicalForm {
    pub fn tokens(&self) -> &[LfToken] {
        &self.0
    }

    /// `Go`, the flat sequence, `End`.
    pub fn from_flat(flat: &FlatExpr) -> Self {
        let mut out = Vec::with_capacity(flat.0.len() + 2);
        out.push(LfToken::Go);
        out.extend(flat.0.iter().copied().map(LfToken::from_atom));
        out.push(LfToken::End);
        LogicalForm(out)
    }

    pub fn parse(&self, mode: GrammarMode) -> Result<ExprTree, ArithError> {
        parse_logical_form(&self.0, mode)
    }

    /// Parses and evaluates in one go.
    pub fn execute(&self, mode: GrammarMode) -> Result<Denotation, ArithError> {
        evaluate(&self.parse(mode)?)
    }
}

impl fmt::Display for LogicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for LogicalForm {
    type Err = ArithError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split_whitespace()
            .map(LfToken::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map(LogicalForm)
    }
}

/// Writes the tree as a framed token sequence.
///
/// With brackets, additive nodes are wrapped in `[ ]` and multiplicative
/// nodes in `( )`; without brackets the in-order sequence is emitted as is.
pub fn linearize(tree: &ExprTree, mode: GrammarMode) -> LogicalForm {
    fn walk(t: &ExprTree, brackets: bool, out: &mut Vec<LfToken>) {
        match t {
            ExprTree::Leaf(n) => out.push(LfToken::Digit(*n)),
            ExprTree::Node(op, l, r) => {
                let (open, close) = if op.is_multiplicative() {
                    (LfToken::OpenParen, LfToken::CloseParen)
                } else {
                    (LfToken::OpenSquare, LfToken::CloseSquare)
                };
                if brackets {
                    out.push(open);
                }
                walk(l, brackets, out);
                out.push(LfToken::Op(*op));
                walk(r, brackets, out);
                if brackets {
                    out.push(close);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(TARGET_LEN);
    out.push(LfToken::Go);
    walk(tree, mode.with_brackets(), &mut out);
    out.push(LfToken::End);
    LogicalForm(out)
}

/// Recovers the tree behind a token sequence.
///
/// Accepts arbitrary decoder output: the sequence must be framed by `Go` and
/// `End` (only `PAD` may follow `End`) and contain at least one operator.
pub fn parse_logical_form(seq: &[LfToken], mode: GrammarMode) -> Result<ExprTree, ArithError> {
    let body = frame_body(seq)?;
    match mode {
        GrammarMode::WithBrackets => {
            let mut pos = 0;
            let tree = parse_bracketed(body, &mut pos)?;
            if pos != body.len() {
                return Err(ArithError::Malformed("trailing tokens"));
            }
            if tree.leaf_count() < 2 {
                return Err(ArithError::Malformed("a logical form needs an operator"));
            }
            Ok(tree)
        }
        GrammarMode::NoBrackets => {
            let atoms = body
                .iter()
                .map(|t| match t {
                    LfToken::Digit(n) => Ok(Atom::Num(*n)),
                    LfToken::Op(op) => Ok(Atom::Op(*op)),
                    _ => Err(ArithError::Malformed("unexpected symbol in flat form")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            precedence_parse(&atoms)
        }
    }
}

fn frame_body(seq: &[LfToken]) -> Result<&[LfToken], ArithError> {
    if seq.first() != Some(&LfToken::Go) {
        return Err(ArithError::Malformed("missing Go"));
    }
    let end = seq
        .iter()
        .position(|t| *t == LfToken::End)
        .ok_or(ArithError::Malformed("missing End"))?;
    if seq[end + 1..].iter().any(|t| *t != LfToken::Pad) {
        return Err(ArithError::Malformed("tokens after End"));
    }
    Ok(&seq[1..end])
}

fn parse_bracketed(body: &[LfToken], pos: &mut usize) -> Result<ExprTree, ArithError> {
    let tok = *body.get(*pos).ok_or(ArithError::Malformed("unexpected end of form"))?;
    *pos += 1;
    let close = match tok {
        LfToken::Digit(n) => return Ok(ExprTree::Leaf(n)),
        LfToken::OpenSquare => LfToken::CloseSquare,
        LfToken::OpenParen => LfToken::CloseParen,
        _ => return Err(ArithError::Malformed("expected operand or opening bracket")),
    };
    let left = parse_bracketed(body, pos)?;
    let op = match body.get(*pos) {
        Some(LfToken::Op(op)) => *op,
        _ => return Err(ArithError::Malformed("expected operator")),
    };
    *pos += 1;
    if op.is_multiplicative() != (close == LfToken::CloseParen) {
        return Err(ArithError::Malformed("bracket class does not match operator"));
    }
    let right = parse_bracketed(body, pos)?;
    if body.get(*pos) != Some(&close) {
        return Err(ArithError::Malformed("unmatched bracket"));
    }
    *pos += 1;
    Ok(ExprTree::node(op, left, right))
}

/// Builds the unique tree for an alternating list under standard precedence:
/// `*` and `/` bind tighter, and each level associates to the left.
pub fn precedence_parse(flat: &[Atom]) -> Result<ExprTree, ArithError> {
    let flat = FlatExpr::new(flat.to_vec())?;
    if flat.operand_count() < 2 {
        return Err(ArithError::Malformed("a logical form needs an operator"));
    }
    let atoms = flat.atoms();
    let num = |i: usize| match atoms[i] {
        Atom::Num(n) => ExprTree::Leaf(n),
        Atom::Op(_) => unreachable!("validated alternation"),
    };
    let op_at = |i: usize| match atoms[i] {
        Atom::Op(op) => op,
        Atom::Num(_) => unreachable!("validated alternation"),
    };

    // sum of left-associative products
    let mut i = 0;
    let term = |i: &mut usize| {
        let mut acc = num(*i);
        *i += 1;
        while *i < atoms.len() && op_at(*i).is_multiplicative() {
            acc = ExprTree::node(op_at(*i), acc, num(*i + 1));
            *i += 2;
        }
        acc
    };
    let mut expr = term(&mut i);
    while i < atoms.len() {
        let op = op_at(i);
        i += 1;
        let rhs = term(&mut i);
        expr = ExprTree::node(op, expr, rhs);
    }
    Ok(expr)
}

/// Spells a flat expression out in words.
pub fn render_utterance(flat: &FlatExpr) -> Result<Utterance, ArithError> {
    let words: Vec<Word> = flat
        .atoms()
        .iter()
        .map(|a| match a {
            Atom::Num(n) => Word::number(*n).expect("validated operand"),
            Atom::Op(op) => op.word(),
        })
        .collect();
    Utterance::from_content(&words)
}
