//! Stable integer ids for both vocabularies. `PAD` is id 0 on each side.

use alloc::vec::Vec;

use crate::arith::{LfToken, LogicalForm, Utterance, Word, SOURCE_LEN, TARGET_LEN};

pub const SOURCE_VOCAB: usize = 11;
pub const TARGET_VOCAB: usize = 16;
pub const PAD: usize = 0;

const SOURCE_ORDER: [Word; SOURCE_VOCAB] = [
    Word::Pad,
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
];

pub fn source_id(w: Word) -> usize {
    SOURCE_ORDER.iter().position(|x| *x == w).expect("closed vocabulary")
}

pub fn source_word(id: usize) -> Option<Word> {
    SOURCE_ORDER.get(id).copied()
}

pub fn target_id(t: LfToken) -> usize {
    LfToken::ALL.iter().position(|x| *x == t).expect("closed vocabulary")
}

pub fn target_token(id: usize) -> Option<LfToken> {
    LfToken::ALL.get(id).copied()
}

pub fn go_id() -> usize {
    target_id(LfToken::Go)
}

pub fn end_id() -> usize {
    target_id(LfToken::End)
}

/// Padded encoder input.
pub fn encode_source(u: &Utterance) -> [usize; SOURCE_LEN] {
    u.padded().map(source_id)
}

/// Target ids without padding; steps past `End` never enter the loss.
pub fn encode_target(lf: &LogicalForm) -> Vec<usize> {
    lf.tokens().iter().copied().map(target_id).collect()
}

/// Target ids padded to [`TARGET_LEN`]. Longer forms are returned unchanged.
pub fn encode_target_padded(lf: &LogicalForm) -> Vec<usize> {
    let mut ids = encode_target(lf);
    if ids.len() < TARGET_LEN {
        ids.resize(TARGET_LEN, PAD);
    }
    ids
}

pub fn decode_target(ids: &[usize]) -> LogicalForm {
    LogicalForm(ids.iter().filter_map(|&i| target_token(i)).collect())
}

fn fnv1a<'a>(items: impl Iterator<Item = &'a str>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for item in items {
        for b in item.bytes().chain(core::iter::once(0)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Fingerprint of the source id assignment, stored in checkpoints.
pub fn source_hash() -> u64 {
    fnv1a(SOURCE_ORDER.iter().map(|w| w.as_str()))
}

pub fn target_hash() -> u64 {
    fnv1a(LfToken::ALL.iter().map(|t| t.as_str()))
}
