//! Exact best-candidate search over a prefix trie.
//!
//! Candidates for one denotation share many prefixes, so the trie runs each
//! shared decoder step once. Every step adds a non-negative term to the
//! loss, which lets whole subtrees be cut as soon as their partial loss
//! exceeds the best complete one. Losses are summed in the same order as in
//! [`super::model::candidate_losses`], so the answer is bit-for-bit the
//! exhaustive argmin.

use alloc::vec::Vec;

use super::model::{attend, decode_step, encode, initial_state, target_span, DecoderState, EncoderTrace, ModelError};
use super::params::ModelParams;
use super::tensor::log_sum_exp;

#[derive(Default)]
struct Node {
    children: Vec<(usize, usize)>,
    /// Smallest candidate index whose span ends here.
    terminal: Option<usize>,
}

struct Trie {
    nodes: Vec<Node>,
}

impl Trie {
    /// The root holds the shared `Go` token.
    fn build(candidates: &[Vec<usize>]) -> Result<Self, ModelError> {
        let mut nodes = alloc::vec![Node::default()];
        for (i, cand) in candidates.iter().enumerate() {
            let mut at = 0;
            for &token in &target_span(cand)?[1..] {
                at = match nodes[at].children.iter().find(|(t, _)| *t == token) {
                    Some(&(_, child)) => child,
                    None => {
                        nodes.push(Node::default());
                        let child = nodes.len() - 1;
                        nodes[at].children.push((token, child));
                        child
                    }
                };
            }
            nodes[at].terminal.get_or_insert(i);
        }
        Ok(Trie { nodes })
    }
}

struct Search<'a> {
    params: &'a ModelParams,
    enc: &'a EncoderTrace,
    trie: &'a Trie,
    best: Option<(f64, usize)>,
}

impl Search<'_> {
    fn visit(&mut self, node: usize, token: usize, state: &DecoderState, loss: f64) -> Result<(), ModelError> {
        let n = &self.trie.nodes[node];
        if let Some(i) = n.terminal {
            let better = match self.best {
                None => true,
                Some((l, j)) => loss < l || (loss == l && i < j),
            };
            if better {
                self.best = Some((loss, i));
            }
        }
        if n.children.is_empty() || self.best.is_some_and(|(l, _)| loss > l) {
            return Ok(());
        }
        let att = attend(self.params, state.top(), self.enc)?;
        let (step, next) = decode_step(self.params, token, state, &att.context, None);
        let lse = log_sum_exp(&step.logits);
        let mut order: Vec<(f64, usize, usize)> =
            n.children.iter().map(|&(t, child)| (lse - step.logits[t], t, child)).collect();
        // most probable continuation first, to tighten the bound early
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (step_loss, t, child) in order {
            let total = loss + step_loss;
            if self.best.is_some_and(|(l, _)| total > l) {
                continue;
            }
            self.visit(child, t, &next, total)?;
        }
        Ok(())
    }
}

/// Index of the candidate with the least teacher-forced loss (dropout off);
/// ties go to the earliest candidate.
pub fn score_candidates(params: &ModelParams, src: &[usize], candidates: &[Vec<usize>]) -> Result<usize, ModelError> {
    if candidates.is_empty() {
        return Err(ModelError::EmptyCandidates);
    }
    let trie = Trie::build(candidates)?;
    let enc = encode(params, src, None);
    let (_, state) = initial_state(params, &enc);
    let root = candidates[0][0];
    let mut search = Search { params, enc: &enc, trie: &trie, best: None };
    search.visit(0, root, &state, 0.0)?;
    Ok(search.best.expect("every candidate reaches a terminal").1)
}
