//! Independent reference computations for checking the fast paths.
//!
//! The enumeration half never touches [`crate::index`]: every expression of
//! the requested size is built explicitly, executed, and kept when its value
//! matches. The gradient half differentiates the loss numerically.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;

use crate::arith::{
    evaluate, linearize, precedence_parse, Atom, Denotation, ExprTree, FlatExpr, GrammarMode,
    LogicalForm, Operator,
};
use crate::index::CandidateSet;
use crate::nn::model::{backprop, nll, Dropout, ModelError};
use crate::nn::params::ModelParams;
use crate::rng::Rng;

/// Every binary tree with `size` leaves drawn from 1..=5.
pub fn all_trees(size: usize) -> Vec<ExprTree> {
    if size == 1 {
        return (1..=5).map(ExprTree::Leaf).collect();
    }
    let mut out = Vec::new();
    for left_size in 1..size {
        let lefts = all_trees(left_size);
        let rights = all_trees(size - left_size);
        for op in Operator::ALL {
            for l in &lefts {
                for r in &rights {
                    out.push(ExprTree::node(op, l.clone(), r.clone()));
                }
            }
        }
    }
    out
}

/// Every alternating sequence with `size` operands.
pub fn all_flats(size: usize) -> Vec<FlatExpr> {
    let mut seqs: Vec<Vec<Atom>> = (1..=5).map(|n| alloc::vec![Atom::Num(n)]).collect();
    for _ in 1..size {
        let mut next = Vec::with_capacity(seqs.len() * 20);
        for s in &seqs {
            for op in Operator::ALL {
                for n in 1..=5 {
                    let mut t = s.clone();
                    t.push(Atom::Op(op));
                    t.push(Atom::Num(n));
                    next.push(t);
                }
            }
        }
        seqs = next;
    }
    seqs.into_iter()
        .map(|s| FlatExpr::new(s).expect("generated alternation"))
        .collect()
}

/// All logical forms of `size` operands, grouped by value. Expressions that
/// divide by zero are dropped.
pub fn brute_force_all(size: usize, mode: GrammarMode) -> BTreeMap<Denotation, CandidateSet> {
    let mut groups: BTreeMap<Denotation, Vec<LogicalForm>> = BTreeMap::new();
    match mode {
        GrammarMode::WithBrackets => {
            for tree in all_trees(size) {
                if let Ok(d) = evaluate(&tree) {
                    groups.entry(d).or_default().push(linearize(&tree, mode));
                }
            }
        }
        GrammarMode::NoBrackets => {
            for flat in all_flats(size) {
                let value = match precedence_parse(flat.atoms()) {
                    Ok(tree) => evaluate(&tree),
                    // a lone operand is not a logical form
                    Err(_) => continue,
                };
                if let Ok(d) = value {
                    groups.entry(d).or_default().push(LogicalForm::from_flat(&flat));
                }
            }
        }
    }
    groups
        .into_iter()
        .map(|(d, forms)| (d, CandidateSet::from_forms(mode, forms)))
        .collect()
}

/// Reference answer for a single `(d, size)` query.
pub fn brute_force_candidates(d: Denotation, size: usize, mode: GrammarMode) -> CandidateSet {
    brute_force_all(size, mode)
        .remove(&d)
        .unwrap_or_else(|| CandidateSet::empty(mode))
}

/// Agreement between backprop and finite differences on one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    libm::fabs(analytic - numeric) / analytic.abs().max(numeric.abs()).max(floor)
}

fn loss_with_replayed_dropout(
    params: &ModelParams,
    src: &[usize],
    target: &[usize],
    dropout: Option<(f64, u64)>,
) -> Result<(f64, crate::nn::ForwardTrace), ModelError> {
    match dropout {
        Some((rate, seed)) => {
            let mut rng = Rng::seed_from_u64(seed);
            nll(params, src, target, Some(&mut Dropout { rate, rng: &mut rng }))
        }
        None => nll(params, src, target, None),
    }
}

/// Central difference formulas: `(f(x+h) - f(x-h)) / 2h` with error of
/// order `h^2`, or the five-point rule with error of order `h^4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    ThreePoint,
    FivePoint,
}

/// Compares backprop with a central difference of step `h` for every entry
/// of every parameter tensor. With `dropout = Some((rate, seed))` each loss
/// evaluation redraws the same masks, so the loss stays one smooth
/// function of the parameters.
pub fn gradient_check(
    params: &ModelParams,
    src: &[usize],
    target: &[usize],
    dropout: Option<(f64, u64)>,
    stencil: Stencil,
    h: f64,
    floor: f64,
) -> Result<Vec<TensorCheck>, ModelError> {
    let (_, trace) = loss_with_replayed_dropout(params, src, target, dropout)?;
    let analytic = backprop(params, &trace);
    let mut probe = params.clone();
    let names = params.tensor_names();
    let mut out = Vec::with_capacity(names.len());
    for (t, name) in names.into_iter().enumerate() {
        let grads = analytic.tensors()[t].data.clone();
        let mut check = TensorCheck { name, entries: grads.len(), max_rel_error: 0.0, max_abs_error: 0.0 };
        for (k, &a) in grads.iter().enumerate() {
            let base = params.tensors()[t].data[k];
            let mut f = [0.0; 4];
            let offsets: &[f64] = match stencil {
                Stencil::ThreePoint => &[1.0, -1.0],
                Stencil::FivePoint => &[2.0, 1.0, -1.0, -2.0],
            };
            for (slot, offset) in f.iter_mut().zip(offsets) {
                probe.tensors_mut()[t].data[k] = base + offset * h;
                *slot = loss_with_replayed_dropout(&probe, src, target, dropout)?.0;
            }
            probe.tensors_mut()[t].data[k] = base;
            let n = match stencil {
                Stencil::ThreePoint => (f[0] - f[1]) / (2.0 * h),
                Stencil::FivePoint => (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h),
            };
            check.max_rel_error = check.max_rel_error.max(relative_error(a, n, floor));
            check.max_abs_error = check.max_abs_error.max(libm::fabs(a - n));
        }
        out.push(check);
    }
    Ok(out)
}
