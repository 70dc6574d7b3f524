use std::collections::BTreeSet;

use super::GradMap;
use crate::autodiff::{dot, Contribution, Factor, PerExampleCaptures};
use crate::error::{Error, Result};

/// Per-example L2 norms of fully materialized gradients.
pub fn per_example_norms_naive(per_example: &[GradMap]) -> Result<Vec<f64>> {
    let Some(first) = per_example.first() else {
        return Err(Error::Structure("no per-example gradients".into()));
    };
    let keys: Vec<&String> = first.keys().collect();
    per_example
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.len() != keys.len() || !g.keys().zip(&keys).all(|(a, b)| a == *b) {
                return Err(Error::Structure(format!(
                    "example {i} has parameter keys {:?}, expected {:?}",
                    g.keys().collect::<Vec<_>>(),
                    keys
                )));
            }
            Ok(g.values().map(|t| t.norm_sq()).sum::<f64>().sqrt())
        })
        .collect()
}

/// Which evaluation route ghost clipping uses for factored contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GhostPath {
    /// Whichever of the two routes needs fewer multiply-adds.
    #[default]
    Auto,
    /// Always `⟨L₁L₂ᵀ, R₁R₂ᵀ⟩`.
    Gram,
    /// Always materialize `Lᵀ R`.
    Direct,
}

fn gram_cost(a: &Factor, b: &Factor) -> usize {
    let width = match (a, b) {
        (Factor::Dense { cols, .. }, Factor::Dense { .. }) => *cols,
        _ => 1,
    };
    a.rows() * b.rows() * width
}

fn materialize_cost(c: &Contribution) -> usize {
    match c {
        Contribution::Outer { left, right } => {
            let per_row = match (left, right) {
                (Factor::Dense { .. }, Factor::Dense { .. }) => left.cols() * right.cols(),
                (Factor::OneHot { .. }, Factor::Dense { .. }) => right.cols(),
                (Factor::Dense { .. }, Factor::OneHot { .. }) => left.cols(),
                (Factor::OneHot { .. }, Factor::OneHot { .. }) => 1,
            };
            left.rows() * per_row + c.numel()
        }
        Contribution::Dense(v) => v.len(),
    }
}

/// `⟨a, b⟩` over the Gram route where both sides are factored.
fn gram_inner(a: &Contribution, b: &Contribution) -> f64 {
    match (a, b) {
        (
            Contribution::Outer { left: l1, right: r1 },
            Contribution::Outer { left: l2, right: r2 },
        ) => dot(&l1.gram(l2), &r1.gram(r2)),
        _ if std::ptr::eq(a, b) => {
            let m = a.materialize();
            dot(&m, &m)
        }
        _ => dot(&a.materialize(), &b.materialize()),
    }
}

fn pair_gram_cost(a: &Contribution, b: &Contribution) -> usize {
    match (a, b) {
        (
            Contribution::Outer { left: l1, right: r1 },
            Contribution::Outer { left: l2, right: r2 },
        ) => gram_cost(l1, l2) + gram_cost(r1, r2) + l1.rows() * l2.rows(),
        _ => materialize_cost(a) + materialize_cost(b),
    }
}

/// Squared norm of the sum of one example's contributions to a parameter.
fn group_norm_sq(contribs: &[&Contribution], path: GhostPath) -> f64 {
    let gram = match path {
        GhostPath::Gram => true,
        GhostPath::Direct => false,
        GhostPath::Auto => {
            let mut g = 0;
            for (j, a) in contribs.iter().enumerate() {
                for b in &contribs[j..] {
                    g += pair_gram_cost(a, b);
                }
            }
            g <= contribs.iter().map(|c| materialize_cost(c)).sum::<usize>()
        }
    };
    if gram {
        let mut acc = 0.0;
        for (j, a) in contribs.iter().enumerate() {
            acc += gram_inner(a, a);
            for b in &contribs[j + 1..] {
                acc += 2.0 * gram_inner(a, b);
            }
        }
        acc
    } else if let [only] = contribs {
        let m = only.materialize();
        dot(&m, &m)
    } else {
        let mut g = vec![0.0; contribs[0].numel()];
        for c in contribs {
            c.accumulate_into(1.0, &mut g);
        }
        dot(&g, &g)
    }
}

/// Per-example gradient norms from captured factors, never forming a
/// per-example weight gradient on the Gram route.
///
/// Every name in `expected` must have at least one capture record.
pub fn per_example_norms_ghost<'a>(
    captures: &PerExampleCaptures,
    expected: impl IntoIterator<Item = &'a str>,
) -> Result<Vec<f64>> {
    ghost_norms_with(captures, expected, GhostPath::Auto)
}

pub fn ghost_norms_with<'a>(
    captures: &PerExampleCaptures,
    expected: impl IntoIterator<Item = &'a str>,
    path: GhostPath,
) -> Result<Vec<f64>> {
    let grouped = captures.by_param();
    let expected: BTreeSet<&str> = expected.into_iter().collect();
    if let Some(missing) = expected.iter().find(|p| !grouped.contains_key(*p)) {
        return Err(Error::Config(format!("no per-example capture for parameter {missing}")));
    }
    let batch = captures.batch;
    let mut sq = vec![0.0; batch];
    for records in grouped.values() {
        if let Some(r) = records.iter().find(|r| r.per_example.len() != batch) {
            return Err(Error::Structure(format!(
                "capture for {} covers {} examples, batch has {batch}",
                r.param,
                r.per_example.len()
            )));
        }
        if let Some(r) = records.iter().find(|r| {
            r.per_example
                .iter()
                .zip(&records[0].per_example)
                .any(|(a, b)| a.numel() != b.numel())
        }) {
            return Err(Error::Structure(format!("inconsistent capture sizes for {}", r.param)));
        }
        let mut contribs = Vec::with_capacity(records.len());
        for (i, acc) in sq.iter_mut().enumerate() {
            contribs.clear();
            contribs.extend(records.iter().map(|r| &r.per_example[i]));
            *acc += group_norm_sq(&contribs, path);
        }
    }
    Ok(sq.into_iter().map(|s| s.max(0.0).sqrt()).collect())
}

/// Materializes every example's gradient by seeding the reverse pass with
/// the unit vector of that example.
pub fn per_example_gradients(
    tape: &crate::autodiff::Tape,
    losses: crate::autodiff::Var,
) -> Result<Vec<GradMap>> {
    let batch = tape.value(losses).numel();
    (0..batch)
        .map(|i| {
            let mut seed = vec![0.0; batch];
            seed[i] = 1.0;
            Ok(tape
                .backward(losses, &seed, crate::autodiff::GradMode::Summed)?
                .into_params())
        })
        .collect()
}
