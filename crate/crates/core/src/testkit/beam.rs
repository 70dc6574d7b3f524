//! Toy next-token tables and exhaustive decoding oracles.

use crate::error::Result;
use crate::model::Decoder;
use crate::rng::{derive_seed, seeded, standard_normal};

/// Next-token distribution that is a fixed pseudo-random function of the
/// whole context.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub vocab: usize,
    pub eos: usize,
    pub seed: u64,
    /// Standard deviation of the logits; larger values give peakier tables.
    pub sharpness: f64,
    /// Rounds logits to integers so that exact ties occur.
    pub quantized: bool,
}

impl ToyModel {
    pub fn distribution(&self, context: &[usize]) -> Vec<f64> {
        let mut rng = seeded(derive_seed(self.seed, &format!("{context:?}")));
        let logits: Vec<f64> = (0..self.vocab)
            .map(|_| {
                let z = self.sharpness * standard_normal(&mut rng);
                if self.quantized {
                    z.round()
                } else {
                    z
                }
            })
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        logits.into_iter().map(|v| v - lse).collect()
    }
}

impl Decoder for ToyModel {
    type State = Vec<usize>;

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn eos(&self) -> usize {
        self.eos
    }

    fn max_len(&self) -> usize {
        usize::MAX
    }

    fn start(&self, prefix: &[usize]) -> Result<(Vec<usize>, Vec<f64>)> {
        Ok((prefix.to_vec(), self.distribution(prefix)))
    }

    fn step(&self, state: &mut Vec<usize>, token: usize) -> Result<Vec<f64>> {
        state.push(token);
        Ok(self.distribution(state))
    }
}

/// Log-probability of `seq` after `prefix`, recomputed from scratch for every
/// position.
pub fn sequence_log_prob<D: Decoder>(dec: &D, prefix: &[usize], seq: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    let mut ctx = prefix.to_vec();
    for &t in seq {
        let (_, dist) = dec.start(&ctx)?;
        total += dist[t];
        ctx.push(t);
    }
    Ok(total)
}

/// Every complete continuation: sequences that end at their first `⟨eos⟩`,
/// plus `⟨eos⟩`-free sequences of exactly `max_new` tokens.
pub fn complete_hypotheses<D: Decoder>(
    dec: &D,
    prefix: &[usize],
    max_new: usize,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let mut out = Vec::new();
    let mut frontier = vec![Vec::new()];
    for depth in 1..=max_new {
        let mut next = Vec::new();
        for seq in &frontier {
            for t in 0..dec.vocab_size() {
                let mut s: Vec<usize> = seq.clone();
                s.push(t);
                if t == dec.eos() || depth == max_new {
                    let lp = sequence_log_prob(dec, prefix, &s)?;
                    out.push((s, lp));
                } else {
                    next.push(s);
                }
            }
        }
        frontier = next;
    }
    Ok(out)
}

fn penalized(lp: f64, len: usize, length_penalty: f64) -> f64 {
    if length_penalty == 1.0 {
        lp
    } else {
        lp + len as f64 * length_penalty.ln()
    }
}

fn best(cands: Vec<(Vec<usize>, f64)>, length_penalty: f64) -> Option<(Vec<usize>, f64)> {
    cands
        .into_iter()
        .map(|(s, lp)| {
            let score = penalized(lp, s.len(), length_penalty);
            (s, score)
        })
        .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
}

/// Highest-scoring complete continuation overall.
pub fn exhaustive_best<D: Decoder>(
    dec: &D,
    prefix: &[usize],
    max_new: usize,
    length_penalty: f64,
) -> Result<Option<(Vec<usize>, f64)>> {
    Ok(best(complete_hypotheses(dec, prefix, max_new)?, length_penalty))
}

/// Highest-scoring complete continuation among those that survive pruning to
/// the `width` best same-length extensions at every depth, with every
/// probability recomputed from the full sequence and no early stopping.
pub fn beam_reachable_best<D: Decoder>(
    dec: &D,
    prefix: &[usize],
    width: usize,
    max_new: usize,
    length_penalty: f64,
) -> Result<Option<(Vec<usize>, f64)>> {
    let mut alive: Vec<Vec<usize>> = vec![Vec::new()];
    let mut done = Vec::new();
    for depth in 1..=max_new {
        let mut cands = Vec::new();
        for seq in &alive {
            for t in 0..dec.vocab_size() {
                let mut s = seq.clone();
                s.push(t);
                let lp = sequence_log_prob(dec, prefix, &s)?;
                cands.push((s, lp));
            }
        }
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        cands.truncate(width);
        alive.clear();
        for (s, lp) in cands {
            if *s.last().expect("nonempty") == dec.eos() || depth == max_new {
                done.push((s, lp));
            } else {
                alive.push(s);
            }
        }
        if alive.is_empty() {
            break;
        }
    }
    Ok(best(done, length_penalty))
}
