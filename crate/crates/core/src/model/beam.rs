//! Beam search and greedy decoding over any next-token distribution.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source of next-token log-probabilities.
pub trait Decoder {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    fn eos(&self) -> usize;

    /// Longest sequence (prefix plus generated tokens) the decoder accepts.
    fn max_len(&self) -> usize;

    /// Consumes the prefix and returns the distribution of the next token.
    fn start(&self, prefix: &[usize]) -> Result<(Self::State, Vec<f64>)>;

    /// Appends `token` and returns the distribution of the token after it.
    fn step(&self, state: &mut Self::State, token: usize) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub max_new_tokens: usize,
    /// Per-token probability multiplier: a hypothesis of `n` tokens scores
    /// `log p + n·ln(length_penalty)`. `1.0` ranks by log-probability alone;
    /// values above 1 favor longer outputs.
    pub length_penalty: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_width: 5,
            max_new_tokens: 32,
            length_penalty: 1.0,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        if !(self.length_penalty.is_finite() && self.length_penalty > 0.0) {
            return Err(Error::Config(format!(
                "length_penalty must be positive, got {}",
                self.length_penalty
            )));
        }
        Ok(())
    }

    pub fn score(&self, log_prob: f64, len: usize) -> f64 {
        if self.length_penalty == 1.0 {
            log_prob
        } else {
            log_prob + len as f64 * self.length_penalty.ln()
        }
    }
}

/// A generated continuation (the prefix is not included).
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub score: f64,
    /// Whether the hypothesis ended with `⟨eos⟩` rather than running out of
    /// budget.
    pub finished: bool,
}

impl Hypothesis {
    /// Generated tokens with a trailing `⟨eos⟩` removed.
    pub fn content(&self, eos: usize) -> &[usize] {
        match self.tokens.split_last() {
            Some((&last, rest)) if last == eos => rest,
            _ => &self.tokens,
        }
    }
}

/// Higher score first, then the lexicographically smaller sequence.
fn rank(a_score: f64, a: &[usize], b_score: f64, b: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a.cmp(b))
}

struct Beam<S> {
    tokens: Vec<usize>,
    log_prob: f64,
    state: S,
    next: Vec<f64>,
}

fn budget<D: Decoder>(dec: &D, prefix: &[usize], cfg: &BeamConfig) -> Result<usize> {
    cfg.validate()?;
    if prefix.len() >= dec.max_len() {
        return Err(Error::ContextOverflow {
            len: prefix.len(),
            context: dec.max_len(),
        });
    }
    Ok(cfg.max_new_tokens.min(dec.max_len() - prefix.len()))
}

/// Beam search. Each step keeps the `beam_width` best extensions of the live
/// beams; an extension ending in `⟨eos⟩` is set aside as finished and does
/// not continue. Hypotheses still live after `max_new_tokens` are finished
/// as they stand. Ties go to the lexicographically smaller token sequence.
pub fn generate_beam<D: Decoder>(dec: &D, prefix: &[usize], cfg: &BeamConfig) -> Result<Hypothesis> {
    let max_new = budget(dec, prefix, cfg)?;
    let (state, next) = dec.start(prefix)?;
    if max_new == 0 {
        return Ok(Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            score: 0.0,
            finished: false,
        });
    }
    let eos = dec.eos();
    let vocab = dec.vocab_size();
    let mut alive = vec![Beam {
        tokens: Vec::new(),
        log_prob: 0.0,
        state,
        next,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(cfg.beam_width * vocab);
    for step in 0..max_new {
        cand.clear();
        for (bi, b) in alive.iter().enumerate() {
            cand.extend((0..vocab).map(|t| (b.log_prob + b.next[t], bi, t)));
        }
        let by_rank = |x: &(f64, usize, usize), y: &(f64, usize, usize)| {
            x.0.total_cmp(&y.0).reverse().then_with(|| {
                let (kx, ky) = (&alive[x.1].tokens, &alive[y.1].tokens);
                kx.cmp(ky).then(x.2.cmp(&y.2))
            })
        };
        let keep = cfg.beam_width.min(cand.len());
        if keep < cand.len() {
            cand.select_nth_unstable_by(keep - 1, by_rank);
            cand.truncate(keep);
        }
        cand.sort_by(by_rank);
        let last = step + 1 == max_new;
        let mut next_alive = Vec::with_capacity(keep);
        for &(lp, bi, t) in &cand {
            let parent = &alive[bi];
            let mut tokens = Vec::with_capacity(parent.tokens.len() + 1);
            tokens.extend_from_slice(&parent.tokens);
            tokens.push(t);
            if t == eos || last {
                finished.push(Hypothesis {
                    score: cfg.score(lp, tokens.len()),
                    tokens,
                    log_prob: lp,
                    finished: t == eos,
                });
            } else {
                let mut state = parent.state.clone();
                let next = dec.step(&mut state, t)?;
                next_alive.push(Beam {
                    tokens,
                    log_prob: lp,
                    state,
                    next,
                });
            }
        }
        alive = next_alive;
        if alive.is_empty() {
            break;
        }
        // With length_penalty <= 1 no live beam can later outscore its
        // current score, so a strictly better finished hypothesis is final.
        if cfg.length_penalty <= 1.0 {
            let best_alive = alive
                .iter()
                .map(|b| cfg.score(b.log_prob, b.tokens.len()))
                .fold(f64::NEG_INFINITY, f64::max);
            if finished.iter().any(|h| h.score > best_alive) {
                break;
            }
        }
    }
    finished
        .into_iter()
        .min_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens))
        .ok_or_else(|| Error::Structure("beam search produced no hypothesis".into()))
}

/// Repeatedly takes the most likely token (lowest id on ties) until `⟨eos⟩`
/// or the budget runs out.
pub fn greedy<D: Decoder>(dec: &D, prefix: &[usize], max_new_tokens: usize) -> Result<Hypothesis> {
    let cfg = BeamConfig {
        beam_width: 1,
        max_new_tokens,
        length_penalty: 1.0,
    };
    let max_new = budget(dec, prefix, &cfg)?;
    let (mut state, mut next) = dec.start(prefix)?;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    let mut finished = false;
    while tokens.len() < max_new {
        let (t, lp) = next
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (t, lp)| if lp > best.1 { (t, lp) } else { best });
        tokens.push(t);
        log_prob += lp;
        if t == dec.eos() {
            finished = true;
            break;
        }
        if tokens.len() < max_new {
            next = dec.step(&mut state, t)?;
        }
    }
    Ok(Hypothesis {
        tokens,
        log_prob,
        score: log_prob,
        finished,
    })
}
