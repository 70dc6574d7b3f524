//! Token layout of a training sequence: `⟨q⟩ query ⟨x⟩ transcript ⟨y⟩ summary ⟨eos⟩`.

use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const Q: usize = 1;
pub const X: usize = 2;
pub const Y: usize = 3;
pub const EOS: usize = 4;
pub const NUM_SPECIALS: usize = 5;
pub const SPECIAL_NAMES: [&str; NUM_SPECIALS] = ["<unk>", "<q>", "<x>", "<y>", "<eos>"];

/// One serialized example.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub tokens: Vec<usize>,
    /// 1 on summary tokens and the closing `⟨eos⟩`, 0 elsewhere.
    pub loss_mask: Vec<f64>,
    /// Transcript tokens dropped from the tail to fit the context.
    pub truncated: usize,
}

/// Lays out a training example in at most `context` tokens, cutting the
/// transcript from its tail. Fails with [`Error::ContextOverflow`] when the
/// query and summary alone do not fit; callers count these as skips.
pub fn serialize_example(
    query: &[usize],
    transcript: &[usize],
    summary: &[usize],
    context: usize,
) -> Result<Encoded> {
    let fixed = query.len() + summary.len() + 4;
    if fixed > context {
        return Err(Error::ContextOverflow {
            len: fixed,
            context,
        });
    }
    let keep = transcript.len().min(context - fixed);
    let mut tokens = Vec::with_capacity(fixed + keep);
    tokens.push(Q);
    tokens.extend_from_slice(query);
    tokens.push(X);
    tokens.extend_from_slice(&transcript[..keep]);
    tokens.push(Y);
    let prompt_len = tokens.len();
    tokens.extend_from_slice(summary);
    tokens.push(EOS);
    let mut loss_mask = vec![0.0; tokens.len()];
    loss_mask[prompt_len..].fill(1.0);
    Ok(Encoded {
        tokens,
        loss_mask,
        truncated: transcript.len() - keep,
    })
}

/// Generation prompt ending at `⟨y⟩`, leaving `reserve` positions free for
/// the summary.
pub fn serialize_prompt(
    query: &[usize],
    transcript: &[usize],
    context: usize,
    reserve: usize,
) -> Result<Vec<usize>> {
    let fixed = query.len() + 3 + reserve;
    if fixed > context {
        return Err(Error::ContextOverflow {
            len: fixed,
            context,
        });
    }
    let keep = transcript.len().min(context - fixed);
    let mut tokens = Vec::with_capacity(fixed - reserve + keep);
    tokens.push(Q);
    tokens.extend_from_slice(query);
    tokens.push(X);
    tokens.extend_from_slice(&transcript[..keep]);
    tokens.push(Y);
    Ok(tokens)
}

/// Next-token batch: `inputs[t]` predicts `targets[t]`, scored where `mask`
/// is 1. Short sequences are padded with `⟨eos⟩` and masked out; causal
/// attention keeps padding from affecting earlier positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<f64>,
    pub batch: usize,
    pub seq: usize,
}

impl Batch {
    pub fn from_examples(examples: &[&Encoded]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        if let Some(e) = examples.iter().find(|e| e.tokens.len() < 2) {
            return Err(Error::Usage(format!(
                "example of {} tokens has nothing to predict",
                e.tokens.len()
            )));
        }
        let seq = examples.iter().map(|e| e.tokens.len() - 1).max().expect("nonempty");
        let n = examples.len() * seq;
        let (mut inputs, mut targets, mut mask) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for e in examples {
            let len = e.tokens.len() - 1;
            inputs.extend_from_slice(&e.tokens[..len]);
            targets.extend_from_slice(&e.tokens[1..]);
            mask.extend_from_slice(&e.loss_mask[1..]);
            inputs.resize(inputs.len() + seq - len, EOS);
            targets.resize(targets.len() + seq - len, EOS);
            mask.resize(mask.len() + seq - len, 0.0);
        }
        Ok(Self {
            inputs,
            targets,
            mask,
            batch: examples.len(),
            seq,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_transcript_layout() {
        let e = serialize_example(&[10, 11], &[], &[20], 16).unwrap();
        assert_eq!(e.tokens, vec![Q, 10, 11, X, Y, 20, EOS]);
        assert_eq!(e.loss_mask, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(e.truncated, 0);
    }

    #[test]
    fn long_transcript_fills_the_context_exactly() {
        let transcript: Vec<usize> = (100..200).collect();
        let e = serialize_example(&[10], &transcript, &[20, 21], 16).unwrap();
        assert_eq!(e.tokens.len(), 16);
        assert_eq!(&e.tokens[3..12], &transcript[..9]);
        assert_eq!(e.truncated, 91);
        assert_eq!(e.loss_mask.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn oversized_query_and_summary_are_rejected() {
        let long: Vec<usize> = vec![9; 10];
        assert!(matches!(
            serialize_example(&long, &[], &long, 16),
            Err(Error::ContextOverflow { len: 24, context: 16 })
        ));
    }

    #[test]
    fn prompt_reserves_room() {
        let p = serialize_prompt(&[10], &[7; 20], 16, 6).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(*p.last().unwrap(), Y);
    }

    #[test]
    fn batches_shift_and_pad() {
        let a = serialize_example(&[10], &[], &[20], 16).unwrap();
        let b = serialize_example(&[10], &[30, 31], &[20], 16).unwrap();
        let batch = Batch::from_examples(&[&a, &b]).unwrap();
        assert_eq!(batch.seq, 7);
        assert_eq!(&batch.inputs[..7], &[Q, 10, X, Y, 20, EOS, EOS]);
        assert_eq!(&batch.targets[..7], &[10, X, Y, 20, EOS, EOS, EOS]);
        assert_eq!(&batch.mask[..7], &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(&batch.mask[7..], &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }
}
