//! ROUGE-1/2/L, faithfulness against the source transcript, summary-length
//! statistics and hallucination rate.
//!
//! Text is compared after [`tokenize`]: lowercase, split on every run of
//! non-alphanumeric characters, no stemming and no stopword removal.

mod report;

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{
    join_predictions, score_examples, CellScores, ExampleScores, Prediction, ScoreReport, CSV_HEADER,
    FAITHFULNESS_NOTE,
};

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    /// Scores from an overlap count against candidate and reference sizes;
    /// all zero when either side is empty.
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        if candidate == 0 || reference == 0 {
            return RougeScore::default();
        }
        let precision = overlap as f64 / candidate as f64;
        let recall = overlap as f64 / reference as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        RougeScore { precision, recall, f1 }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N with clipped n-gram counts, for `n ∈ {1, 2}`.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Result<RougeScore> {
    if !(1..=2).contains(&n) {
        return Err(Error::Domain(format!("ROUGE-{n} is not supported (n must be 1 or 2)")));
    }
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    let total = |len: usize| len.saturating_sub(n - 1);
    Ok(RougeScore::from_counts(overlap, total(candidate.len()), total(reference.len())))
}

/// Longest common subsequence length, by dynamic programming over two rows.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// ROUGE-L of the prediction against the source transcript.
pub fn faithfulness<T: PartialEq>(transcript: &[T], prediction: &[T]) -> Result<RougeScore> {
    if transcript.is_empty() {
        return Err(Error::Domain("faithfulness needs a nonempty transcript".into()));
    }
    Ok(rouge_l(prediction, transcript))
}

/// Fraction of prediction tokens whose type never occurs in the transcript.
/// An empty prediction hallucinates nothing.
pub fn hallucination_rate<T: Eq + Hash>(transcript: &[T], prediction: &[T]) -> Result<f64> {
    if transcript.is_empty() {
        return Err(Error::Domain("hallucination rate needs a nonempty transcript".into()));
    }
    if prediction.is_empty() {
        return Ok(0.0);
    }
    let seen: HashSet<&T> = transcript.iter().collect();
    let novel = prediction.iter().filter(|t| !seen.contains(t)).count();
    Ok(novel as f64 / prediction.len() as f64)
}

pub const LENGTH_BIN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    /// `(bin start, count)` for every bin from 0 to the longest length.
    pub histogram: Vec<(usize, usize)>,
    /// Share of predictions in the most populated bin.
    pub mode_mass: f64,
}

/// Statistics of token counts, histogrammed in bins of [`LENGTH_BIN`].
pub fn length_stats(lengths: &[usize]) -> Result<LengthStats> {
    if lengths.is_empty() {
        return Err(Error::Domain("length statistics need at least one prediction".into()));
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
    let var = lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
    let max = *lengths.iter().max().expect("nonempty");
    let mut bins = vec![0usize; max / LENGTH_BIN + 1];
    for &l in lengths {
        bins[l / LENGTH_BIN] += 1;
    }
    let top = *bins.iter().max().expect("nonempty");
    Ok(LengthStats {
        count: lengths.len(),
        mean,
        stddev: var.sqrt(),
        histogram: bins.into_iter().enumerate().map(|(i, c)| (i * LENGTH_BIN, c)).collect(),
        mode_mass: top as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_rule() {
        assert_eq!(t("The cat's  HAT-trick, 2x!"), ["the", "cat", "s", "hat", "trick", "2x"]);
        assert!(t(" ,.; ").is_empty());
    }

    #[test]
    fn from_counts_handles_zero_overlap() {
        assert_eq!(RougeScore::from_counts(0, 3, 4), RougeScore::default());
        assert_eq!(RougeScore::from_counts(0, 0, 4), RougeScore::default());
    }

    #[test]
    fn rouge_two_needs_two_tokens() {
        let s = rouge_n(&t("a"), &t("a"), 2).unwrap();
        assert_eq!(s.f1, 0.0);
        assert!(rouge_n(&t("a"), &t("a"), 3).unwrap_err().is_config());
        assert!(rouge_n(&t("a"), &t("a"), 0).is_err());
    }

    #[test]
    fn clipped_counts() {
        // candidate repeats "the" three times but the reference has it twice
        let s = rouge_n(&t("the the the"), &t("the cat the"), 1).unwrap();
        assert_eq!(s.precision, 2.0 / 3.0);
        assert_eq!(s.recall, 2.0 / 3.0);
    }

    #[test]
    fn length_stats_examples() {
        let s = length_stats(&[40; 7]).unwrap();
        assert_eq!((s.mean, s.stddev, s.mode_mass), (40.0, 0.0, 1.0));
        let u: Vec<usize> = (10..60).collect();
        let s = length_stats(&u).unwrap();
        assert!((s.mode_mass - 0.1).abs() < 1e-12);
        assert_eq!(s.histogram.iter().map(|b| b.1).sum::<usize>(), 50);
        assert_eq!(s.histogram[2], (10, 5));
        assert!(length_stats(&[]).is_err());
    }
}
