//! Per-example scoring and the train × eval domain report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{faithfulness, hallucination_rate, rouge_l, rouge_n, tokenize};
use crate::data::{Domain, Example};
use crate::error::{Error, Result};

/// Footnote attached to every rendered table.
pub const FAITHFULNESS_NOTE: &str = "ROUGE over lowercased alphanumeric tokens, no stemming or stopword \
removal. Faithfulness is ROUGE-L F1 of predictions against their source transcripts on the validation \
split; all other columns are on the test split.";

/// One line of a predictions JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
}

/// Pairs every gold example with its prediction, in gold order. Missing,
/// duplicate or unknown prediction ids are errors.
pub fn join_predictions<'a>(
    predictions: &'a [Prediction],
    gold: &'a [Example],
) -> Result<Vec<(&'a Example, &'a str)>> {
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(&p.id, &p.prediction).is_some() {
            return Err(Error::Structure(format!("duplicate prediction for {:?}", p.id)));
        }
    }
    let mut out = Vec::with_capacity(gold.len());
    for g in gold {
        let p = by_id
            .remove(g.id.as_str())
            .ok_or_else(|| Error::Structure(format!("no prediction for {:?}", g.id)))?;
        out.push((g, p));
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(Error::Structure(format!("prediction {extra:?} matches no gold example")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub faithfulness: f64,
    pub hallucination: f64,
    /// Prediction length in metric tokens.
    pub length: usize,
}

pub fn score_examples(pairs: &[(&Example, &str)]) -> Result<Vec<ExampleScores>> {
    pairs
        .iter()
        .map(|(gold, pred)| {
            let (p, r, src) = (tokenize(pred), tokenize(&gold.summary), tokenize(&gold.transcript));
            Ok(ExampleScores {
                rouge1: rouge_n(&p, &r, 1)?.f1,
                rouge2: rouge_n(&p, &r, 2)?.f1,
                rouge_l: rouge_l(&p, &r).f1,
                faithfulness: faithfulness(&src, &p)?.f1,
                hallucination: hallucination_rate(&src, &p)?,
                length: p.len(),
            })
        })
        .collect()
}

/// Means over one (train domain, eval domain) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub n_test: usize,
    pub n_valid: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub faithfulness_rouge_l: f64,
    pub mean_length: f64,
    pub hallucination_rate: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl CellScores {
    /// ROUGE, length and hallucination from `test`; faithfulness from
    /// `valid`.
    pub fn new(test: &[ExampleScores], valid: &[ExampleScores]) -> Result<Self> {
        if test.is_empty() || valid.is_empty() {
            return Err(Error::Structure("a report cell needs test and validation predictions".into()));
        }
        Ok(CellScores {
            n_test: test.len(),
            n_valid: valid.len(),
            rouge1: mean(test.iter().map(|s| s.rouge1)),
            rouge2: mean(test.iter().map(|s| s.rouge2)),
            rouge_l: mean(test.iter().map(|s| s.rouge_l)),
            faithfulness_rouge_l: mean(valid.iter().map(|s| s.faithfulness)),
            mean_length: mean(test.iter().map(|s| s.length as f64)),
            hallucination_rate: mean(test.iter().map(|s| s.hallucination)),
        })
    }

    /// Element-wise mean of cells from repeated runs.
    pub fn average(cells: &[CellScores]) -> Result<Self> {
        let first = cells.first().ok_or_else(|| Error::Structure("nothing to average".into()))?;
        let m = |f: fn(&CellScores) -> f64| mean(cells.iter().map(f));
        Ok(CellScores {
            n_test: first.n_test,
            n_valid: first.n_valid,
            rouge1: m(|c| c.rouge1),
            rouge2: m(|c| c.rouge2),
            rouge_l: m(|c| c.rouge_l),
            faithfulness_rouge_l: m(|c| c.faithfulness_rouge_l),
            mean_length: m(|c| c.mean_length),
            hallucination_rate: m(|c| c.hallucination_rate),
        })
    }
}

/// Scores keyed by (train domain, eval domain).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub cells: BTreeMap<(Domain, Domain), CellScores>,
}

pub const CSV_HEADER: [&str; 11] = [
    "train",
    "eval",
    "n_test",
    "n_valid",
    "rouge1",
    "rouge2",
    "rougeL",
    "faithfulness_rougeL",
    "mean_length",
    "hallucination_rate",
    "bertscore",
];

impl ScoreReport {
    pub fn insert(&mut self, train: Domain, eval: Domain, cell: CellScores) {
        self.cells.insert((train, eval), cell);
    }

    pub fn is_complete(&self) -> bool {
        Domain::ALL
            .iter()
            .all(|&t| Domain::ALL.iter().all(|&e| self.cells.contains_key(&(t, e))))
    }

    /// One row per cell in domain order, matching [`CSV_HEADER`].
    /// `bertscore` is reserved and left empty.
    pub fn rows(&self) -> Vec<Vec<String>> {
        let f = |x: f64| format!("{x:.6}");
        self.cells
            .iter()
            .map(|((t, e), c)| {
                vec![
                    t.as_str().to_string(),
                    e.as_str().to_string(),
                    c.n_test.to_string(),
                    c.n_valid.to_string(),
                    f(c.rouge1),
                    f(c.rouge2),
                    f(c.rouge_l),
                    f(c.faithfulness_rouge_l),
                    f(c.mean_length),
                    f(c.hallucination_rate),
                    String::new(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in self.rows() {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    fn matrix(&self, title: &str, columns: &[&str], values: impl Fn(&CellScores) -> Vec<f64>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}\n");
        let mut head = String::from("| train \\ eval |");
        let mut rule = String::from("|---|");
        for e in Domain::ALL {
            for c in columns {
                let _ = write!(head, " {} {c} |", e.short());
                rule.push_str("---:|");
            }
        }
        let _ = writeln!(s, "{head}\n{rule}");
        for t in Domain::ALL {
            let _ = write!(s, "| {} |", t.short());
            for e in Domain::ALL {
                match self.cells.get(&(t, e)) {
                    Some(c) => values(c).iter().for_each(|v| {
                        let _ = write!(s, " {:.2} |", 100.0 * v);
                    }),
                    None => columns.iter().for_each(|_| s.push_str(" – |")),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Rows are training domains, columns evaluation domains, each with
    /// ROUGE-1/2/L F1 ×100.
    pub fn rouge_markdown(&self, title: &str) -> String {
        let mut s = self.matrix(title, &["R-1", "R-2", "R-L"], |c| vec![c.rouge1, c.rouge2, c.rouge_l]);
        let _ = write!(s, "\n{FAITHFULNESS_NOTE}\n");
        s
    }

    /// ROUGE-L F1 ×100 between predictions and transcripts (validation).
    pub fn faithfulness_markdown(&self, title: &str) -> String {
        self.matrix(title, &["R-L"], |c| vec![c.faithfulness_rouge_l])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold(id: &str, summary: &str, transcript: &str) -> Example {
        Example {
            id: id.into(),
            meeting_id: "m".into(),
            domain: Domain::Product,
            query: "q".into(),
            transcript: transcript.into(),
            summary: summary.into(),
        }
    }

    fn pred(id: &str, p: &str) -> Prediction {
        Prediction {
            id: id.into(),
            prediction: p.into(),
        }
    }

    #[test]
    fn join_requires_exact_id_coverage() {
        let g = vec![gold("a", "x", "t"), gold("b", "y", "t")];
        let p = vec![pred("b", "2"), pred("a", "1")];
        let j = join_predictions(&p, &g).unwrap();
        assert_eq!(j.iter().map(|(e, p)| (e.id.as_str(), *p)).collect::<Vec<_>>(), [("a", "1"), ("b", "2")]);
        assert!(join_predictions(&p[..1], &g).is_err());
        let extra = vec![pred("a", ""), pred("b", ""), pred("c", "")];
        assert!(join_predictions(&extra, &g).is_err());
        let dup = vec![pred("a", ""), pred("a", ""), pred("b", "")];
        assert!(join_predictions(&dup, &g).is_err());
    }

    #[test]
    fn report_renders_all_cells() {
        let g = [gold("a", "the cat sat", "the cat sat on the mat")];
        let p = [pred("a", "the red cat")];
        let scores = score_examples(&join_predictions(&p, &g).unwrap()).unwrap();
        assert_eq!(scores[0].length, 3);
        assert!((scores[0].hallucination - 1.0 / 3.0).abs() < 1e-15);
        let cell = CellScores::new(&scores, &scores).unwrap();
        let mut r = ScoreReport::default();
        assert!(!r.is_complete());
        for t in Domain::ALL {
            for e in Domain::ALL {
                r.insert(t, e, cell);
            }
        }
        assert!(r.is_complete());
        let csv = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == CSV_HEADER.len()));
        let md = r.rouge_markdown("Table");
        assert_eq!(md.lines().filter(|l| l.starts_with("| pro") || l.starts_with("| aca") || l.starts_with("| com")).count(), 3);
        assert!(!r.faithfulness_markdown("F").contains('–'));
    }
}
