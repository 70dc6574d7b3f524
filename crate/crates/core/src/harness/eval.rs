//! Generation from trained runs and the train × eval domain matrix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig};
use super::table::Table;
use super::train::{train, RunManifest, MANIFEST_FILE, TOKENIZER_FILE};
use crate::data::{flatten, load_corpus, Domain, Example, Split, Tokenizer};
use crate::error::{Error, Result};
use crate::metrics::{
    join_predictions, length_stats, score_examples, CellScores, ExampleScores, LengthStats, Prediction,
    ScoreReport,
};
use crate::model::layout::EOS;
use crate::model::{generate_beam, serialize_prompt, write_atomic, BeamConfig, Model};

/// A finished run loaded back from its directory.
pub struct TrainedRun {
    pub model: Model,
    pub tokenizer: Tokenizer,
}

impl TrainedRun {
    pub fn open(dir: &Path) -> Result<Self> {
        let (model, hash) = Model::load(dir)?;
        let tok_path = dir.join(TOKENIZER_FILE);
        let bytes = fs::read(&tok_path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingCheckpoint(tok_path.display().to_string()),
            _ => e.into(),
        })?;
        let tokenizer = Tokenizer::from_json(&bytes)?;
        if tokenizer.hash() != hash || tokenizer.len() != model.config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "{}: tokenizer does not match the checkpoint",
                dir.display()
            )));
        }
        Ok(TrainedRun { model, tokenizer })
    }

    /// Beam-search summaries for `examples`, in order.
    pub fn predict(&self, examples: &[Example], beam: &BeamConfig) -> Result<Vec<Prediction>> {
        let inf = self.model.inference()?;
        examples
            .iter()
            .map(|e| {
                let prompt = serialize_prompt(
                    &self.tokenizer.encode(&e.query),
                    &self.tokenizer.encode(&e.transcript),
                    self.model.config.context_length,
                    beam.max_new_tokens,
                )?;
                let hyp = generate_beam(&inf, &prompt, beam)?;
                Ok(Prediction {
                    id: e.id.clone(),
                    prediction: self.tokenizer.decode(hyp.content(EOS)),
                })
            })
            .collect()
    }
}

pub fn predictions_bytes(preds: &[Prediction]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for p in preds {
        serde_json::to_writer(&mut out, p)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let de = &mut serde_json::Deserializer::from_str(l);
            serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
                line: i + 1,
                path: format!("{}: {}", path.display(), e.path()),
                msg: e.inner().to_string(),
            })
        })
        .collect()
}

/// Settings for a full matrix: one run per (mode, seed, training domain).
#[derive(Debug, Clone)]
pub struct CrossdomainConfig {
    /// Shared settings; privacy fields only apply to private modes.
    pub run: RunConfig,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Train runs whose directory has no manifest; otherwise a missing run is
    /// an error.
    pub train_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub mode: Mode,
    /// `None` pools every training domain.
    pub train: Option<Domain>,
    pub stats: LengthStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossdomainOutput {
    pub reports: BTreeMap<Mode, ScoreReport>,
    pub lengths: Vec<LengthRow>,
    pub files: Vec<PathBuf>,
}

pub fn run_dir(root: &Path, mode: Mode, seed: u64, train: Domain) -> PathBuf {
    root.join(mode.as_str()).join(format!("seed{seed}")).join(train.as_str())
}

fn config_for(base: &RunConfig, mode: Mode, seed: u64, train: Domain, dir: PathBuf) -> RunConfig {
    let mut c = base.clone();
    c.mode = mode;
    c.seed = seed;
    c.train_domain = train;
    c.out_dir = dir;
    if !mode.is_private() {
        c.target_epsilon = None;
        c.delta = None;
        c.clipping_norm = None;
        c.noise_multiplier = None;
        c.clip_mode = None;
    }
    if mode != Mode::DpPft {
        c.base = None;
    }
    c
}

/// Trains (if allowed and needed) every run of the matrix, predicts the test
/// and validation splits of each evaluation domain with every run, and
/// writes per-mode score CSVs, length statistics and a markdown report under
/// `out_dir`. `progress` receives one line per finished unit of work.
pub fn crossdomain(cfg: &CrossdomainConfig, progress: &mut dyn FnMut(&str)) -> Result<CrossdomainOutput> {
    if cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("crossdomain needs at least one mode and one seed".into()));
    }
    let records = load_corpus(&cfg.run.corpus)?;
    let gold: BTreeMap<(Domain, Split), Vec<Example>> = Domain::ALL
        .iter()
        .flat_map(|&d| {
            let s = flatten(&records, Some(d));
            [((d, Split::Test), s.test), ((d, Split::Valid), s.valid)]
        })
        .collect();
    for ((d, s), ex) in &gold {
        if ex.is_empty() {
            return Err(Error::NoRecords(format!("no {s} examples for domain {d}")));
        }
    }
    let mut files = Vec::new();
    let mut reports = BTreeMap::new();
    let mut lengths = Vec::new();
    for &mode in &cfg.modes {
        let mut per_seed: BTreeMap<(Domain, Domain), Vec<CellScores>> = BTreeMap::new();
        let mut lens: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
        for &seed in &cfg.seeds {
            for train_d in Domain::ALL {
                let dir = run_dir(&cfg.out_dir, mode, seed, train_d);
                if !dir.join(MANIFEST_FILE).exists() {
                    if !cfg.train_missing {
                        return Err(Error::MissingCheckpoint(dir.display().to_string()));
                    }
                    let rc = config_for(&cfg.run, mode, seed, train_d, dir.clone());
                    let m = train(&rc, &mut |_, _| {})?;
                    let eps = m.epsilon.map_or(String::new(), |e| format!(", epsilon {e:.4}"));
                    progress(&format!(
                        "trained {} seed {seed} on {train_d}: final loss {:.4}{eps}",
                        mode.as_str(),
                        m.epoch_losses.last().copied().unwrap_or(f64::NAN)
                    ));
                }
                RunManifest::load(&dir)?;
                let run = TrainedRun::open(&dir)?;
                let pred_dir = dir.join("predictions");
                fs::create_dir_all(&pred_dir)?;
                for eval_d in Domain::ALL {
                    let mut scored: BTreeMap<Split, Vec<ExampleScores>> = BTreeMap::new();
                    for split in [Split::Test, Split::Valid] {
                        let g = &gold[&(eval_d, split)];
                        let preds = run.predict(g, &cfg.run.decode)?;
                        let path = pred_dir.join(format!("{eval_d}.{split}.jsonl"));
                        write_atomic(&path, &predictions_bytes(&preds)?)?;
                        files.push(path);
                        let s = score_examples(&join_predictions(&preds, g)?)?;
                        if split == Split::Test {
                            lens.entry(train_d).or_default().extend(s.iter().map(|x| x.length));
                        }
                        scored.insert(split, s);
                    }
                    per_seed
                        .entry((train_d, eval_d))
                        .or_default()
                        .push(CellScores::new(&scored[&Split::Test], &scored[&Split::Valid])?);
                }
                progress(&format!("scored {} seed {seed} trained on {train_d}", mode.as_str()));
            }
        }
        let mut report = ScoreReport::default();
        for ((t, e), cells) in per_seed {
            report.insert(t, e, CellScores::average(&cells)?);
        }
        let mode_dir = cfg.out_dir.join(mode.as_str());
        let path = mode_dir.join("scores.csv");
        write_atomic(&path, &report.to_csv()?)?;
        files.push(path);
        let all: Vec<usize> = lens.values().flatten().copied().collect();
        lengths.push(LengthRow {
            mode,
            train: None,
            stats: length_stats(&all)?,
        });
        for (d, l) in lens {
            lengths.push(LengthRow {
                mode,
                train: Some(d),
                stats: length_stats(&l)?,
            });
        }
        reports.insert(mode, report);
    }
    let (len_csv, hist_csv) = (length_table(&lengths), histogram_table(&lengths));
    for (name, bytes) in [
        ("lengths.csv", len_csv.to_csv()?),
        ("length_histogram.csv", hist_csv.to_csv()?),
        ("report.md", render_report(&reports, &len_csv).into_bytes()),
    ] {
        let path = cfg.out_dir.join(name);
        write_atomic(&path, &bytes)?;
        files.push(path);
    }
    Ok(CrossdomainOutput {
        reports,
        lengths,
        files,
    })
}

pub fn length_table(rows: &[LengthRow]) -> Table {
    let mut t = Table::new(["mode", "train", "count", "mean", "stddev", "mode_mass"]);
    for r in rows {
        t.push([
            r.mode.as_str().to_string(),
            r.train.map_or("all".to_string(), |d| d.to_string()),
            r.stats.count.to_string(),
            format!("{:.4}", r.stats.mean),
            format!("{:.4}", r.stats.stddev),
            format!("{:.4}", r.stats.mode_mass),
        ]);
    }
    t
}

fn histogram_table(rows: &[LengthRow]) -> Table {
    let mut t = Table::new(["mode", "bin_start", "count"]);
    for r in rows.iter().filter(|r| r.train.is_none()) {
        for (start, count) in &r.stats.histogram {
            t.push([r.mode.as_str().to_string(), start.to_string(), count.to_string()]);
        }
    }
    t
}

fn render_report(reports: &BTreeMap<Mode, ScoreReport>, lengths: &Table) -> String {
    let mut s = String::from("# Cross-domain evaluation\n\n");
    for (mode, r) in reports {
        s.push_str(&r.rouge_markdown(&format!("## ROUGE F1 ×100, {} (test)", mode.as_str())));
        s.push('\n');
        s.push_str(&r.faithfulness_markdown(&format!(
            "## Faithfulness, ROUGE-L F1 ×100 against transcripts, {} (validation)",
            mode.as_str()
        )));
        s.push('\n');
    }
    s.push_str("## Summary length (test predictions, tokens)\n\n");
    s.push_str(&lengths.to_markdown());
    s
}
