//! `dpmeet`: ingest, train, generate, evaluate, crossdomain, account, synth.
//!
//! Exit status is 0 on success, 2 for configuration and usage errors, 3 for
//! runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dpmeet_core::data::{corpus_bytes, flatten, load_corpus, synth_corpus, Domain, Split, SynthConfig};
use dpmeet_core::dp::ClipMode;
use dpmeet_core::harness::{
    corpus_table, crossdomain, length_table, plan, predictions_bytes, read_jsonl, train, CrossdomainConfig,
    Mode, Overrides, PlanRequest, RunConfig, RunManifest, Table, TrainedRun,
};
use dpmeet_core::metrics::{join_predictions, length_stats, score_examples, CellScores, Prediction, CSV_HEADER};
use dpmeet_core::model::write_atomic;
use dpmeet_core::Error;

#[derive(Parser)]
#[command(name = "dpmeet", version, about = "Differentially private query-focused meeting summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and print per-domain statistics.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train one model and write its checkpoint and manifest.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Per-epoch losses as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Beam-search summaries for one split of one domain.
    Generate {
        /// A finished run directory.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: Domain,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Defaults to `<run>/predictions/<domain>.<split>.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predictions file against the gold summaries.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: Domain,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train (as needed) and evaluate every train × eval domain cell.
    Crossdomain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "dp_ghost")]
        modes: Vec<Mode>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Fail on a missing run instead of training it.
        #[arg(long)]
        no_train: bool,
        /// All cells of all modes as one CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Calibrate σ for a privacy budget and show the per-order accounting.
    Account {
        #[arg(long)]
        target_eps: f64,
        /// Defaults to 1/(2·dataset size).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        dataset_size: usize,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a synthetic three-domain corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        meetings_per_domain: Option<usize>,
        #[arg(long)]
        queries_per_meeting: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    train_domain: Option<Domain>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    target_eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    clipping_norm: Option<f64>,
    #[arg(long)]
    noise_multiplier: Option<f64>,
    #[arg(long)]
    clip_mode: Option<ClipMode>,
    /// Base checkpoint directory for dp_pft.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            corpus: self.corpus.clone(),
            train_domain: self.train_domain,
            mode: self.mode,
            target_epsilon: self.target_eps,
            delta: self.delta,
            clipping_norm: self.clipping_norm,
            noise_multiplier: self.noise_multiplier,
            clip_mode: self.clip_mode,
            base: self.base.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            seed: self.seed,
            out_dir: self.out.clone(),
        });
        Ok(cfg)
    }
}

fn emit(table: &Table, csv: Option<&Path>) -> anyhow::Result<()> {
    print!("{}", table.to_text());
    if let Some(p) = csv {
        write_atomic(p, &table.to_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn gold(corpus: &Path, domain: Domain, split: Split) -> anyhow::Result<Vec<dpmeet_core::data::Example>> {
    let s = flatten(&load_corpus(corpus)?, Some(domain));
    let ex = s.get(split).to_vec();
    if ex.is_empty() {
        return Err(Error::NoRecords(format!("no {split} examples for domain {domain}")).into());
    }
    Ok(ex)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { corpus, csv } => {
            let records = load_corpus(&corpus)?;
            flatten(&records, None).check_disjoint()?;
            println!("{} meetings in {}", records.len(), corpus.display());
            emit(&corpus_table(&records), csv.as_deref())
        }
        Command::Train { run, csv } => {
            let cfg = run.resolve()?;
            let m = train(&cfg, &mut |e, loss| eprintln!("epoch {:>3}  loss {loss:.6}", e + 1))?;
            let mut t = Table::new(["epoch", "loss"]);
            for (i, l) in m.epoch_losses.iter().enumerate() {
                t.push([(i + 1).to_string(), format!("{l:.6}")]);
            }
            emit(&t, csv.as_deref())?;
            println!("examples {}  steps {}  trainable fraction {:.4}", m.train_examples, m.steps, m.trainable_fraction);
            if let (Some(s), Some(e)) = (m.noise_multiplier, m.epsilon) {
                println!("noise multiplier {s:.6}  epsilon {e:.6}");
            }
            println!("wrote {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Generate {
            run,
            corpus,
            domain,
            split,
            out,
        } => {
            let manifest = RunManifest::load(&run)?;
            let trained = TrainedRun::open(&run)?;
            let preds = trained.predict(&gold(&corpus, domain, split)?, &manifest.config.decode)?;
            let out = out.unwrap_or_else(|| run.join("predictions").join(format!("{domain}.{split}.jsonl")));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_atomic(&out, &predictions_bytes(&preds)?)?;
            println!("wrote {} predictions to {}", preds.len(), out.display());
            Ok(())
        }
        Command::Evaluate {
            predictions,
            corpus,
            domain,
            split,
            csv,
        } => {
            let preds: Vec<Prediction> = read_jsonl(&predictions)?;
            let g = gold(&corpus, domain, split)?;
            let scores = score_examples(&join_predictions(&preds, &g)?)?;
            // one split only, so faithfulness comes from the same examples
            let c = CellScores::new(&scores, &scores)?;
            let lens = length_stats(&scores.iter().map(|s| s.length).collect::<Vec<_>>())?;
            let mut t = Table::new([
                "n", "rouge1", "rouge2", "rougeL", "faithfulness_rougeL", "hallucination_rate", "mean_length",
                "stddev_length", "mode_mass",
            ]);
            let f = |x: f64| format!("{x:.6}");
            t.push([
                c.n_test.to_string(),
                f(c.rouge1),
                f(c.rouge2),
                f(c.rouge_l),
                f(c.faithfulness_rouge_l),
                f(c.hallucination_rate),
                f(lens.mean),
                f(lens.stddev),
                f(lens.mode_mass),
            ]);
            emit(&t, csv.as_deref())
        }
        Command::Crossdomain {
            run,
            modes,
            seeds,
            no_train,
            csv,
        } => {
            let cfg = run.resolve()?;
            let out_dir = cfg.out_dir.clone();
            let cd = CrossdomainConfig {
                run: cfg,
                modes,
                seeds,
                out_dir,
                train_missing: !no_train,
            };
            let out = crossdomain(&cd, &mut |line| eprintln!("{line}"))?;
            print!("{}", fs::read_to_string(cd.out_dir.join("report.md"))?);
            if let Some(p) = csv {
                let mut t = Table::new(std::iter::once("mode").chain(CSV_HEADER));
                for (mode, r) in &out.reports {
                    for row in r.rows() {
                        t.push(std::iter::once(mode.as_str().to_string()).chain(row));
                    }
                }
                write_atomic(&p, &t.to_csv()?)?;
            }
            eprintln!("{}", length_table(&out.lengths).to_text());
            Ok(())
        }
        Command::Account {
            target_eps,
            delta,
            dataset_size,
            batch_size,
            epochs,
            csv,
        } => {
            let p = plan(&PlanRequest {
                target_epsilon: target_eps,
                delta,
                dataset_size,
                batch_size,
                epochs,
            })?;
            print!("{}", p.summary());
            println!();
            emit(&p.order_table(), csv.as_deref())
        }
        Command::Synth {
            out,
            config,
            seed,
            meetings_per_domain,
            queries_per_meeting,
        } => {
            let mut cfg: SynthConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = meetings_per_domain {
                cfg.meetings_per_domain = m;
            }
            if let Some(q) = queries_per_meeting {
                cfg.queries_per_meeting = q;
            }
            let records = synth_corpus(&cfg);
            write_atomic(&out, &corpus_bytes(&records)?)?;
            println!("wrote {} meetings to {}", records.len(), out.display());
            emit(&corpus_table(&records), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<Error>().is_some_and(Error::is_config);
            ExitCode::from(if config { 2 } else { 3 })
        }
    }
}
