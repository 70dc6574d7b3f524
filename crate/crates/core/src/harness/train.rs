//! The training loop and its run manifest.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{Mode, ResolvedPrivacy, RunConfig};
use crate::accountant::accounting_table;
use crate::autodiff::{GradMode, Tape};
use crate::data::{flatten, parse_corpus, sha256_hex, Example, Tokenizer};
use crate::dp::{
    adamw_step, clip_factors, clipped_sum, clipped_sum_captured, dp_adam_step, mean_gradient,
    per_example_gradients, per_example_norms_ghost, per_example_norms_naive, privatize, AdamConfig,
    ClipConfig, ClipMode, OptimState,
};
use crate::error::{Error, Result};
use crate::model::{serialize_example, write_atomic, Batch, Encoded, Model, ADAPTER_FILE, BASE_FILE};
use crate::rng::{derive_seed, seeded};

pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".lock";

/// Exclusive ownership of an output directory for the lifetime of a run.
pub struct DirLock(PathBuf);

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// One optimizer step at a time over a model.
pub struct Trainer {
    pub model: Model,
    pub state: OptimState,
    pub mode: Mode,
    pub privacy: Option<ResolvedPrivacy>,
    names: Vec<String>,
    noise_seed: u64,
    /// Steps taken so far.
    pub step: u64,
}

impl Trainer {
    pub fn new(model: Model, mode: Mode, optimizer: AdamConfig, privacy: Option<ResolvedPrivacy>, seed: u64) -> Result<Self> {
        if mode.is_private() != privacy.is_some() {
            return Err(Error::Config(format!(
                "mode {} {} privacy parameters",
                mode.as_str(),
                if mode.is_private() { "requires" } else { "does not take" }
            )));
        }
        let names = model.trainable_names();
        Ok(Trainer {
            model,
            state: OptimState::new(optimizer),
            mode,
            privacy,
            names,
            noise_seed: derive_seed(seed, "noise"),
            step: 0,
        })
    }

    /// Updates the parameters on `batch`; returns the batch's mean loss
    /// before the update.
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        let step = self.step;
        let diverged = |e: Error| match e {
            Error::NonFinite(_) => Error::Diverged { step: step as usize },
            e => e,
        };
        self.step_inner(batch).map_err(diverged)
    }

    fn step_inner(&mut self, batch: &Batch) -> Result<f64> {
        let b = batch.batch;
        let mut tape = Tape::new();
        let losses = self.model.forward_loss(&mut tape, batch)?;
        let per_example = tape.value(losses).data().to_vec();
        let mean_loss = per_example.iter().sum::<f64>() / b as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { step: self.step as usize });
        }
        let ones = vec![1.0; b];
        let grad = match &self.privacy {
            None => mean_gradient(&tape.backward(losses, &ones, GradMode::Summed)?.into_params(), b),
            Some(p) => {
                let c = p.spec.clipping_norm;
                let names = self.names.iter().map(String::as_str);
                let sum = match p.clip_mode {
                    ClipMode::Ghost => {
                        let caps = tape.backward(losses, &ones, GradMode::PerExample)?.into_captures()
                            .ok_or_else(|| Error::Structure("per-example backward kept no captures".into()))?;
                        let norms = per_example_norms_ghost(&caps, names.clone())?;
                        clipped_sum_captured(&caps, &clip_factors(&norms, c), &self.model.params, names)?
                    }
                    ClipMode::Naive => {
                        let grads = per_example_gradients(&tape, losses)?;
                        let norms = per_example_norms_naive(&grads)?;
                        clipped_sum(&grads, &clip_factors(&norms, c))?
                    }
                };
                let cfg = ClipConfig {
                    clipping_norm: c,
                    noise_multiplier: p.spec.noise_multiplier,
                    batch_size: b,
                    mode: p.clip_mode,
                };
                privatize(&sum, &cfg, self.noise_seed, self.step)?
            }
        };
        match self.mode {
            Mode::DpPft => adamw_step(&mut self.model.params, &grad, &mut self.state)?,
            Mode::Nondp | Mode::DpGhost => dp_adam_step(&mut self.model.params, &grad, &mut self.state)?,
        }
        self.step += 1;
        Ok(mean_loss)
    }
}

/// Everything a finished run reports about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// The configuration with every default and derived value filled in.
    pub config: RunConfig,
    pub train_examples: usize,
    pub steps: u64,
    pub sample_rate: Option<f64>,
    pub noise_multiplier: Option<f64>,
    /// ε spent, accounted after the last step.
    pub epsilon: Option<f64>,
    pub best_order: Option<f64>,
    pub epoch_losses: Vec<f64>,
    pub trainable_params: usize,
    pub trainable_fraction: f64,
    pub wall_time_secs: f64,
    pub seed: u64,
    /// SHA-256 of the resolved config, the corpus file, the tokenizer table
    /// and each checkpoint file.
    pub hashes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingCheckpoint(path.display().to_string()),
            _ => e.into(),
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Corpus, tokenizer and encoded training examples for one run.
pub struct Prepared {
    pub corpus_hash: String,
    pub tokenizer: Tokenizer,
    pub train: Vec<Example>,
    pub encoded: Vec<Encoded>,
}

/// Loads the corpus and builds the tokenizer from the training splits of all
/// domains, so that every run over one corpus shares a single table.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let bytes = fs::read(&cfg.corpus).map_err(|e| {
        Error::Config(format!("cannot read corpus {}: {e}", cfg.corpus.display()))
    })?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::Config(format!("corpus {} is not UTF-8: {e}", cfg.corpus.display())))?;
    let records = parse_corpus(text, &cfg.corpus.display().to_string())?;
    let all = flatten(&records, None);
    all.check_disjoint()?;
    let tokenizer = Tokenizer::build(&all.train, cfg.max_vocab)?;
    let train = flatten(&records, Some(cfg.train_domain)).train;
    if train.is_empty() {
        return Err(Error::NoRecords(format!(
            "{}: no training examples for domain {}",
            cfg.corpus.display(),
            cfg.train_domain
        )));
    }
    let encoded = train
        .iter()
        .map(|e| {
            serialize_example(
                &tokenizer.encode(&e.query),
                &tokenizer.encode(&e.transcript),
                &tokenizer.encode(&e.summary),
                cfg.model.context_length,
            )
            .map_err(|err| Error::Config(format!("example {}: {err}", e.id)))
        })
        .collect::<Result<_>>()?;
    Ok(Prepared {
        corpus_hash: sha256_hex(&bytes),
        tokenizer,
        train,
        encoded,
    })
}

fn initial_model(cfg: &RunConfig, vocab: usize, tokenizer_hash: &str) -> Result<Model> {
    let mut mc = cfg.model.clone();
    mc.vocab_size = vocab;
    let mut model = match (&cfg.base, cfg.mode) {
        (Some(dir), Mode::DpPft) => {
            let (m, hash) = Model::load(dir)?;
            if hash != tokenizer_hash || m.config != mc || m.lora.is_some() {
                return Err(Error::Config(format!(
                    "base checkpoint {} does not match this corpus and model configuration",
                    dir.display()
                )));
            }
            m
        }
        _ => Model::init(mc, derive_seed(cfg.seed, "init"))?,
    };
    if cfg.mode == Mode::DpPft {
        model.attach_lora(cfg.lora.clone(), derive_seed(cfg.seed, "lora"))?;
    }
    Ok(model)
}

/// Trains per `cfg` into `cfg.out_dir`: tokenizer table, checkpoint files and
/// the manifest (written last, atomically). `on_epoch` sees each epoch's mean
/// training loss.
pub fn train(cfg: &RunConfig, on_epoch: &mut dyn FnMut(usize, f64)) -> Result<RunManifest> {
    cfg.validate()?;
    let started = Instant::now();
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let prep = prepare(cfg)?;
    let n = prep.encoded.len();
    let mut resolved = cfg.clone();
    let privacy = resolved.resolve_privacy(n)?;
    let tok_json = prep.tokenizer.to_json();
    let tok_hash = sha256_hex(&tok_json);
    let model = initial_model(&resolved, prep.tokenizer.len(), &tok_hash)?;
    let (trainable_params, trainable_fraction) = if model.lora.is_some() {
        (model.adapter_param_count(), model.trainable_fraction())
    } else {
        (model.base_param_count(), 1.0)
    };
    let mut trainer = Trainer::new(model, resolved.mode, resolved.optimizer(), privacy, resolved.seed)?;
    let mut epoch_losses = Vec::with_capacity(resolved.epochs);
    for epoch in 0..resolved.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeded(derive_seed(resolved.seed, &format!("shuffle/{epoch}"))));
        let mut total = 0.0;
        for chunk in order.chunks(resolved.batch_size) {
            let batch = Batch::from_examples(&chunk.iter().map(|&i| &prep.encoded[i]).collect::<Vec<_>>())?;
            total += trainer.step(&batch)? * chunk.len() as f64;
        }
        let mean = total / n as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    let steps = resolved.steps(n);
    assert_eq!(steps, trainer.step);
    let (epsilon, best_order) = match &privacy {
        Some(p) => {
            let t = accounting_table(p.spec.noise_multiplier, p.spec.sample_rate, trainer.step, p.spec.delta)?;
            if t.epsilon > p.spec.target_epsilon {
                return Err(Error::Config(format!(
                    "run spent epsilon {} above its target {}",
                    t.epsilon, p.spec.target_epsilon
                )));
            }
            (Some(t.epsilon), Some(t.best_order))
        }
        None => (None, None),
    };

    let dir = resolved.out_dir.clone();
    let dir = dir.as_path();
    write_atomic(&dir.join(TOKENIZER_FILE), &tok_json)?;
    let written = trainer.model.save(dir, &tok_hash)?;
    let mut hashes = BTreeMap::new();
    hashes.insert("config".to_string(), sha256_hex(&serde_json::to_vec(&resolved)?));
    hashes.insert("corpus".to_string(), prep.corpus_hash.clone());
    hashes.insert(TOKENIZER_FILE.to_string(), tok_hash);
    for path in &written {
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        assert!(name == BASE_FILE || name == ADAPTER_FILE);
        hashes.insert(name, sha256_hex(&fs::read(path)?));
    }
    let manifest = RunManifest {
        train_examples: n,
        steps,
        sample_rate: privacy.map(|p| p.spec.sample_rate),
        noise_multiplier: privacy.map(|p| p.spec.noise_multiplier),
        epsilon,
        best_order,
        epoch_losses,
        trainable_params,
        trainable_fraction,
        wall_time_secs: started.elapsed().as_secs_f64(),
        seed: resolved.seed,
        hashes,
        config: resolved,
    };
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}
