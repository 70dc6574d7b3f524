//! Run configuration: a JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accountant::{calibrate_sigma, default_delta, PrivacySpec};
use crate::data::Domain;
use crate::dp::{AdamConfig, ClipMode};
use crate::error::{Error, Result};
use crate::lora::LoraConfig;
use crate::model::{BeamConfig, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nondp,
    DpGhost,
    DpPft,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Nondp => "nondp",
            Mode::DpGhost => "dp_ghost",
            Mode::DpPft => "dp_pft",
        }
    }

    pub fn is_private(self) -> bool {
        self != Mode::Nondp
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nondp" => Ok(Mode::Nondp),
            "dp_ghost" => Ok(Mode::DpGhost),
            "dp_pft" => Ok(Mode::DpPft),
            _ => Err(Error::Config(format!("unknown mode {s:?} (expected nondp, dp_ghost or dp_pft)"))),
        }
    }
}

fn default_decode() -> BeamConfig {
    BeamConfig {
        beam_width: 5,
        max_new_tokens: 24,
        length_penalty: 1.0,
    }
}

/// Everything needed to reproduce one training run. Optional privacy and
/// optimizer fields are filled in by [`RunConfig::resolve_privacy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub train_domain: Domain,
    pub eval_domains: Vec<Domain>,
    pub mode: Mode,
    pub target_epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub clipping_norm: Option<f64>,
    /// Skips calibration; the run still fails if it overspends the target.
    pub noise_multiplier: Option<f64>,
    pub clip_mode: Option<ClipMode>,
    /// `vocab_size` is ignored; the tokenizer decides it.
    pub model: ModelConfig,
    pub max_vocab: usize,
    pub lora: LoraConfig,
    /// Base checkpoint directory for `dp_pft`; random init when absent.
    pub base: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub decode: BeamConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            train_domain: Domain::Product,
            eval_domains: Domain::ALL.to_vec(),
            mode: Mode::DpGhost,
            target_epsilon: None,
            delta: None,
            clipping_norm: None,
            noise_multiplier: None,
            clip_mode: None,
            model: ModelConfig::default(),
            max_vocab: 400,
            lora: LoraConfig::default(),
            base: None,
            epochs: 20,
            batch_size: 4,
            lr: None,
            weight_decay: None,
            decode: default_decode(),
            seed: 0,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Command-line overrides; every `Some` replaces the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub train_domain: Option<Domain>,
    pub mode: Option<Mode>,
    pub target_epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub clipping_norm: Option<f64>,
    pub noise_multiplier: Option<f64>,
    pub clip_mode: Option<ClipMode>,
    pub base: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Per-mode defaults: clipping norm, learning rate, weight decay.
fn mode_defaults(mode: Mode) -> (f64, f64, f64) {
    match mode {
        Mode::Nondp | Mode::DpGhost => (0.1, 2e-3, 0.0),
        Mode::DpPft => (0.1, 4e-4, 0.01),
    }
}

/// Privacy parameters fixed before training starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPrivacy {
    pub spec: PrivacySpec,
    pub clip_mode: ClipMode,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            Error::Config(format!("{}: {}: {}", path.display(), e.path(), e.inner()))
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &o.$f { self.$f = v.clone(); })*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$(if o.$f.is_some() { self.$f = o.$f.clone(); })*};
        }
        set!(corpus, train_domain, mode, epochs, batch_size, seed, out_dir);
        set_opt!(target_epsilon, delta, clipping_norm, noise_multiplier, clip_mode, base, lr, weight_decay);
    }

    /// Checks mode/flag consistency. Non-private runs reject every privacy
    /// setting; private runs need a target ε.
    pub fn validate(&self) -> Result<()> {
        let privacy_flags = [
            ("target_epsilon", self.target_epsilon.is_some()),
            ("delta", self.delta.is_some()),
            ("clipping_norm", self.clipping_norm.is_some()),
            ("noise_multiplier", self.noise_multiplier.is_some()),
            ("clip_mode", self.clip_mode.is_some()),
        ];
        if self.mode.is_private() {
            if self.target_epsilon.is_none() {
                return Err(Error::Config(format!("mode {} requires a target epsilon", self.mode.as_str())));
            }
        } else if let Some((name, _)) = privacy_flags.iter().find(|(_, set)| *set) {
            return Err(Error::Config(format!("mode nondp does not accept privacy setting {name}")));
        }
        if self.base.is_some() && self.mode != Mode::DpPft {
            return Err(Error::Config("a base checkpoint is only used by mode dp_pft".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.eval_domains.is_empty() {
            return Err(Error::Config("at least one evaluation domain is required".into()));
        }
        for v in [self.lr, self.weight_decay, self.delta, self.clipping_norm, self.noise_multiplier, self.target_epsilon]
            .into_iter()
            .flatten()
        {
            if !v.is_finite() {
                return Err(Error::Config(format!("non-finite setting {v}")));
            }
        }
        self.decode.validate()?;
        // the vocabulary size is taken from the tokenizer at training time
        ModelConfig {
            vocab_size: self.max_vocab,
            ..self.model.clone()
        }
        .validate()?;
        if self.decode.max_new_tokens >= self.model.context_length {
            return Err(Error::Config(format!(
                "max_new_tokens {} leaves no room for a prompt in context {}",
                self.decode.max_new_tokens, self.model.context_length
            )));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamConfig {
        let (_, lr, wd) = mode_defaults(self.mode);
        AdamConfig::new(self.lr.unwrap_or(lr), self.weight_decay.unwrap_or(wd))
    }

    /// `epochs · ⌈n/B⌉`.
    pub fn steps(&self, train_size: usize) -> u64 {
        (self.epochs * train_size.div_ceil(self.batch_size)) as u64
    }

    /// Fills in δ, C and σ for a training set of `train_size` examples,
    /// calibrating σ unless it was given. Returns `None` for non-private
    /// runs.
    pub fn resolve_privacy(&mut self, train_size: usize) -> Result<Option<ResolvedPrivacy>> {
        self.validate()?;
        let (c, lr, wd) = mode_defaults(self.mode);
        self.lr.get_or_insert(lr);
        self.weight_decay.get_or_insert(wd);
        if !self.mode.is_private() {
            return Ok(None);
        }
        if train_size == 0 {
            return Err(Error::NoRecords(format!("no training examples for domain {}", self.train_domain)));
        }
        let target = self.target_epsilon.expect("validated");
        let delta = *self.delta.get_or_insert(default_delta(train_size));
        let clipping_norm = *self.clipping_norm.get_or_insert(c);
        let clip_mode = *self.clip_mode.get_or_insert(ClipMode::Ghost);
        let sample_rate = (self.batch_size as f64 / train_size as f64).min(1.0);
        let steps = self.steps(train_size);
        let sigma = match self.noise_multiplier {
            Some(s) => s,
            None => calibrate_sigma(target, delta, sample_rate, steps)?,
        };
        self.noise_multiplier = Some(sigma);
        let spec = PrivacySpec {
            target_epsilon: target,
            delta,
            sample_rate,
            steps,
            noise_multiplier: sigma,
            clipping_norm,
        };
        spec.validate()?;
        Ok(Some(ResolvedPrivacy { spec, clip_mode }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nondp_rejects_privacy_flags() {
        let mut c = RunConfig {
            mode: Mode::Nondp,
            ..RunConfig::default()
        };
        c.validate().unwrap();
        c.noise_multiplier = Some(1.0);
        assert!(c.validate().unwrap_err().is_config());
        let mut c = RunConfig {
            mode: Mode::Nondp,
            target_epsilon: Some(8.0),
            ..RunConfig::default()
        };
        assert!(c.resolve_privacy(100).unwrap_err().is_config());
    }

    #[test]
    fn private_modes_need_a_target() {
        let c = RunConfig::default();
        assert!(c.validate().unwrap_err().is_config());
    }

    #[test]
    fn resolution_fills_delta_and_calibrates() {
        let mut c = RunConfig {
            target_epsilon: Some(8.0),
            ..RunConfig::default()
        };
        let p = c.resolve_privacy(690).unwrap().unwrap();
        assert_eq!(p.spec.delta, 1.0 / 1380.0);
        assert_eq!(p.spec.steps, 20 * 173);
        assert_eq!(p.spec.sample_rate, 4.0 / 690.0);
        assert_eq!(p.spec.clipping_norm, 0.1);
        let eps = p.spec.accounted_epsilon().unwrap();
        assert!(eps <= 8.0 && eps >= 8.0 - 1e-3, "{eps}");
        assert_eq!(c.noise_multiplier, Some(p.spec.noise_multiplier));
        assert_eq!(c.lr, Some(2e-3));
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            mode: Some(Mode::DpPft),
            lr: Some(1e-3),
            seed: Some(9),
            ..Overrides::default()
        });
        assert_eq!((c.mode, c.lr, c.seed), (Mode::DpPft, Some(1e-3), 9));
        assert_eq!(c.optimizer().weight_decay, 0.01);
    }

    #[test]
    fn config_files_reject_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"mode": "nondp", "epochz": 3}"#).unwrap();
        assert!(RunConfig::load(&p).unwrap_err().is_config());
        std::fs::write(&p, r#"{"mode": "nondp", "epochs": 3, "model": {"d_model": 32}}"#).unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!((c.epochs, c.model.d_model, c.model.n_layers), (3, 32, 2));
    }
}
