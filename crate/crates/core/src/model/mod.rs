//! A small pre-norm decoder-only transformer.
//!
//! Parameters live in one name-keyed map so the optimizer, the clipping code
//! and the checkpoint writer all see the same view. LoRA adapters, when
//! attached, sit in the same map under `<projection>.lora_a` / `.lora_b` and
//! are then the only trainable entries.

mod beam;
mod checkpoint;
mod config;
mod infer;
pub mod layout;

use std::collections::BTreeMap;

use crate::autodiff::{Tape, Tensor, Var};
use crate::dp::GradMap;
use crate::error::{Error, Result};
use crate::lora::{self, LoraAdapter, LoraConfig};
use crate::rng::{derive_seed, seeded};

pub use beam::{generate_beam, greedy, BeamConfig, Decoder, Hypothesis};
pub use checkpoint::{
    read_checkpoint, write_atomic, write_checkpoint, CheckpointHeader, TensorEntry, ADAPTER_FILE, BASE_FILE,
};
pub use config::ModelConfig;
pub use infer::{InferenceModel, KvCache};
pub use layout::{serialize_example, serialize_prompt, Batch, Encoded};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub lora: Option<LoraConfig>,
    pub params: GradMap,
}

fn layer_name(l: usize, rest: &str) -> String {
    format!("h{l}.{rest}")
}

impl Model {
    /// Random initialization: weights `N(0, 0.02²)` with residual output
    /// projections scaled by `1/√(2·n_layers)`, zero biases, unit gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(derive_seed(seed, "init"));
        let (v, l, d, f) = (
            config.vocab_size,
            config.context_length,
            config.d_model,
            config.d_ff(),
        );
        let resid_std = INIT_STD / (2.0 * config.n_layers as f64).sqrt();
        let mut params = GradMap::new();
        params.insert("tok_emb".into(), Tensor::randn(&[v, d], INIT_STD, &mut rng));
        params.insert("pos_emb".into(), Tensor::randn(&[l, d], INIT_STD / 2.0, &mut rng));
        for layer in 0..config.n_layers {
            let mut put = |rest: &str, t: Tensor| {
                params.insert(layer_name(layer, rest), t);
            };
            put("ln1.g", Tensor::filled(&[d], 1.0));
            put("ln1.b", Tensor::zeros(&[d]));
            for proj in ["q", "k", "v"] {
                put(&format!("attn.{proj}.w"), Tensor::randn(&[d, d], INIT_STD, &mut rng));
                put(&format!("attn.{proj}.b"), Tensor::zeros(&[d]));
            }
            put("attn.o.w", Tensor::randn(&[d, d], resid_std, &mut rng));
            put("attn.o.b", Tensor::zeros(&[d]));
            put("ln2.g", Tensor::filled(&[d], 1.0));
            put("ln2.b", Tensor::zeros(&[d]));
            put("mlp.fc.w", Tensor::randn(&[d, f], INIT_STD, &mut rng));
            put("mlp.fc.b", Tensor::zeros(&[f]));
            put("mlp.proj.w", Tensor::randn(&[f, d], resid_std, &mut rng));
            put("mlp.proj.b", Tensor::zeros(&[d]));
        }
        params.insert("ln_f.g".into(), Tensor::filled(&[d], 1.0));
        params.insert("ln_f.b".into(), Tensor::zeros(&[d]));
        if !config.tie_embeddings {
            params.insert("lm_head.w".into(), Tensor::randn(&[v, d], INIT_STD, &mut rng));
        }
        Ok(Self {
            config,
            lora: None,
            params,
        })
    }

    /// Adds fresh adapters on every layer's target projections and freezes
    /// the base weights.
    pub fn attach_lora(&mut self, cfg: LoraConfig, seed: u64) -> Result<()> {
        if self.lora.is_some() {
            return Err(Error::Usage("adapters are already attached".into()));
        }
        let d = self.config.d_model;
        cfg.validate(d, d)?;
        let mut rng = seeded(derive_seed(seed, "lora"));
        for l in 0..self.config.n_layers {
            for t in &cfg.targets {
                let layer = layer_name(l, &format!("attn.{t}"));
                let a = LoraAdapter::new(&layer, d, d, &cfg, &mut rng)?;
                self.params.insert(lora::a_name(&layer), a.a);
                self.params.insert(lora::b_name(&layer), a.b);
            }
        }
        self.lora = Some(cfg);
        Ok(())
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.lora.is_none() || lora::is_adapter_param(name)
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.params.keys().filter(|n| self.is_trainable(n)).cloned().collect()
    }

    pub fn base_param_count(&self) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| !lora::is_adapter_param(n))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn adapter_param_count(&self) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| lora::is_adapter_param(n))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn trainable_fraction(&self) -> f64 {
        lora::trainable_fraction(self.base_param_count(), self.adapter_param_count())
    }

    /// Records every parameter on the tape; frozen ones carry no gradient.
    pub fn bind(&self, tape: &mut Tape) -> BTreeMap<String, Var> {
        self.params
            .iter()
            .map(|(n, t)| (n.clone(), tape.param(n, t.clone(), self.is_trainable(n))))
            .collect()
    }

    /// Logits `[batch, seq, V]` for `inputs` holding `batch × seq` ids.
    pub fn logits(
        &self,
        tape: &mut Tape,
        vars: &BTreeMap<String, Var>,
        inputs: &[usize],
        batch: usize,
    ) -> Result<Var> {
        let cfg = &self.config;
        if batch == 0 || inputs.len() % batch != 0 {
            return Err(Error::Usage(format!("{} ids do not split into {batch} rows", inputs.len())));
        }
        let seq = inputs.len() / batch;
        if seq > cfg.context_length {
            return Err(Error::ContextOverflow {
                len: seq,
                context: cfg.context_length,
            });
        }
        let p = |name: &str| -> Result<Var> {
            vars.get(name)
                .copied()
                .ok_or_else(|| Error::Structure(format!("missing parameter {name}")))
        };
        let positions: Vec<usize> = (0..batch).flat_map(|_| 0..seq).collect();
        let tok = tape.embed(p("tok_emb")?, inputs, batch)?;
        let pos = tape.embed(p("pos_emb")?, &positions, batch)?;
        let mut x = tape.add(tok, pos)?;
        for l in 0..cfg.n_layers {
            let n = |rest: &str| layer_name(l, rest);
            let h = tape.layer_norm(x, p(&n("ln1.g"))?, p(&n("ln1.b"))?)?;
            let mut qkv = [h; 3];
            for (slot, proj) in qkv.iter_mut().zip(["q", "k", "v"]) {
                *slot = self.projection(tape, vars, h, &n(&format!("attn.{proj}")))?;
            }
            let a = tape.causal_attention(qkv[0], qkv[1], qkv[2], cfg.n_heads)?;
            let o = self.projection(tape, vars, a, &n("attn.o"))?;
            x = tape.add(x, o)?;
            let h = tape.layer_norm(x, p(&n("ln2.g"))?, p(&n("ln2.b"))?)?;
            let f = tape.affine(h, p(&n("mlp.fc.w"))?, Some(p(&n("mlp.fc.b"))?))?;
            let f = tape.gelu(f)?;
            let m = tape.affine(f, p(&n("mlp.proj.w"))?, Some(p(&n("mlp.proj.b"))?))?;
            x = tape.add(x, m)?;
        }
        let x = tape.layer_norm(x, p("ln_f.g")?, p("ln_f.b")?)?;
        let head = if cfg.tie_embeddings { "tok_emb" } else { "lm_head.w" };
        tape.affine_t(x, p(head)?, None)
    }

    fn projection(
        &self,
        tape: &mut Tape,
        vars: &BTreeMap<String, Var>,
        x: Var,
        layer: &str,
    ) -> Result<Var> {
        let get = |name: String| {
            vars.get(&name)
                .copied()
                .ok_or_else(|| Error::Structure(format!("missing parameter {name}")))
        };
        let w = get(format!("{layer}.w"))?;
        let b = get(format!("{layer}.b"))?;
        match (&self.lora, vars.get(&lora::a_name(layer))) {
            (Some(cfg), Some(&a)) => {
                let bb = get(lora::b_name(layer))?;
                lora::lora_forward(tape, x, w, Some(b), a, bb, cfg.scaling())
            }
            _ => tape.affine(x, w, Some(b)),
        }
    }

    /// Per-example mean NLL over the masked positions, shape `[batch]`.
    pub fn forward_loss(&self, tape: &mut Tape, batch: &Batch) -> Result<Var> {
        if let Some(&bad) = batch.inputs.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Index(format!(
                "token {bad} >= vocab_size {}",
                self.config.vocab_size
            )));
        }
        let vars = self.bind(tape);
        let logits = self.logits(tape, &vars, &batch.inputs, batch.batch)?;
        tape.cross_entropy(logits, &batch.targets, &batch.mask)
    }

    /// Convenience: per-example losses without keeping the tape.
    pub fn losses(&self, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let l = self.forward_loss(&mut tape, batch)?;
        Ok(tape.value(l).data().to_vec())
    }

    pub fn inference(&self) -> Result<InferenceModel<'_>> {
        InferenceModel::new(self)
    }
}
