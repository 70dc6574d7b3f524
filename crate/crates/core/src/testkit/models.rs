//! Random tiny transformers and finite-difference checks over their
//! parameters.

use rand::Rng;

use super::gradcheck::{projection, rel_err, GradCheck, FD_STEP};
use crate::autodiff::{GradMode, Tape, Tensor};
use crate::error::Result;
use crate::lora::LoraConfig;
use crate::model::{layout, Batch, Encoded, Model, ModelConfig};
use crate::rng::{derive_seed, seeded};

/// Tiny configuration drawn from `seed`: `d ∈ {4, 8}`, 1–2 layers, 1–2
/// heads, 6–9 tokens, tied or untied head.
pub fn tiny_config(seed: u64) -> ModelConfig {
    let mut rng = seeded(derive_seed(seed, "tiny-config"));
    let d = [4, 8][rng.gen_range(0..2)];
    ModelConfig {
        vocab_size: rng.gen_range(6..=9),
        context_length: 16,
        d_model: d,
        n_layers: rng.gen_range(1..=2),
        n_heads: rng.gen_range(1..=2),
        tie_embeddings: rng.gen_bool(0.5),
    }
}

/// A random model whose weights are all perturbed away from their
/// initialization (so gains, biases and LoRA `B` are not trivial).
pub fn random_model(seed: u64, with_lora: bool) -> Model {
    let cfg = tiny_config(seed);
    let d = cfg.d_model;
    let mut m = Model::init(cfg, seed).expect("valid tiny config");
    if with_lora {
        let lc = LoraConfig {
            rank: 2.min(d),
            alpha: 4.0,
            targets: vec!["q".into(), "v".into()],
        };
        m.attach_lora(lc, seed).expect("valid adapter");
    }
    let mut rng = seeded(derive_seed(seed, "perturb"));
    for t in m.params.values_mut() {
        for v in t.data_mut() {
            *v += 0.3 * (rng.gen::<f64>() - 0.5);
        }
    }
    m
}

/// Random encoded examples of 3–12 tokens, each with at least one scored
/// position.
pub fn random_examples(seed: u64, vocab: usize, count: usize, context: usize) -> Vec<Encoded> {
    let mut rng = seeded(derive_seed(seed, "examples"));
    (0..count)
        .map(|_| {
            let q: Vec<usize> = (0..rng.gen_range(0..3))
                .map(|_| rng.gen_range(layout::NUM_SPECIALS..vocab))
                .collect();
            let x: Vec<usize> = (0..rng.gen_range(0..6))
                .map(|_| rng.gen_range(0..vocab))
                .collect();
            let y: Vec<usize> = (0..rng.gen_range(0..3))
                .map(|_| rng.gen_range(layout::NUM_SPECIALS..vocab))
                .collect();
            layout::serialize_example(&q, &x, &y, context).expect("fits")
        })
        .collect()
}

pub fn random_batch(seed: u64, vocab: usize, count: usize, context: usize) -> Batch {
    let ex = random_examples(seed, vocab, count, context);
    Batch::from_examples(&ex.iter().collect::<Vec<_>>()).expect("nonempty")
}

/// Tape gradients of `Σ wᵢ lossᵢ` against central differences for every
/// trainable parameter entry. Also returns, for frozen parameters, the
/// largest finite-difference derivative seen, which shows they do influence
/// the loss even though they receive no gradient.
pub fn model_gradcheck(model: &Model, batch: &Batch) -> Result<(GradCheck, f64)> {
    let w = projection(batch.batch);
    let objective = |m: &Model| -> Result<f64> {
        let l = m.losses(batch)?;
        Ok(l.iter().zip(&w).map(|(a, b)| a * b).sum())
    };
    let mut tape = Tape::new();
    let root = model.forward_loss(&mut tape, batch)?;
    let grads = tape.backward(root, &w, GradMode::Summed)?.into_params();
    let mut probe = model.clone();
    let (mut worst, mut checked, mut frozen_sens) = (0.0f64, 0, 0.0f64);
    for (name, t) in &model.params {
        let trainable = model.is_trainable(name);
        let stride = if trainable { 1 } else { 7 };
        for j in (0..t.numel()).step_by(stride) {
            let orig = t.data()[j];
            probe.params.get_mut(name).expect("same keys").data_mut()[j] = orig + FD_STEP;
            let up = objective(&probe)?;
            probe.params.get_mut(name).expect("same keys").data_mut()[j] = orig - FD_STEP;
            let down = objective(&probe)?;
            probe.params.get_mut(name).expect("same keys").data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            if trainable {
                let analytic = grads.get(name).map_or(0.0, |g: &Tensor| g.data()[j]);
                // Differences below the rounding noise of the difference
                // quotient itself are not resolvable.
                let noise = 8.0 * f64::EPSILON * up.abs().max(down.abs()) / (2.0 * FD_STEP);
                if (analytic - fd).abs() > noise {
                    worst = worst.max(rel_err(analytic, fd));
                }
                checked += 1;
            } else {
                frozen_sens = frozen_sens.max(fd.abs());
            }
        }
    }
    Ok((
        GradCheck {
            max_rel_err: worst,
            checked,
        },
        frozen_sens,
    ))
}
