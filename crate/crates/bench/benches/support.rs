//! Fixtures shared by the benchmarks.

use dpmeet_core::accountant::PrivacySpec;
use dpmeet_core::dp::{AdamConfig, ClipMode};
use dpmeet_core::harness::{Mode, ResolvedPrivacy, Trainer};
use dpmeet_core::model::{serialize_example, Batch, Encoded, Model, ModelConfig};

/// Default desk model with a 400-token vocabulary.
pub fn desk_model() -> Model {
    let cfg = ModelConfig {
        vocab_size: 400,
        ..ModelConfig::default()
    };
    Model::init(cfg, 1).expect("valid config")
}

/// Four examples that fill the context, the shape of a training batch.
pub fn full_batch(context: usize) -> Batch {
    let ex: Vec<Encoded> = (0..4)
        .map(|i| serialize_example(&[10, 11, 12, 13, 14, 15], &vec![20 + i; 200], &[30; 14], context).expect("fits"))
        .collect();
    Batch::from_examples(&ex.iter().collect::<Vec<_>>()).expect("nonempty")
}

pub fn trainer(mode: Mode, clip: ClipMode) -> Trainer {
    let privacy = mode.is_private().then_some(ResolvedPrivacy {
        spec: PrivacySpec {
            target_epsilon: 8.0,
            delta: 1.0 / 1380.0,
            sample_rate: 4.0 / 690.0,
            steps: 3460,
            noise_multiplier: 0.6,
            clipping_norm: 0.1,
        },
        clip_mode: clip,
    });
    Trainer::new(desk_model(), mode, AdamConfig::new(2e-3, 0.0), privacy, 0).expect("trainer")
}
