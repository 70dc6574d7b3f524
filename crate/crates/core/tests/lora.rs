use dpmeet_core::autodiff::{GradMode, Tape, Tensor};
use dpmeet_core::dp::{dp_adam_step, AdamConfig, GradMap, OptimState};
use dpmeet_core::lora::{lora_forward, LoraAdapter, LoraConfig};
use dpmeet_core::model::{Model, ModelConfig};
use dpmeet_core::rng::seeded;
use dpmeet_core::testkit::models::{model_gradcheck, random_batch, random_model};

#[test]
fn fresh_adapters_leave_the_forward_pass_unchanged() {
    for seed in 0..10 {
        let base = random_model(seed, false);
        let mut adapted = base.clone();
        adapted
            .attach_lora(
                LoraConfig {
                    rank: 2,
                    ..LoraConfig::default()
                },
                seed,
            )
            .unwrap();
        let batch = random_batch(seed, base.config.vocab_size, 3, 16);
        let logits = |m: &Model| {
            let mut tape = Tape::new();
            let vars = m.bind(&mut tape);
            let l = m.logits(&mut tape, &vars, &batch.inputs, batch.batch).unwrap();
            tape.value(l).data().to_vec()
        };
        let (a, b) = (logits(&base), logits(&adapted));
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-15, "seed {seed}: {worst}");
        assert_eq!(base.losses(&batch).unwrap(), adapted.losses(&batch).unwrap());
    }
}

#[test]
fn only_adapters_receive_gradients() {
    for seed in 0..20 {
        let m = random_model(seed, true);
        let batch = random_batch(seed, m.config.vocab_size, 2, 16);
        let mut tape = Tape::new();
        let l = m.forward_loss(&mut tape, &batch).unwrap();
        let g = tape.backward(l, &[1.0, 1.0], GradMode::Summed).unwrap();
        assert!(!g.params().is_empty());
        assert!(g.params().keys().all(|k| k.contains(".lora_")), "{:?}", g.params().keys());
        let (gc, frozen) = model_gradcheck(&m, &batch).unwrap();
        assert!(gc.max_rel_err < 1e-4, "seed {seed}: {}", gc.max_rel_err);
        assert!(frozen > 1e-6, "frozen weights should still move the loss");
    }
}

#[test]
fn trainable_fraction_matches_a_hand_count() {
    let mut m = Model::init(ModelConfig::default(), 0).unwrap();
    let (v, l, d) = (512, 64, 64);
    let per_layer = 4 * (d * d + d) + 4 * d + (d * 4 * d + 4 * d) + (4 * d * d + d);
    let base = v * d + l * d + 2 * per_layer + 2 * d;
    assert_eq!(m.base_param_count(), base);
    assert_eq!(m.trainable_fraction(), 1.0);
    m.attach_lora(LoraConfig::default(), 0).unwrap();
    let adapters = 2 * 2 * (8 * d + d * 8);
    assert_eq!(m.adapter_param_count(), adapters);
    let f = m.trainable_fraction();
    assert_eq!(f, adapters as f64 / (base + adapters) as f64);
    assert!(f < 0.15);
    assert_eq!(m.trainable_names().len(), 8);
    assert!(m.attach_lora(LoraConfig::default(), 0).is_err());
    let mut bad = Model::init(ModelConfig::default(), 0).unwrap();
    let r0 = LoraConfig {
        rank: 0,
        ..LoraConfig::default()
    };
    assert!(bad.attach_lora(r0, 0).unwrap_err().is_config());
}

/// Full-rank adapters fit an arbitrary linear delta: minimize
/// `½‖lora(x) − x·(W + Δ)‖²` by seeding the backward pass with the residual.
#[test]
fn full_rank_adapter_fits_any_delta() {
    let (n, d, p) = (8, 3, 3);
    let mut rng = seeded(42);
    let x = Tensor::randn(&[1, n, d], 1.0, &mut rng);
    let w = Tensor::randn(&[d, p], 1.0, &mut rng);
    let delta = Tensor::randn(&[d, p], 1.0, &mut rng);
    let cfg = LoraConfig {
        rank: 3,
        alpha: 3.0,
        targets: vec!["q".into()],
    };
    let adapter = LoraAdapter::new("l", d, p, &cfg, &mut rng).unwrap();
    let mut target = vec![0.0; n * p];
    for r in 0..n {
        for j in 0..p {
            target[r * p + j] = (0..d)
                .map(|i| x.data()[r * d + i] * (w.data()[i * p + j] + delta.data()[i * p + j]))
                .sum();
        }
    }
    let mut params = GradMap::new();
    params.insert("a".into(), adapter.a.clone());
    params.insert("b".into(), adapter.b.clone());
    let mut state = OptimState::new(AdamConfig::new(0.02, 0.0));
    let mut residual = f64::INFINITY;
    for _ in 0..4000 {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), false);
        let wv = tape.param("w", w.clone(), false);
        let av = tape.param("a", params["a"].clone(), true);
        let bv = tape.param("b", params["b"].clone(), true);
        let y = lora_forward(&mut tape, xv, wv, None, av, bv, cfg.scaling()).unwrap();
        let r: Vec<f64> = tape.value(y).data().iter().zip(&target).map(|(a, b)| a - b).collect();
        residual = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if residual < 1e-8 {
            break;
        }
        let g = tape.backward(y, &r, GradMode::Summed).unwrap().into_params();
        assert!(!g.contains_key("w"));
        dp_adam_step(&mut params, &g, &mut state).unwrap();
    }
    assert!(residual < 1e-6, "residual {residual}");
}
