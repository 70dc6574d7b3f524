use dpmeet_core::autodiff::{GradMode, Tape};
use dpmeet_core::dp::{
    clip_factors, clipped_sum_captured, per_example_gradients, per_example_norms_ghost,
    per_example_norms_naive,
};
use dpmeet_core::model::layout::{EOS, Y};
use dpmeet_core::model::{
    generate_beam, greedy, read_checkpoint, BeamConfig, Decoder, KvCache, Model, ModelConfig,
};
use dpmeet_core::testkit::beam::{beam_reachable_best, exhaustive_best, ToyModel};
use dpmeet_core::testkit::models::{model_gradcheck, random_batch, random_model};
use dpmeet_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn full_model_matches_finite_differences() {
    for seed in 0..20 {
        let m = random_model(seed, false);
        let batch = random_batch(seed, m.config.vocab_size, 1 + seed as usize % 3, 16);
        let (gc, _) = model_gradcheck(&m, &batch).unwrap();
        assert!(gc.max_rel_err < 1e-4, "seed {seed}: {}", gc.max_rel_err);
        assert!(gc.checked > 100);
    }
}

#[test]
fn incremental_decoding_matches_the_tape() {
    for seed in 0..10 {
        let m = random_model(seed, seed % 2 == 0);
        let v = m.config.vocab_size;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq: Vec<usize> = (0..12).map(|_| rng.gen_range(0..v)).collect();
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape);
        let logits = m.logits(&mut tape, &vars, &seq, 1).unwrap();
        let full = tape.value(logits).data().to_vec();
        let inf = m.inference().unwrap();
        let mut cache = KvCache::default();
        for (t, &tok) in seq.iter().enumerate() {
            let row = inf.forward_token(&mut cache, tok).unwrap();
            for (a, b) in row.iter().zip(&full[t * v..(t + 1) * v]) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "seed {seed} pos {t}");
            }
        }
        assert_eq!(cache.len(), 12);
    }
}

#[test]
fn logits_are_causal() {
    let m = random_model(3, false);
    let v = m.config.vocab_size;
    let run = |seq: &[usize]| {
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape);
        let l = m.logits(&mut tape, &vars, seq, 1).unwrap();
        tape.value(l).data().to_vec()
    };
    let a: Vec<usize> = (0..10).map(|i| i % v).collect();
    let base = run(&a);
    for j in 0..10 {
        let mut b = a.clone();
        b[j] = (b[j] + 1) % v;
        let other = run(&b);
        assert_eq!(&base[..j * v], &other[..j * v], "position {j} leaked backwards");
        assert_ne!(&base[j * v..], &other[j * v..]);
    }
}

#[test]
fn ghost_norms_match_naive_on_transformers() {
    for seed in 0..20 {
        let m = random_model(seed, seed % 2 == 1);
        let batch = random_batch(seed + 100, m.config.vocab_size, 1 + seed as usize % 4, 16);
        let mut tape = Tape::new();
        let losses = m.forward_loss(&mut tape, &batch).unwrap();
        let naive = per_example_norms_naive(&per_example_gradients(&tape, losses).unwrap()).unwrap();
        let caps = tape
            .backward(losses, &vec![1.0; batch.batch], GradMode::PerExample)
            .unwrap()
            .into_captures()
            .unwrap();
        let names = m.trainable_names();
        let ghost = per_example_norms_ghost(&caps, names.iter().map(String::as_str)).unwrap();
        for (g, n) in ghost.iter().zip(&naive) {
            assert!((g - n).abs() <= 1e-9 * n.max(1e-300), "seed {seed}: {g} vs {n}");
        }
    }
}

#[test]
fn captured_clipped_sum_matches_a_seeded_backward_pass() {
    for seed in 0..20 {
        let m = random_model(seed, seed % 2 == 0);
        let batch = random_batch(seed + 7, m.config.vocab_size, 1 + seed as usize % 4, 16);
        let names = m.trainable_names();
        let mut tape = Tape::new();
        let losses = m.forward_loss(&mut tape, &batch).unwrap();
        let caps = tape
            .backward(losses, &vec![1.0; batch.batch], GradMode::PerExample)
            .unwrap()
            .into_captures()
            .unwrap();
        let norms = per_example_norms_ghost(&caps, names.iter().map(String::as_str)).unwrap();
        let median = {
            let mut s = norms.clone();
            s.sort_by(f64::total_cmp);
            s[s.len() / 2]
        };
        let factors = clip_factors(&norms, median);
        let got = clipped_sum_captured(&caps, &factors, &m.params, names.iter().map(String::as_str))
            .unwrap();
        let want = tape.backward(losses, &factors, GradMode::Summed).unwrap().into_params();
        assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
        for (name, g) in &got {
            for (a, b) in g.data().iter().zip(want[name].data()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "seed {seed} {name}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn beam_one_is_greedy_on_random_models() {
    for seed in 0..50 {
        let m = random_model(seed, false);
        let v = m.config.vocab_size;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prefix: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..v)).collect();
        prefix.push(Y);
        let inf = m.inference().unwrap();
        let cfg = BeamConfig {
            beam_width: 1,
            max_new_tokens: 8,
            length_penalty: 1.0,
        };
        let b = generate_beam(&inf, &prefix, &cfg).unwrap();
        let g = greedy(&inf, &prefix, 8).unwrap();
        assert_eq!(b.tokens, g.tokens, "seed {seed}");
        assert_eq!(b.log_prob, g.log_prob);
    }
}

fn toy(seed: u64) -> (ToyModel, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.gen_range(2..=6);
    let model = ToyModel {
        vocab,
        eos: rng.gen_range(0..vocab),
        seed,
        sharpness: [0.5, 1.5, 4.0][seed as usize % 3],
        quantized: seed % 4 == 0,
    };
    (model, rng.gen_range(1..=5))
}

#[test]
fn beam_five_returns_the_best_reachable_hypothesis() {
    for seed in 0..200 {
        let (model, depth) = toy(seed);
        for lp in [1.0, 0.7, 1.6] {
            let cfg = BeamConfig {
                beam_width: 5,
                max_new_tokens: depth,
                length_penalty: lp,
            };
            let got = generate_beam(&model, &[0], &cfg).unwrap();
            let (want, score) = beam_reachable_best(&model, &[0], 5, depth, lp).unwrap().unwrap();
            assert_eq!(got.tokens, want, "seed {seed} lp {lp}");
            assert_eq!(got.score, score);
        }
    }
}

#[test]
fn wide_beam_is_exhaustive() {
    for seed in 0..100 {
        let (model, depth) = toy(seed);
        let cfg = BeamConfig {
            beam_width: model.vocab.pow(depth as u32),
            max_new_tokens: depth,
            length_penalty: 1.0,
        };
        let got = generate_beam(&model, &[1 % model.vocab], &cfg).unwrap();
        let (want, _) = exhaustive_best(&model, &[1 % model.vocab], depth, 1.0).unwrap().unwrap();
        assert_eq!(got.tokens, want, "seed {seed}");
    }
}

#[test]
fn beam_scores_at_least_greedy_on_random_models() {
    let mut worse = 0;
    for seed in 0..200 {
        let (model, depth) = toy(seed);
        let cfg = BeamConfig {
            beam_width: 5,
            max_new_tokens: depth,
            length_penalty: 1.0,
        };
        let b = generate_beam(&model, &[0], &cfg).unwrap();
        let g = greedy(&model, &[0], depth).unwrap();
        if b.score < g.score - 1e-12 {
            worse += 1;
        }
    }
    assert_eq!(worse, 0);
}

#[test]
fn beam_is_deterministic_and_guards_the_context() {
    let m = random_model(7, true);
    let inf = m.inference().unwrap();
    let cfg = BeamConfig::default();
    let a = generate_beam(&inf, &[1, 5, 2, Y], &cfg).unwrap();
    let b = generate_beam(&inf, &[1, 5, 2, Y], &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.tokens.len() <= m.config.context_length - 4);
    let long = vec![5; m.config.context_length];
    assert!(matches!(
        generate_beam(&inf, &long, &cfg),
        Err(Error::ContextOverflow { .. })
    ));
    let zero = BeamConfig {
        beam_width: 0,
        ..cfg
    };
    assert!(matches!(generate_beam(&inf, &[1], &zero), Err(Error::Config(_))));
    // budget is capped by the context
    let near = vec![5; m.config.context_length - 2];
    let h = generate_beam(&inf, &near, &cfg).unwrap();
    assert!(h.tokens.len() <= 2);
    let content = h.content(inf.eos());
    assert!(!content.contains(&EOS) || content.len() < h.tokens.len());
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for (i, lora) in [false, true].into_iter().enumerate() {
        let m = random_model(11 + i as u64, lora);
        let path = dir.path().join(format!("m{i}"));
        let written = m.save(&path, "abc123").unwrap();
        assert_eq!(written.len(), 1 + usize::from(lora));
        let (back, hash) = Model::load(&path).unwrap();
        assert_eq!(hash, "abc123");
        assert_eq!(back, m);
        let batch = random_batch(5, m.config.vocab_size, 3, 16);
        let (a, b) = (m.losses(&batch).unwrap(), back.losses(&batch).unwrap());
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        let again = dir.path().join(format!("again{i}"));
        back.save(&again, "abc123").unwrap();
        for f in &written {
            let name = f.file_name().unwrap();
            assert_eq!(std::fs::read(f).unwrap(), std::fs::read(again.join(name)).unwrap());
        }
        if lora {
            let (h, t) = read_checkpoint(&written[1]).unwrap();
            assert_eq!(h.kind, "adapter");
            assert!(t.keys().all(|k| k.contains(".lora_")));
        }
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(Model::load(dir.path()), Err(Error::MissingCheckpoint(_))));
    let m = random_model(1, false);
    let files = m.save(dir.path(), "h").unwrap();
    let mut bytes = std::fs::read(&files[0]).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&files[0], &bytes).unwrap();
    assert!(matches!(Model::load(dir.path()), Err(Error::Checkpoint(_))));
    std::fs::write(&files[0], b"not a checkpoint at all").unwrap();
    assert!(matches!(Model::load(dir.path()), Err(Error::Checkpoint(_))));
}

#[test]
fn default_config_is_valid() {
    let m = Model::init(ModelConfig::default(), 0).unwrap();
    assert_eq!(m.trainable_fraction(), 1.0);
    assert_eq!(m.trainable_names().len(), m.params.len());
}
