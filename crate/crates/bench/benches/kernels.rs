use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dpmeet_bench::{desk_model, full_batch, trainer};
use dpmeet_core::accountant::calibrate_sigma;
use dpmeet_core::autodiff::{Tape, Tensor};
use dpmeet_core::dp::ClipMode;
use dpmeet_core::harness::Mode;
use dpmeet_core::metrics::rouge_l;
use dpmeet_core::model::{generate_beam, BeamConfig};
use rand::SeedableRng;

fn matmul(c: &mut Criterion) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let a = Tensor::randn(&[64, 64], 1.0, &mut rng);
    let b = Tensor::randn(&[64, 256], 1.0, &mut rng);
    c.bench_function("matmul 64x64x256", |bench| {
        bench.iter(|| {
            let mut t = Tape::new();
            let (x, y) = (t.leaf(a.clone(), false), t.leaf(b.clone(), false));
            black_box(t.matmul(x, y).unwrap());
        })
    });
}

fn training_step(c: &mut Criterion) {
    let batch = full_batch(64);
    let mut g = c.benchmark_group("train step, batch 4, context 64");
    g.sample_size(20);
    for (name, mode, clip) in [
        ("nondp", Mode::Nondp, ClipMode::Ghost),
        ("dp ghost", Mode::DpGhost, ClipMode::Ghost),
        ("dp naive", Mode::DpGhost, ClipMode::Naive),
    ] {
        let mut tr = trainer(mode, clip);
        g.bench_function(name, |bench| bench.iter(|| black_box(tr.step(&batch).unwrap())));
    }
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let mut g = c.benchmark_group("accountant");
    g.sample_size(10);
    g.bench_function("calibrate sigma, eps 8, 3460 steps", |bench| {
        bench.iter(|| black_box(calibrate_sigma(8.0, 1.0 / 1380.0, 4.0 / 690.0, 3460).unwrap()))
    });
    g.finish();
}

fn rouge(c: &mut Criterion) {
    let a: Vec<u32> = (0..300).map(|i| (i * 7919) % 97).collect();
    let b: Vec<u32> = (0..300).map(|i| (i * 104729) % 89).collect();
    c.bench_function("rouge-l 300x300", |bench| bench.iter(|| black_box(rouge_l(&a, &b))));
}

fn beam(c: &mut Criterion) {
    let model = desk_model();
    let inf = model.inference().unwrap();
    let prompt: Vec<usize> = std::iter::once(1).chain(10..16).chain([2]).chain(20..52).chain([3]).collect();
    let cfg = BeamConfig {
        beam_width: 5,
        max_new_tokens: 24,
        length_penalty: 1.0,
    };
    let mut g = c.benchmark_group("decode");
    g.sample_size(10);
    g.bench_function("beam 5, 24 tokens", |bench| bench.iter(|| black_box(generate_beam(&inf, &prompt, &cfg).unwrap())));
    g.finish();
}

criterion_group!(benches, matmul, training_step, calibration, rouge, beam);
criterion_main!(benches);
