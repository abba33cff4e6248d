use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use infofd::feature_store::Batch;
use infofd::mathcore::dft::dft2_shifted;
use infofd::mathcore::dse::diffusion_spectral_entropy;
use infofd::metrics::MetricRow;
use infofd::synthetic::TwoGaussians;
use infofd::tgcib::{forward_backward, Hyperparams, Noise, TgcibModel};
use infofd::{DtoState, Label, ScoredSet};

fn step(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_backward");
    for &(dim, batch) in &[(64usize, 128usize), (768, 512)] {
        let data = TwoGaussians::new(dim, batch, 4.0).generate(1).unwrap();
        let idx: Vec<usize> = (0..batch).collect();
        let b = Batch::from_indices(&data, &idx);
        let hp = Hyperparams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = TgcibModel::init(dim, hp.hidden, &mut rng);
        let noise = Noise::draw(&mut rng, batch, dim, hp.hidden, &hp);
        let prior = DtoState::new(hp.lp);
        g.bench_function(BenchmarkId::from_parameter(format!("d{dim}_b{batch}")), |bench| {
            bench.iter(|| forward_backward(&model, &b, &prior, &hp, &noise, true).unwrap())
        });
    }
    g.finish();
}

fn dft(c: &mut Criterion) {
    let grid: Vec<f64> = (0..256).map(|i| ((i * 37) % 11) as f64).collect();
    c.bench_function("dft2_shifted_16x16", |b| b.iter(|| dft2_shifted(black_box(&grid), 16, 16).unwrap()));
}

fn dse(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = c.benchmark_group("diffusion_spectral_entropy");
    g.sample_size(10);
    for &n in &[200usize, 1000] {
        let cloud = DMatrix::from_fn(n, 64, |_, _| rng.random::<f64>());
        g.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| diffusion_spectral_entropy(black_box(&cloud), 1, None).unwrap())
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 20_000;
    let labels: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake }).collect();
    let scores: Vec<f64> = labels.iter().map(|l| l.as_f64() * 0.3 + rng.random::<f64>()).collect();
    let set = ScoredSet::new(scores, labels).unwrap();
    c.bench_function("metric_row_20k", |b| b.iter(|| MetricRow::evaluate(black_box(&set))));
}

criterion_group!(benches, step, dft, dse, metrics);
criterion_main!(benches);
