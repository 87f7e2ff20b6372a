use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saferace::learner::ppo::{minibatch_loss_and_grad, Minibatch};
use saferace::learner::{PolicyNet, PpoConfig, ValueNet, ACTION_DIM};

fn minibatch(c: &mut Criterion) {
    let config = PpoConfig::default();
    let dim = 29;
    let b = config.minibatch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let policy = PolicyNet::new(dim, &config.hidden_sizes, config.init_log_std, &mut rng);
    let value = ValueNet::new(dim, &config.hidden_sizes, &mut rng);
    let batch = Minibatch {
        observations: Array2::from_shape_fn((b, dim), |_| rng.random_range(-2.0..2.0)),
        raw_actions: Array2::from_shape_fn((b, ACTION_DIM), |_| rng.random_range(-1.0..1.0)),
        old_log_probs: Array1::from_shape_fn(b, |_| rng.random_range(-4.0..0.0)),
        advantages: Array1::from_shape_fn(b, |_| rng.random_range(-1.0..1.0)),
        returns: Array1::from_shape_fn(b, |_| rng.random_range(-5.0..5.0)),
    };
    c.bench_function("ppo_minibatch_2048", |bench| {
        bench.iter(|| minibatch_loss_and_grad(black_box(&policy), black_box(&value), black_box(&batch), &config))
    });
}

criterion_group!(benches, minibatch);
criterion_main!(benches);
