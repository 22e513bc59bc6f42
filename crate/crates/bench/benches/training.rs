use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use replay_core::tasks::TaskSpec;
use replay_core::trainer::LearnerConfig;
use replay_core::Learner;

fn warmed_learner(task: &TaskSpec, rng: &mut ChaCha8Rng) -> Learner {
    let mut learner =
        Learner::new(&LearnerConfig::default(), task.head(), task.input_dim(), rng).unwrap();
    for s in task.stream(1, 3).into_iter().take(2_000) {
        learner.observe(s.x, s.y, rng).unwrap();
    }
    learner
}

fn training_step(c: &mut Criterion) {
    for name in ["r1", "c2"] {
        let task = TaskSpec::preset(name).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut learner = warmed_learner(&task, &mut rng);
        c.bench_function(&format!("training_step_{name}"), |b| {
            b.iter(|| black_box(learner.training_step(&mut rng).unwrap()))
        });
    }
}

fn forward(c: &mut Criterion) {
    let task = TaskSpec::preset("c2").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let learner = warmed_learner(&task, &mut rng);
    c.bench_function("forward_2_32_32_17", |b| {
        b.iter(|| black_box(learner.predict(black_box(&[0.1, -0.3])).unwrap()))
    });
}

criterion_group!(benches, training_step, forward);
criterion_main!(benches);
