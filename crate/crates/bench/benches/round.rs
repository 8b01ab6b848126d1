use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use cvbandit::control_variates::{estimate_beta, AuxModel};
use cvbandit::numerics::chi2_quantile;
use cvbandit_bench::{linear_instance, synthetic_log, variants, warmed_agent};

fn round(c: &mut Criterion) {
    let env = linear_instance();
    let mut group = c.benchmark_group("round");
    for config in variants() {
        let (agent, rng) = warmed_agent(&env, &config, 1000);
        group.bench_function(config.name(), |b| {
            b.iter_batched(
                || (agent.clone(), rng.clone()),
                |(mut agent, mut rng)| black_box(agent.step(&env, &mut rng).expect("step")),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    for q in [1, 3] {
        let log = synthetic_log(5000, 5, q);
        let aux = AuxModel::known(&vec![vec![0.0; 5]; q]);
        let theta = vec![1.0; 5];
        c.bench_function(&format!("stats+beta q={q} t=5000"), |b| {
            b.iter(|| estimate_beta(&log.stats(&aux, black_box(&theta))).expect("nonsingular"))
        });
    }
    c.bench_function("chi2_quantile dof=4998", |b| {
        b.iter(|| chi2_quantile(black_box(0.05), black_box(4998)).expect("valid"))
    });
}

criterion_group!(benches, round, estimators);
criterion_main!(benches);
