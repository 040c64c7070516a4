use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchrl::agent::PlanningConfig;
use sketchrl::approx::{eluder_dimension, EluderMode, EnumeratedFunctionClass};
use sketchrl::mdp::{exact_return_distribution, random_mdp};
use sketchrl::sketch::{sketch_bellman_backup, u_statistic_estimate};
use sketchrl::{compute_sketch, CategoricalDistribution, Policy, SketchSpec};
use sketchrl_bench::{golden_chain, warm_agent};
use std::hint::black_box;

fn sketches(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(f64, f64)> = (0..64)
        .map(|_| (rng.random_range(0.0..5.0), rng.random::<f64>() + 0.01))
        .collect();
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let dist =
        CategoricalDistribution::from_pairs(pairs.iter().map(|&(x, w)| (x, w / total))).unwrap();
    let spec = SketchSpec::Moments { n: 4 };
    c.bench_function("compute_sketch/moments4_64atoms", |b| {
        b.iter(|| compute_sketch(black_box(&dist), &spec))
    });
    let next: Vec<(f64, Vec<f64>)> = (0..8)
        .map(|i| {
            (
                0.125,
                compute_sketch(&dist.shift(i as f64 * 0.1), &spec).unwrap(),
            )
        })
        .collect();
    c.bench_function("sketch_bellman_backup/moments4_8next", |b| {
        b.iter(|| sketch_bellman_backup(&spec, black_box(&next), 0.5))
    });
    let samples: Vec<f64> = (0..10).map(|_| rng.random()).collect();
    c.bench_function("u_statistic/variance_kernel_k10", |b| {
        b.iter(|| {
            u_statistic_estimate(
                |s: &[f64]| 0.5 * (s[0] - s[1]).powi(2),
                2,
                black_box(&samples),
            )
        })
    });
}

fn oracles(c: &mut Criterion) {
    let mdp = random_mdp(4, 2, 4, 3, 0.3).unwrap();
    let pi = Policy::constant(&mdp, 1);
    c.bench_function("exact_return_distribution/S4_A2_H4", |b| {
        b.iter(|| exact_return_distribution(black_box(&mdp), &pi))
    });
}

fn planning(c: &mut Criterion) {
    let mdp = golden_chain();
    for n in [1usize, 2, 4] {
        let agent = warm_agent(
            &mdp,
            PlanningConfig {
                n,
                ..PlanningConfig::default()
            },
            500,
        );
        c.bench_function(&format!("sf_lsvi_plan/golden_chain_500eps_N{n}"), |b| {
            b.iter_batched(
                || agent.clone(),
                |mut a| a.plan().map(|p| p.v[0][0]),
                BatchSize::SmallInput,
            )
        });
    }
}

fn eluder(c: &mut Criterion) {
    let members: Vec<Vec<f64>> = (0..=6)
        .map(|i| (0..6).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let class = EnumeratedFunctionClass::scalar_bandit(1, 6, members).unwrap();
    c.bench_function("eluder/exact_indicator_6pts", |b| {
        b.iter(|| eluder_dimension(black_box(&class), 0.1, EluderMode::Exact))
    });
    c.bench_function("eluder/greedy_indicator_6pts", |b| {
        b.iter(|| eluder_dimension(black_box(&class), 0.1, EluderMode::Greedy))
    });
}

criterion_group!(benches, sketches, oracles, planning, eluder);
criterion_main!(benches);
