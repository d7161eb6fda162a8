use std::hint::black_box;

use activeeval_core::acquisition::eig;
use activeeval_core::dist::DistributionParams;
use activeeval_core::synthetic::{generate, SyntheticConfig};
use activeeval_core::{CampaignConfig, CampaignState, OutcomeKind, Strategy};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn mixture_samples(s: usize) -> Vec<DistributionParams> {
    (0..s)
        .map(|k| {
            let t = k as f64 / s as f64;
            DistributionParams::mixture(vec![0.3, 0.7], vec![0.2 + 0.1 * t, 0.7 - 0.2 * t], vec![0.05, 0.1 + 0.05 * t])
                .unwrap()
        })
        .collect()
}

fn bench_dist(c: &mut Criterion) {
    let d = &mixture_samples(1)[0];
    c.bench_function("binned_masses_25", |b| b.iter(|| black_box(d).binned_masses(25).unwrap()));
    let samples = mixture_samples(10);
    c.bench_function("eig_continuous_s10", |b| {
        b.iter(|| eig(black_box(&samples), OutcomeKind::Continuous, 25).unwrap())
    });
}

/// A warm-started campaign on the default 10 x 20 synthetic grid.
fn campaign(strategy: Strategy) -> CampaignState {
    let spec = generate(&SyntheticConfig::default()).unwrap();
    let mut config = CampaignConfig::default();
    config.acquisition.strategy = strategy;
    let resolved = spec.resolve(&config, None).unwrap();
    let config = resolved.campaign_config(&config);
    let gt = resolved.ground_truth.clone().unwrap();
    let mut st = CampaignState::new(resolved.policies, resolved.tasks, resolved.outcome_kind, &config).unwrap();
    let warm = st.pending_warm_start().unwrap();
    let outcomes = activeeval_core::engine::simulate_outcomes(&gt, &warm, config.seed);
    st.record_outcomes(&warm, &outcomes).unwrap();
    st
}

fn bench_engine(c: &mut Criterion) {
    let st = campaign(Strategy::CostAwareEig);
    c.bench_function("score_grid_10x20", |b| b.iter(|| st.score_grid().unwrap()));
    c.bench_function("suggest_next_10x20", |b| b.iter(|| st.suggest_next().unwrap()));
    c.bench_function("record_and_retrain_10x20", |b| {
        b.iter_batched(
            || (st.clone(), st.suggest_next().unwrap()),
            |(mut s, sug)| s.record_outcomes(&sug, &vec![0.5; sug.trials.len()]).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_dist, bench_engine
}
criterion_main!(benches);
