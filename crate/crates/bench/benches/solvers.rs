use criterion::{black_box, criterion_group, criterion_main, Criterion};

use quack_core::engine::{quack_message_payoff, simulate, Method, StrategyProfile};
use quack_core::ext_struct::{solve_mbar_grid, solve_noise_equilibrium};
use quack_core::ext_variants::{identity_rule_pair, one_speaker_equilibrium};
use quack_core::model::{GameConfig, NoiseSpec, PriorSpec};
use quack_core::rules::{build_max_rule, build_min_rule, march_max_rule};

fn rules(c: &mut Criterion) {
    let mut g = c.benchmark_group("rules");
    g.bench_function("max eps=0.1", |b| b.iter(|| build_max_rule(black_box(0.1), 4096).unwrap()));
    g.bench_function("max marched eps=0.5", |b| b.iter(|| march_max_rule(black_box(0.5), 4096).unwrap()));
    g.bench_function("min eps=0.2", |b| b.iter(|| build_min_rule(black_box(0.2), 4096).unwrap()));
    let rule = build_max_rule(0.3, 4096).unwrap();
    g.bench_function("quack payoff quadrature", |b| {
        b.iter(|| quack_message_payoff(&rule, black_box(0.4), Method::Quadrature))
    });
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    let cfg = GameConfig::benchmark(0.3).unwrap();
    let profile = StrategyProfile::benchmark(build_max_rule(0.3, 4096).unwrap());
    g.bench_function("simulate 1e6", |b| b.iter(|| simulate(&cfg, &profile, 1_000_000, 0).unwrap()));
    g.finish();
}

fn extensions(c: &mut Criterion) {
    let mut g = c.benchmark_group("extensions");
    g.sample_size(10);
    let prior = PriorSpec::quadratic_log(4.0).unwrap();
    g.bench_function("prior mimic m_bar", |b| b.iter(|| solve_mbar_grid(&prior, 0.3, 1024).unwrap()));
    g.bench_function("gaussian noise fixed point", |b| {
        b.iter(|| solve_noise_equilibrium(NoiseSpec::Gaussian { sigma: 0.1 }, 401, 500, 1e-4).unwrap())
    });
    g.bench_function("identity rule pair", |b| b.iter(|| identity_rule_pair(0.55, 0.25, 256).unwrap()));
    g.bench_function("one speaker", |b| b.iter(|| one_speaker_equilibrium(0.5, 0.8, 1.0 / 3.0).unwrap()));
    g.finish();
}

criterion_group!(benches, rules, monte_carlo, extensions);
criterion_main!(benches);
