use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lcrm_core::data::{default_simulation, simulate_lcrm};
use lcrm_core::{run_chain, run_rj_chain, McmcConfig, ModelKind, PriorSpec, RjConfig};

/// 200 sweeps after 50 burn-in, single start.
fn short_config() -> McmcConfig {
    let mut cfg = McmcConfig::with_lengths(250, 50, 1, 3);
    cfg.starts = 1;
    cfg
}

fn samplers(c: &mut Criterion) {
    let setup = default_simulation();
    let mut group = c.benchmark_group("chain_250_sweeps");
    group.sample_size(10);
    for n in [200usize, 1000] {
        let (data, _) =
            simulate_lcrm(&setup.params, &setup.partition, &setup.covariates, n, &setup.censoring, 2).expect("simulates");
        let spec = PriorSpec::default_for_groups(3).expect("prior");
        for kind in [ModelKind::Lcrm, ModelKind::Phph, ModelKind::Cox] {
            group.bench_function(BenchmarkId::new(kind.as_str(), n), |b| {
                b.iter(|| run_chain(kind, &data, &setup.partition, &spec, &short_config()).expect("runs"))
            });
        }
        let rj = RjConfig::new(3.0, 5);
        group.bench_function(BenchmarkId::new("rj", n), |b| {
            b.iter(|| run_rj_chain(&data, &setup.partition, &spec, &rj, &short_config()).expect("runs"))
        });
    }
    group.finish();
}

criterion_group!(benches, samplers);
criterion_main!(benches);
