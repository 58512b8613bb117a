use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lcrm_core::data::{default_simulation, simulate_lcrm};
use lcrm_core::models::{observed_loglik_cached, DesignCache};
use lcrm_core::{ModelKind, ModelParams};

fn likelihoods(c: &mut Criterion) {
    let setup = default_simulation();
    let mut group = c.benchmark_group("observed_loglik");
    for n in [200usize, 1000, 5000] {
        let (data, _) =
            simulate_lcrm(&setup.params, &setup.partition, &setup.covariates, n, &setup.censoring, 1).expect("simulates");
        let cache = DesignCache::new(&data, &setup.partition).expect("cache");
        let lcrm = ModelParams::Lcrm(setup.params.clone());
        let beta = setup.params.beta.clone();
        let hazard = setup.params.hazard.clone();
        let models = [
            (ModelKind::Lcrm, lcrm),
            (ModelKind::Cox, ModelParams::Cox { beta: beta.clone(), hazard: hazard.clone() }),
            (ModelKind::Cis, ModelParams::Cis { beta: beta.clone(), hazard: hazard.clone() }),
            (ModelKind::Lacr, ModelParams::Lacr { beta: beta.clone(), hazard: hazard.clone() }),
            (ModelKind::Phph, ModelParams::Phph { beta1: beta.clone(), beta2: beta, hazard }),
        ];
        for (kind, params) in &models {
            group.bench_with_input(BenchmarkId::new(kind.as_str(), n), params, |b, p| {
                b.iter(|| observed_loglik_cached(std::hint::black_box(p), &data, &cache).expect("finite"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, likelihoods);
criterion_main!(benches);
