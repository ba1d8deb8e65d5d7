use criterion::{criterion_group, criterion_main, Criterion};
use gibbscal::gpc::{CoverageProblem, GpcConfig, RegionKind};
use gibbscal::par::{map_indexed, map_indexed_sequential};
use gibbscal::sampler::SamplerConfig;
use gibbscal::sim::{gen_dataset, Dgp};

fn replicates(c: &mut Criterion) {
    let dgp = Dgp::quantile_regression();
    let data = gen_dataset(&dgp, 50, 1).unwrap();
    let cfg = GpcConfig {
        b: 32,
        region_kind: RegionKind::Elliptical,
        sampler: SamplerConfig { n_draws: 1000, burn_in: 500, ..Default::default() },
        ..Default::default()
    };
    let problem = CoverageProblem::new(&data, &dgp.loss(), &dgp.default_prior(), &cfg).unwrap();
    let mut group = c.benchmark_group("bootstrap_replicates");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| map_indexed_sequential(cfg.b, |k| problem.replicate_covers(1.0, 3, k)))
    });
    group.bench_function("parallel", |b| b.iter(|| map_indexed(cfg.b, |k| problem.replicate_covers(1.0, 3, k))));
    group.finish();
}

criterion_group!(benches, replicates);
criterion_main!(benches);
