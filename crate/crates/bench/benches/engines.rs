use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use hps_core::estimation::{EstimationConfig, Estimator, ObservationModel};
use hps_core::faults::geometric_schedule;
use hps_core::harness::build_uwa_like;
use hps_core::hps::PushSum;
use hps_core::oracle::{build_m, propagate_consensus};
use hps_core::topology::{generate_sbm, NetworkSpec};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const HORIZON: usize = 64;

fn sbm(clusters: usize) -> NetworkSpec {
    generate_sbm(clusters, 16, 0.3, 7).expect("connected clusters")
}

fn init(n: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..n).map(|j| DVector::from_fn(dim, |i, _| (j * dim + i) as f64)).collect()
}

fn local_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("local_round");
    for clusters in [1, 4] {
        let spec = sbm(clusters);
        let sched = geometric_schedule(&spec, HORIZON, 2, 1);
        let start = PushSum::new(&spec, &init(spec.num_agents(), 2)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(spec.num_agents()), &spec, |b, _| {
            b.iter_batched(
                || start.clone(),
                |mut ps| {
                    for t in 1..=8 {
                        ps.local_round(&sched, t);
                    }
                    ps
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let spec = sbm(2);
    let sched = geometric_schedule(&spec, HORIZON, 2, 1);
    c.bench_function("build_m/32", |b| b.iter(|| build_m(&spec, &sched, 5, Some(4)).unwrap()));
    let start = init(spec.num_agents(), 2);
    c.bench_function("propagate_consensus/32x16", |b| {
        b.iter(|| propagate_consensus(&spec, &sched, &start, 16, Some(4)).unwrap())
    });
}

fn estimation_step(c: &mut Criterion) {
    let spec = build_uwa_like(0);
    let sched = geometric_schedule(&spec, 10_000, 2, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = ObservationModel::partial(&spec, 9, 0.2, &mut rng).unwrap();
    let w_star = DVector::from_element(9, 0.5);
    let cfg = EstimationConfig {
        step_scale: 0.05,
        w_radius: 15.0,
    };
    let fresh = Estimator::new(&spec, &sched, &model, cfg, w_star, Some(6), 5).unwrap();
    let mut est = fresh.clone();
    let mut steps = 0;
    c.bench_function("estimation_step/uwa", |b| {
        b.iter(|| {
            // Restart before the schedule runs out.
            if steps == 9_000 {
                est = fresh.clone();
                steps = 0;
            }
            est.step().unwrap();
            steps += 1;
        })
    });
}

criterion_group!(benches, local_round, oracle, estimation_step);
criterion_main!(benches);
