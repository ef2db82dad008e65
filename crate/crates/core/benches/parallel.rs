use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use datatrack::estimator::{build_estimator_schedule, NoiseModel};
use datatrack::lti::StateSpace;
use datatrack::par::Execution;
use datatrack::tracking::{synthesize_gains, synthesize_head_gains, CostWeights, TrackingProblem};
use datatrack::Vector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn problem(n: usize, m: usize, p: usize) -> TrackingProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sys = StateSpace::random_stable(&mut rng, 8, m, p, 0.9).unwrap();
    TrackingProblem::new(
        n,
        vec![Vector::from_element(p, 1.0); n + 1],
        CostWeights::scaled_identity(p, m, 0.1),
        sys.markov(n + 1).unwrap(),
    )
    .unwrap()
}

fn gains(c: &mut Criterion) {
    let mut group = c.benchmark_group("gain_synthesis");
    group.sample_size(10);
    for &n in &[20usize, 40] {
        let prob = problem(n, 4, 4);
        for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
            group.bench_with_input(BenchmarkId::new(format!("full/{name}"), n), &prob, |b, prob| {
                b.iter(|| synthesize_gains(prob, exec).unwrap())
            });
            group.bench_with_input(BenchmarkId::new(format!("head/{name}"), n), &prob, |b, prob| {
                b.iter(|| synthesize_head_gains(prob, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn estimator(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimator_schedule");
    group.sample_size(10);
    let prob = problem(40, 4, 4);
    let noise = NoiseModel::isotropic(4, 4, 1.0, 0.1);
    group.bench_function("n40", |b| {
        b.iter(|| build_estimator_schedule(&prob.markov, &noise, prob.horizon).unwrap())
    });
    group.finish();
}

criterion_group!(benches, gains, estimator);
criterion_main!(benches);
