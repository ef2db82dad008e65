//! Data-based synthesis against the independent state-space implementation.

use datatrack::closed_loop::{run_closed_loop, LoopOptions, NoiseStream};
use datatrack::estimator::{build_estimator_schedule, NoiseModel};
use datatrack::linalg::{rel_diff, rel_diff_vec};
use datatrack::lti::StateSpace;
use datatrack::markov::LtiPlant;
use datatrack::oracle::{model_closed_loop, model_estimator, model_gains};
use datatrack::par::Execution;
use datatrack::tracking::{synthesize_gains, synthesize_head_gains, CostWeights, TrackingProblem};
use datatrack::{Mat, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    sys: StateSpace,
    horizon: usize,
    weights: CostWeights,
    noise: NoiseModel,
    reference: Vec<Vector>,
}

fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=3);
    let p = rng.gen_range(1..=3);
    let horizon = rng.gen_range(1..=20);
    let sys = StateSpace::random_stable(&mut rng, n, m, p, 0.95).unwrap();
    let weights = CostWeights::scaled_identity(p, m, rng.gen_range(0.01..1.0));
    let noise = NoiseModel::isotropic(m, p, rng.gen_range(0.1..1.0), rng.gen_range(0.01..0.5));
    let reference = (0..=horizon)
        .map(|_| Vector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    Case { sys, horizon, weights, noise, reference }
}

fn worst<T>(cases: impl Iterator<Item = T>, f: impl Fn(T) -> f64) -> f64 {
    cases.map(f).fold(0.0, f64::max)
}

#[test]
fn gains_match_model() {
    let dev = worst(0..20, |seed| {
        let c = case(seed);
        let markov = c.sys.markov(c.horizon + 1).unwrap();
        let problem = TrackingProblem::new(c.horizon, c.reference.clone(), c.weights.clone(), markov).unwrap();
        let data = synthesize_gains(&problem, Execution::available()).unwrap();
        let model = model_gains(&c.sys, &c.weights, c.horizon, Execution::Sequential).unwrap();
        (0..=c.horizon)
            .map(|k| rel_diff(data.full(k).unwrap(), model.full(k).unwrap()))
            .fold(0.0, f64::max)
    });
    assert!(dev <= 1e-8, "{dev:e}");
}

#[test]
fn head_route_matches_full_route() {
    let dev = worst(0..20, |seed| {
        let c = case(seed);
        let markov = c.sys.markov(c.horizon + 1).unwrap();
        let problem = TrackingProblem::new(c.horizon, c.reference.clone(), c.weights.clone(), markov).unwrap();
        let full = synthesize_gains(&problem, Execution::Sequential).unwrap();
        let head = synthesize_head_gains(&problem, Execution::Sequential).unwrap();
        (0..=c.horizon)
            .map(|k| rel_diff(&head.head(k), &full.head(k)))
            .fold(0.0, f64::max)
    });
    assert!(dev <= 1e-10, "{dev:e}");
}

#[test]
fn estimator_matches_model() {
    let dev = worst(0..20, |seed| {
        let c = case(seed);
        let markov = c.sys.markov(c.horizon + 1).unwrap();
        let data = build_estimator_schedule(&markov, &c.noise, c.horizon).unwrap();
        let model = model_estimator(&c.sys, &c.noise, c.horizon).unwrap();
        (1..=c.horizon)
            .map(|k| {
                rel_diff(data.f(k), model.schedule.f(k)).max(rel_diff(data.b(k), model.schedule.b(k)))
            })
            .fold(0.0, f64::max)
    });
    assert!(dev <= 1e-8, "{dev:e}");
}

#[test]
fn closed_loops_agree_with_noise() {
    let dev = worst(0..10, |seed| {
        let c = case(seed);
        let markov = c.sys.markov(c.horizon + 1).unwrap();
        let problem = TrackingProblem::new(c.horizon, c.reference.clone(), c.weights.clone(), markov.clone()).unwrap();
        let gains = synthesize_head_gains(&problem, Execution::available()).unwrap();
        let est = build_estimator_schedule(&markov, &c.noise, c.horizon).unwrap();
        let mut plant = LtiPlant::new(c.sys.clone());
        let mut stream = NoiseStream::new(&c.noise.w, &c.noise.v, 1000 + seed).unwrap();
        let data = run_closed_loop(&mut plant, &gains, &est, &c.reference, Some(&mut stream), LoopOptions::default()).unwrap();

        let mgains = model_gains(&c.sys, &c.weights, c.horizon, Execution::Sequential).unwrap();
        let mest = model_estimator(&c.sys, &c.noise, c.horizon).unwrap();
        let mut stream = NoiseStream::new(&c.noise.w, &c.noise.v, 1000 + seed).unwrap();
        let model = model_closed_loop(&c.sys, &mgains, &mest, &c.reference, Some(&mut stream)).unwrap();
        (0..=c.horizon)
            .map(|k| rel_diff_vec(&data.u[k], &model.u[k]).max(rel_diff_vec(&data.y[k], &model.y[k])))
            .fold(0.0, f64::max)
    });
    assert!(dev <= 1e-6, "{dev:e}");
}

#[test]
fn scalar_single_step_gain_by_hand() {
    // a = 0.5, b = c = 1, N = 1: K_0 = [[0, s cb / ((cb)^2 s + r)], [0, 0]].
    let sys = StateSpace::new(Mat::from_element(1, 1, 0.5), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0)).unwrap();
    let weights = CostWeights::scaled_identity(1, 1, 1e-2);
    let problem = TrackingProblem::new(1, vec![Vector::zeros(1); 2], weights, sys.markov(2).unwrap()).unwrap();
    let gains = synthesize_gains(&problem, Execution::Sequential).unwrap();
    let k0 = gains.full(0).unwrap();
    let expect = Mat::from_row_slice(2, 2, &[0.0, 1.0 / 1.01, 0.0, 0.0]);
    assert!((k0 - &expect).amax() < 1e-15);
    // K_1 weighs a single stage whose output the increment cannot reach yet.
    assert_eq!(gains.full(1).unwrap().amax(), 0.0);
}

#[test]
fn scalar_demo_settles() {
    let sys = StateSpace::new(Mat::from_element(1, 1, 0.5), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0)).unwrap();
    let n = 40;
    let weights = CostWeights::scaled_identity(1, 1, 1e-2);
    let reference = vec![Vector::from_element(1, 1.0); n + 1];
    let markov = sys.markov(n + 1).unwrap();
    let noise = NoiseModel::isotropic(1, 1, 1.0, 1e-2);
    let problem = TrackingProblem::new(n, reference.clone(), weights.clone(), markov.clone()).unwrap();
    let gains = synthesize_head_gains(&problem, Execution::Sequential).unwrap();
    let est = build_estimator_schedule(&markov, &noise, n).unwrap();
    let data = run_closed_loop(&mut LtiPlant::new(sys.clone()), &gains, &est, &reference, None, LoopOptions::default()).unwrap();
    let mgains = model_gains(&sys, &weights, n, Execution::Sequential).unwrap();
    let mest = model_estimator(&sys, &noise, n).unwrap();
    let model = model_closed_loop(&sys, &mgains, &mest, &reference, None).unwrap();
    let (ed, em) = (data.error[n][0], model.error[n][0]);
    assert!(ed.abs() <= 0.05, "{ed}");
    assert!((ed - em).abs() <= 1e-6);
}

#[test]
fn separate_disturbance_port_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let base = StateSpace::random_stable(&mut rng, 3, 2, 2, 0.9).unwrap();
    let d = Mat::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
    let sys = StateSpace::with_disturbance(base.a().clone(), base.b().clone(), base.c().clone(), d).unwrap();
    let n = 8;
    let noise = NoiseModel::isotropic(2, 2, 0.5, 0.1);
    let markov = sys.markov(n + 1).unwrap();
    let data = build_estimator_schedule(&markov, &noise, n).unwrap();
    let model = model_estimator(&sys, &noise, n).unwrap();
    for k in 1..=n {
        assert!(rel_diff(data.f(k), model.schedule.f(k)) <= 1e-8);
    }
}
