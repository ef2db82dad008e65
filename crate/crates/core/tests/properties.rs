use datatrack::closed_loop::{run_closed_loop, LoopOptions, NoiseStream};
use datatrack::estimator::{build_estimator_schedule, NoiseModel};
use datatrack::linalg::{self, rel_diff};
use datatrack::lti::{SignalTrace, StateSpace};
use datatrack::markov::{augment_markov, estimate_markov_impulse, estimate_markov_whitenoise, LtiPlant, MarkovSequence};
use datatrack::par::Execution;
use datatrack::tracking::{
    build_hbar, build_weight_blocks, cost_from_sequences, synthesize_gains, synthesize_head_gains, CostWeights,
    GainSchedule, TrackingProblem,
};
use datatrack::{Mat, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plant(seed: u64, n: usize, m: usize, p: usize) -> StateSpace {
    StateSpace::random_stable(&mut ChaCha8Rng::seed_from_u64(seed), n, m, p, 0.9).unwrap()
}

fn inputs(seed: u64, len: usize, m: usize) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| Vector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))).collect()
}

fn controller(sys: &StateSpace, n: usize, reference: &[Vector]) -> (GainSchedule, datatrack::estimator::EstimatorSchedule) {
    let markov = sys.markov(n + 1).unwrap();
    let problem = TrackingProblem::new(
        n,
        reference.to_vec(),
        CostWeights::scaled_identity(sys.outputs(), sys.inputs(), 0.1),
        markov.clone(),
    )
    .unwrap();
    let gains = synthesize_gains(&problem, Execution::Sequential).unwrap();
    let est = build_estimator_schedule(&markov, &NoiseModel::isotropic(sys.inputs(), sys.outputs(), 1.0, 0.1), n).unwrap();
    (gains, est)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn impulse_response_is_markov(seed in 0u64..1000, n in 1usize..6, m in 1usize..4, p in 1usize..4) {
        let sys = plant(seed, n, m, p);
        let markov = sys.markov(30).unwrap();
        for j in 0..m {
            let mut u = vec![Vector::zeros(m); 31];
            u[0][j] = 1.0;
            let out = sys.simulate(&Vector::zeros(n), &SignalTrace::from_inputs(u, p)).unwrap();
            for i in 0..=30 {
                let col = markov.h()[i].column(j).into_owned();
                prop_assert!((&out.y[i] - col).amax() <= 1e-12 * markov.h()[i].amax().max(1.0));
            }
        }
    }

    #[test]
    fn superposition(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let sys = plant(seed, 4, 2, 2);
        let (u1, u2) = (inputs(seed, 25, 2), inputs(seed + 1, 25, 2));
        let mix: Vec<Vector> = u1.iter().zip(&u2).map(|(x, y)| x * a + y * b).collect();
        let x0 = Vector::zeros(4);
        let y = |u: Vec<Vector>| sys.simulate(&x0, &SignalTrace::from_inputs(u, 2)).unwrap().y;
        let (y1, y2, ym) = (y(u1), y(u2), y(mix));
        for k in 0..25 {
            let expect = &y1[k] * a + &y2[k] * b;
            prop_assert!((&ym[k] - &expect).amax() <= 1e-12 * (1.0 + expect.amax()));
        }
    }

    #[test]
    fn augmented_relations(seed in 0u64..1000, count in 1usize..25) {
        let sys = plant(seed, 3, 2, 2);
        let seq = sys.markov(count).unwrap();
        prop_assert_eq!(seq.h()[0].amax(), 0.0);
        let mut acc = Mat::zeros(2, 2);
        for i in 0..=count {
            acc += &seq.h()[i];
            prop_assert!((&seq.h_hat()[i] - &acc).amax() == 0.0);
            prop_assert_eq!(&seq.m_hat()[i], &seq.m()[i]);
        }
        // The augmented realization reproduces the same prefix sums.
        let aug = sys.augment();
        let mut ab = aug.b_hat.clone();
        for i in 1..=count {
            let block = &aug.c_hat * &ab;
            prop_assert!(rel_diff(&block, &seq.h_hat()[i]) <= 1e-10);
            ab = &aug.a_hat * ab;
        }
        let again = augment_markov(&seq);
        prop_assert_eq!(again.h_hat(), seq.h_hat());
    }

    #[test]
    fn impulse_identification_is_exact(seed in 0u64..1000) {
        let sys = plant(seed, 4, 2, 3);
        let exact = sys.markov(12).unwrap();
        let found = estimate_markov_impulse(&mut LtiPlant::new(sys), 12, 1.0).unwrap();
        for i in 0..=12 {
            prop_assert!(rel_diff(&found.h()[i], &exact.h()[i]) <= 1e-10);
            prop_assert!(rel_diff(&found.m()[i], &exact.m()[i]) <= 1e-10);
        }
    }

    #[test]
    fn first_increment_minimizes_batch_cost(seed in 0u64..1000, scale in 1e-3f64..1.0) {
        let sys = plant(seed, 3, 2, 2);
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference: Vec<Vector> = (0..=n).map(|_| Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let markov = sys.markov(n + 1).unwrap();
        let weights = CostWeights::scaled_identity(2, 2, 0.3);
        let problem = TrackingProblem::new(n, reference.clone(), weights.clone(), markov.clone()).unwrap();
        let gains = synthesize_gains(&problem, Execution::Sequential).unwrap();
        let r = linalg::concat(&reference);
        let hbar = build_hbar(&markov, n, 0).unwrap();
        let cost = |du: &Vector| {
            let e = &r - &hbar * du;
            let split = |v: &Vector, w: usize| (0..=n).map(|k| v.rows(k * w, w).into_owned()).collect::<Vec<_>>();
            cost_from_sequences(&split(&e, 2), &split(du, 2), &weights).unwrap()
        };
        let best = gains.full(0).unwrap() * &r;
        let j0 = cost(&best);
        let probe = Vector::from_fn(best.len(), |_, _| rng.gen_range(-1.0..1.0)) * scale;
        prop_assert!(cost(&(&best + &probe)) >= j0 - 1e-12 * j0.abs().max(1.0));
        // Gradient of the quadratic vanishes at the optimum.
        let (qbar, rbar) = build_weight_blocks(&weights, n, 0);
        let grad = hbar.transpose() * &qbar * (&hbar * &best - &r) + &rbar * &best;
        prop_assert!(grad.amax() <= 1e-10 * (1.0 + r.amax()));
    }

    #[test]
    fn outputs_never_see_current_input(seed in 0u64..1000, step in 1usize..10, bump in 0.1f64..2.0) {
        let sys = plant(seed, 3, 2, 2);
        let u = inputs(seed, 12, 2);
        let mut changed = u.clone();
        for v in changed[step..].iter_mut() {
            v[0] += bump;
        }
        let x0 = Vector::zeros(3);
        let y1 = sys.simulate(&x0, &SignalTrace::from_inputs(u, 2)).unwrap().y;
        let y2 = sys.simulate(&x0, &SignalTrace::from_inputs(changed, 2)).unwrap().y;
        for k in 0..=step {
            prop_assert_eq!(&y1[k], &y2[k]);
        }
    }

    #[test]
    fn applied_increment_is_head_of_gain(seed in 0u64..1000) {
        let sys = plant(seed, 3, 2, 2);
        let n = 10;
        let reference: Vec<Vector> = (0..=n).map(|k| Vector::from_element(2, k as f64 / n as f64)).collect();
        let (gains, est) = controller(&sys, n, &reference);
        let mut stream = NoiseStream::new(&Mat::identity(2, 2), &(Mat::identity(2, 2) * 0.1), seed).unwrap();
        let trace = run_closed_loop(
            &mut LtiPlant::new(sys),
            &gains,
            &est,
            &reference,
            Some(&mut stream),
            LoopOptions { keep_xbar: true },
        )
        .unwrap();
        let r = linalg::concat(&reference);
        for k in 1..=n {
            let e = r.rows(k * 2, (n - k + 1) * 2) - &trace.xbar[k];
            let full = gains.full(k).unwrap() * e;
            prop_assert_eq!(full.rows(0, 2).into_owned(), trace.du[k].clone());
        }
    }
}

#[test]
fn zero_reference_zero_controls() {
    let sys = plant(5, 3, 2, 2);
    let n = 15;
    let reference = vec![Vector::zeros(2); n + 1];
    let (gains, est) = controller(&sys, n, &reference);
    let trace = run_closed_loop(&mut LtiPlant::new(sys), &gains, &est, &reference, None, LoopOptions::default()).unwrap();
    assert!(trace.u.iter().chain(&trace.y).all(|v| v.iter().all(|&x| x == 0.0)));
}

#[test]
fn closed_loop_is_causal() {
    // Perturbing the plant output at step j leaves every u_k with k <= j unchanged.
    struct Kick {
        inner: LtiPlant,
        at: usize,
        step: usize,
    }
    impl datatrack::markov::BlackBox for Kick {
        fn input_dim(&self) -> usize {
            self.inner.input_dim()
        }
        fn output_dim(&self) -> usize {
            self.inner.output_dim()
        }
        fn step(&mut self, u: &Vector) -> datatrack::Result<Vector> {
            let mut y = self.inner.step(u)?;
            if self.step == self.at {
                y[0] += 1.0;
            }
            self.step += 1;
            Ok(y)
        }
    }
    let sys = plant(9, 3, 2, 2);
    let n = 12;
    let reference: Vec<Vector> = (0..=n).map(|_| Vector::from_element(2, 1.0)).collect();
    let (gains, est) = controller(&sys, n, &reference);
    let base = run_closed_loop(&mut LtiPlant::new(sys.clone()), &gains, &est, &reference, None, LoopOptions::default()).unwrap();
    for at in 0..n {
        let mut kicked = Kick { inner: LtiPlant::new(sys.clone()), at, step: 0 };
        let t = run_closed_loop(&mut kicked, &gains, &est, &reference, None, LoopOptions::default()).unwrap();
        for k in 0..=at {
            assert_eq!(t.u[k], base.u[k]);
        }
        // K_N is zero: the last increment cannot reach any weighted output.
        if at + 1 < n {
            assert_ne!(t.u[at + 1], base.u[at + 1]);
        }
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let sys = plant(21, 4, 3, 3);
    let n = 30;
    let reference = vec![Vector::from_element(3, 0.5); n + 1];
    let problem = TrackingProblem::new(n, reference, CostWeights::scaled_identity(3, 3, 0.05), sys.markov(n + 1).unwrap()).unwrap();
    for route in [synthesize_gains, synthesize_head_gains] {
        let a = route(&problem, Execution::Parallel).unwrap();
        let b = route(&problem, Execution::Sequential).unwrap();
        for k in 0..=n {
            assert_eq!(a.stored(k), b.stored(k));
        }
    }
}

#[test]
fn whitenoise_error_shrinks() {
    let sys = StateSpace::new(
        Mat::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.5]),
        Mat::from_row_slice(2, 1, &[1.0, 0.5]),
        Mat::from_row_slice(1, 2, &[1.0, -0.3]),
    )
    .unwrap();
    let exact = sys.markov(5).unwrap();
    let err = |samples: usize, seed: u64| {
        let est = estimate_markov_whitenoise(&mut LtiPlant::new(sys.clone()), 5, samples, seed).unwrap();
        (1..=5).map(|i| rel_diff(&est.h()[i], &exact.h()[i])).fold(0.0, f64::max)
    };
    let mean = |samples| (0..8).map(|s| err(samples, s)).sum::<f64>() / 8.0;
    let (a, b) = (mean(1_000), mean(20_000));
    assert!(b < a, "{a} {b}");
    assert!(b < 0.1);
}

#[test]
fn markov_bundle_round_trip() {
    let sys = plant(3, 3, 2, 2);
    let seq = sys.markov(10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let hash = seq.save(dir.path()).unwrap();
    let back = MarkovSequence::load(dir.path()).unwrap();
    assert_eq!(back.h(), seq.h());
    assert_eq!(back.m(), seq.m());
    assert_eq!(hash, back.content_hash());
    // Tampering is detected.
    std::fs::write(dir.path().join("H_003.csv"), "1,2\n3,4\n").unwrap();
    assert!(MarkovSequence::load(dir.path()).is_err());
}

#[test]
fn gain_schedule_round_trip() {
    let sys = plant(4, 2, 1, 2);
    let n = 5;
    let problem = TrackingProblem::new(n, vec![Vector::zeros(2); n + 1], CostWeights::scaled_identity(2, 1, 0.2), sys.markov(n + 1).unwrap()).unwrap();
    for gains in [synthesize_gains(&problem, Execution::Sequential).unwrap(), synthesize_head_gains(&problem, Execution::Sequential).unwrap()] {
        let dir = tempfile::tempdir().unwrap();
        gains.save(dir.path(), Some(0.2)).unwrap();
        let back = GainSchedule::load(dir.path()).unwrap();
        assert_eq!(back.retention(), gains.retention());
        for k in 0..=n {
            assert_eq!(back.stored(k), gains.stored(k));
        }
    }
}

#[test]
fn state_space_text_round_trip() {
    let sys = plant(8, 3, 2, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plant.txt");
    sys.save(&path).unwrap();
    assert_eq!(StateSpace::load(&path).unwrap(), sys);
}

#[test]
fn noise_streams_repeat_per_seed() {
    let w = Mat::identity(2, 2);
    let v = Mat::identity(3, 3) * 0.5;
    let mut a = NoiseStream::new(&w, &v, 11).unwrap();
    let mut b = NoiseStream::new(&w, &v, 11).unwrap();
    for _ in 0..20 {
        assert_eq!(a.next_pair(), b.next_pair());
    }
}
