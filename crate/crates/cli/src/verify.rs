//! Random-plant check of the data-based pipeline against the state-space
//! oracle.

use std::fmt;
use std::time::{Duration, Instant};

use anyhow::Result;
use datatrack::closed_loop::{run_closed_loop, LoopOptions, NoiseStream};
use datatrack::estimator::{build_estimator_schedule, NoiseModel};
use datatrack::linalg::{rel_diff, rel_diff_vec};
use datatrack::lti::StateSpace;
use datatrack::markov::LtiPlant;
use datatrack::oracle::{model_closed_loop, model_estimator, model_gains};
use datatrack::par::{try_map_indexed, Execution};
use datatrack::tracking::{synthesize_gains, synthesize_head_gains, CostWeights, TrackingProblem};
use datatrack::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::VerifyConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlantDeviation {
    pub states: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub horizon: usize,
    pub gains: f64,
    pub estimator: f64,
    pub closed_loop: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub plants: Vec<PlantDeviation>,
    pub gain_tolerance: f64,
    pub loop_tolerance: f64,
    pub elapsed: Duration,
}

impl VerifyReport {
    pub fn max_gain_deviation(&self) -> f64 {
        self.plants.iter().map(|d| d.gains).fold(0.0, f64::max)
    }
    pub fn max_estimator_deviation(&self) -> f64 {
        self.plants.iter().map(|d| d.estimator).fold(0.0, f64::max)
    }
    pub fn max_loop_deviation(&self) -> f64 {
        self.plants.iter().map(|d| d.closed_loop).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_gain_deviation() <= self.gain_tolerance
            && self.max_estimator_deviation() <= self.gain_tolerance
            && self.max_loop_deviation() <= self.loop_tolerance
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "plants checked: {} in {:.2?}", self.plants.len(), self.elapsed)?;
        writeln!(f, "max gain deviation:      {:.3e} (tolerance {:.1e})", self.max_gain_deviation(), self.gain_tolerance)?;
        writeln!(f, "max estimator deviation: {:.3e} (tolerance {:.1e})", self.max_estimator_deviation(), self.gain_tolerance)?;
        writeln!(f, "max loop deviation:      {:.3e} (tolerance {:.1e})", self.max_loop_deviation(), self.loop_tolerance)?;
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Draws `cfg.plants` random stable plants (the first with `N = 1`) and
/// compares gains, estimator and a noisy closed loop built from Markov data
/// (optionally perturbed) against the state-space route.
pub fn verify(cfg: &VerifyConfig, seed: u64) -> Result<VerifyReport> {
    let start = Instant::now();
    let plants = try_map_indexed(cfg.plants, Execution::available(), |i| check_plant(cfg, seed, i))?;
    Ok(VerifyReport {
        plants,
        gain_tolerance: cfg.gain_tolerance,
        loop_tolerance: cfg.loop_tolerance,
        elapsed: start.elapsed(),
    })
}

fn check_plant(cfg: &VerifyConfig, seed: u64, index: usize) -> Result<PlantDeviation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64));
    let n = rng.gen_range(1..=cfg.max_states);
    let m = rng.gen_range(1..=cfg.max_io);
    let p = rng.gen_range(1..=cfg.max_io);
    let horizon = if index == 0 { 1 } else { rng.gen_range(1..=cfg.max_horizon) };
    let sys = StateSpace::random_stable(&mut rng, n, m, p, 0.9)?;
    let weights = CostWeights::scaled_identity(p, m, rng.gen_range(0.01..1.0));
    let noise = NoiseModel::isotropic(m, p, rng.gen_range(0.1..1.0), rng.gen_range(0.01..0.5));
    let reference: Vec<Vector> = (0..=horizon).map(|_| Vector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0))).collect();
    let noise_seed = rng.gen();

    let mut markov = sys.markov(horizon + 1)?;
    if cfg.perturbation > 0.0 {
        markov = markov.perturbed(cfg.perturbation, noise_seed);
    }
    let problem = TrackingProblem::new(horizon, reference.clone(), weights.clone(), markov.clone())?;
    let full = synthesize_gains(&problem, Execution::Sequential)?;
    let head = synthesize_head_gains(&problem, Execution::Sequential)?;
    let est = build_estimator_schedule(&markov, &noise, horizon)?;

    let mgains = model_gains(&sys, &weights, horizon, Execution::Sequential)?;
    let mest = model_estimator(&sys, &noise, horizon)?;

    let gains = (0..=horizon)
        .map(|k| match (full.full(k), mgains.full(k)) {
            (Some(a), Some(b)) => rel_diff(a, b),
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    let estimator = (1..=horizon)
        .map(|k| rel_diff(est.f(k), mest.schedule.f(k)).max(rel_diff(est.b(k), mest.schedule.b(k))))
        .fold(0.0, f64::max);

    let mut stream = NoiseStream::new(&noise.w, &noise.v, noise_seed)?;
    let data = run_closed_loop(&mut LtiPlant::new(sys.clone()), &head, &est, &reference, Some(&mut stream), LoopOptions::default())?;
    let mut stream = NoiseStream::new(&noise.w, &noise.v, noise_seed)?;
    let model = model_closed_loop(&sys, &mgains, &mest, &reference, Some(&mut stream))?;
    let closed_loop = (0..=horizon)
        .map(|k| rel_diff_vec(&data.u[k], &model.u[k]).max(rel_diff_vec(&data.y[k], &model.y[k])))
        .fold(0.0, f64::max);

    Ok(PlantDeviation { states: n, inputs: m, outputs: p, horizon, gains, estimator, closed_loop })
}
