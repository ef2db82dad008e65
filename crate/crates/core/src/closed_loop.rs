//! The complete data-based tracking loop against a black-box plant.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimator::{estimator_step, EstimatorSchedule, EstimatorState};
use crate::linalg::{self, Mat, Vector};
use crate::markov::BlackBox;
use crate::tracking::GainSchedule;

/// Seeded Gaussian draws `w_k ~ N(0, W)`, `v_k ~ N(0, V)`, in the order
/// `w_0, v_0, w_1, v_1, ...`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    w_sqrt: Mat,
    v_sqrt: Mat,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(w: &Mat, v: &Mat, seed: u64) -> Result<Self> {
        Ok(Self {
            w_sqrt: linalg::psd_sqrt(w, "injected W")?,
            v_sqrt: linalg::psd_sqrt(v, "injected V")?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn next_pair(&mut self) -> (Vector, Vector) {
        let w = draw(&mut self.rng, &self.w_sqrt);
        let v = draw(&mut self.rng, &self.v_sqrt);
        (w, v)
    }
}

fn draw(rng: &mut ChaCha8Rng, root: &Mat) -> Vector {
    let z = Vector::from_fn(root.ncols(), |_, _| StandardNormal.sample(rng));
    root * z
}

/// Per-step record over `k = 0..=N`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClosedLoopTrace {
    pub u: Vec<Vector>,
    pub du: Vec<Vector>,
    pub y: Vec<Vector>,
    pub reference: Vec<Vector>,
    pub error: Vec<Vector>,
    pub xbar_norm: Vec<f64>,
    /// `x̄_k` itself, kept only when requested.
    pub xbar: Vec<Vector>,
}

impl ClosedLoopTrace {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.error.iter().map(|e| e.norm()).collect()
    }

    pub fn terminal_error_norm(&self) -> f64 {
        self.error.last().map_or(0.0, |e| e.norm())
    }

    pub fn to_csv(&self) -> String {
        let m = self.u.first().map_or(0, |v| v.len());
        let p = self.y.first().map_or(0, |v| v.len());
        let mut s = String::from("k");
        for (name, n) in [("u", m), ("du", m), ("y", p), ("r", p), ("e", p)] {
            for i in 0..n {
                let _ = write!(s, ",{name}[{i}]");
            }
        }
        s.push_str(",xbar_norm\n");
        for k in 0..self.len() {
            let _ = write!(s, "{k}");
            for v in [&self.u[k], &self.du[k], &self.y[k], &self.reference[k], &self.error[k]] {
                for x in v.iter() {
                    let _ = write!(s, ",{x:?}");
                }
            }
            let _ = writeln!(s, ",{:?}", self.xbar_norm[k]);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoopOptions {
    pub keep_xbar: bool,
}

/// Runs `u_0 = 0`, then for `k >= 1`: update `x̄_k` from `(Δu_{k-1}, y_{k-1})`,
/// apply the first block of `K_k (r_{k:N} - x̄_k)` as `Δu_k`.
///
/// With `noise`, `w_k` is fed to the plant's disturbance path and `v_k` is
/// added to the measured output.
pub fn run_closed_loop(
    plant: &mut dyn BlackBox,
    gains: &GainSchedule,
    estimator: &EstimatorSchedule,
    reference: &[Vector],
    mut noise: Option<&mut NoiseStream>,
    options: LoopOptions,
) -> Result<ClosedLoopTrace> {
    let n = gains.horizon();
    let (p, m) = (gains.outputs(), gains.inputs());
    if estimator.horizon() != n || estimator.outputs() != p || estimator.inputs() != m {
        return Err(Error::dim(
            "estimator schedule",
            format!("N={n}, p={p}, m={m}"),
            format!("N={}, p={}, m={}", estimator.horizon(), estimator.outputs(), estimator.inputs()),
        ));
    }
    if plant.input_dim() != m || plant.output_dim() != p {
        return Err(Error::dim(
            "plant",
            format!("{m} inputs, {p} outputs"),
            format!("{} inputs, {} outputs", plant.input_dim(), plant.output_dim()),
        ));
    }
    if reference.len() != n + 1 {
        return Err(Error::dim("reference length", n + 1, reference.len()));
    }
    if let Some((k, r)) = reference.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(Error::dim(format!("reference r_{k}"), p, r.len()));
    }
    let stacked = linalg::concat(reference);

    let mut trace = ClosedLoopTrace::default();
    let mut state = EstimatorState::initial(n, p);
    let mut u = Vector::zeros(m);
    let zero_w = Vector::zeros(m);
    for k in 0..=n {
        let du = if k == 0 {
            Vector::zeros(m)
        } else {
            state = estimator_step(estimator, &state, &trace.du[k - 1], &trace.y[k - 1])?;
            let e = stacked.rows(k * p, (n - k + 1) * p) - &state.xbar;
            gains.apply_head(k, &e)?
        };
        u += &du;
        let (w, v) = match noise.as_deref_mut() {
            Some(stream) => stream.next_pair(),
            None => (zero_w.clone(), Vector::zeros(p)),
        };
        let raw = if noise.is_some() {
            plant.step_disturbed(&u, &w)?
        } else {
            plant.step(&u)?
        };
        if raw.len() != p {
            return Err(Error::OutputLength { step: k, expected: p, found: raw.len() });
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteOutput { step: k });
        }
        let y = raw + v;
        trace.error.push(&reference[k] - &y);
        trace.xbar_norm.push(state.xbar.norm());
        if options.keep_xbar {
            trace.xbar.push(state.xbar.clone());
        }
        trace.u.push(u.clone());
        trace.du.push(du);
        trace.y.push(y);
        trace.reference.push(reference[k].clone());
    }
    Ok(trace)
}
