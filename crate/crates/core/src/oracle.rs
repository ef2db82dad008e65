//! Model-based reference implementation of the tracking controller and
//! estimator, computed from `(Â, B̂, Ĉ, D̂)` without Markov data. Used to
//! cross-check the data-based path.

use crate::closed_loop::{ClosedLoopTrace, NoiseStream};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorSchedule, NoiseModel};
use crate::linalg::{self, Mat, Vector};
use crate::lti::{AugmentedSystem, StateSpace};
use crate::par::{self, Execution};
use crate::tracking::{build_weight_blocks, CostWeights, GainSchedule};

fn lu_solve(a: &Mat, b: &Mat, what: &str) -> Result<Mat> {
    a.clone().lu().solve(b).ok_or_else(|| Error::Singular {
        what: what.into(),
        condition: f64::INFINITY,
    })
}

fn lu_inverse(a: &Mat, what: &str) -> Result<Mat> {
    a.clone().try_inverse().ok_or_else(|| Error::Singular {
        what: what.into(),
        condition: f64::INFINITY,
    })
}

/// `ĈÂ^i X` for `i = 0..count`.
fn output_powers(aug: &AugmentedSystem, x: &Mat, count: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(count);
    let mut ax = x.clone();
    for _ in 0..count {
        out.push(&aug.c_hat * &ax);
        ax = &aug.a_hat * ax;
    }
    out
}

/// `H̄_k` with blocks `ĈÂ^{i-j-1}B̂` below the diagonal.
pub fn model_hbar(aug: &AugmentedSystem, horizon: usize, k: usize) -> Mat {
    let (p, m) = (aug.c_hat.nrows(), aug.b_hat.ncols());
    let len = horizon - k + 1;
    let cab = output_powers(aug, &aug.b_hat, len);
    let mut out = Mat::zeros(len * p, len * m);
    for i in 0..len {
        for j in 0..i {
            out.view_mut((i * p, j * m), (p, m)).copy_from(&cab[i - j - 1]);
        }
    }
    out
}

/// Full gain schedule via explicit normal equations and LU solves.
pub fn model_gains(sys: &StateSpace, weights: &CostWeights, horizon: usize, exec: Execution) -> Result<GainSchedule> {
    weights.validate()?;
    let aug = sys.augment();
    let gains = par::try_map_indexed(horizon + 1, exec, |k| {
        let hbar = model_hbar(&aug, horizon, k);
        let (qbar, rbar) = build_weight_blocks(weights, horizon, k);
        let qh = &qbar * &hbar;
        let a = hbar.transpose() * &qh + rbar;
        lu_solve(&a, &qh.transpose(), "model normal matrix")
    })?;
    GainSchedule::from_full(gains, sys.outputs(), sys.inputs())
}

/// Estimator gains `L_{k-1}` (index `k = 1..=N`, entry 0 empty) and the
/// induced output-space schedule `F_k = O_{N-k} L_{k-1}`,
/// `B_k = [ĈB̂; ...; ĈÂ^{N-k}B̂]`.
pub struct ModelEstimator {
    pub l: Vec<Mat>,
    pub schedule: EstimatorSchedule,
}

/// Builds the model estimator from the inverse-form covariance; needs PD `W`.
pub fn model_estimator(sys: &StateSpace, noise: &NoiseModel, horizon: usize) -> Result<ModelEstimator> {
    let (m, p) = (sys.inputs(), sys.outputs());
    noise.validate(m, p)?;
    let aug = sys.augment();
    let w_inv = lu_inverse(&noise.w, "noise W (model estimator needs W > 0)")?;
    let v_inv = lu_inverse(&noise.v, "noise V")?;
    let cad = output_powers(&aug, &aug.d_hat, horizon + 1);
    let cab = output_powers(&aug, &aug.b_hat, horizon);
    let mut l = vec![Mat::zeros(0, 0)];
    let mut f = Vec::with_capacity(horizon);
    let mut b = Vec::with_capacity(horizon);
    let mut d = aug.d_hat.clone();
    let mut ad = aug.a_hat.clone() * &aug.d_hat;
    for k in 1..=horizon {
        if k > 1 {
            // D_{k-1} = [D̂, ÂD̂, ..., Â^{k-1}D̂]
            let mut grown = Mat::zeros(d.nrows(), d.ncols() + m);
            grown.view_mut((0, 0), d.shape()).copy_from(&d);
            grown.view_mut((0, d.ncols()), ad.shape()).copy_from(&ad);
            d = grown;
            ad = &aug.a_hat * ad;
        }
        let mut t = Mat::zeros(k * p, k * m);
        for i in 0..k {
            for j in (i + 1)..k {
                t.view_mut((i * p, j * m), (p, m)).copy_from(&cad[j - i - 1]);
            }
        }
        let wb = linalg::block_diag(&vec![&w_inv; k]);
        let vb = linalg::block_diag(&vec![&v_inv; k]);
        let p_k = lu_inverse(&(wb + t.transpose() * vb * &t), "model estimator information")?;
        let y = &d * p_k * d.transpose();
        let s = &noise.v + &aug.c_hat * &y * aug.c_hat.transpose();
        let rhs = (&aug.a_hat * &y * aug.c_hat.transpose()).transpose();
        let lk = lu_solve(&s.transpose(), &rhs, "model innovation covariance")?.transpose();
        let rows = horizon - k + 1;
        f.push(aug.observability(rows) * &lk);
        let blocks: Vec<&Mat> = cab[..rows].iter().collect();
        b.push(linalg::vstack(&blocks));
        l.push(lk);
    }
    Ok(ModelEstimator {
        l,
        schedule: EstimatorSchedule::from_parts(f, b, p, m)?,
    })
}

/// Closed loop with a state-space observer `x̌` and the model gains,
/// simulating the plant equations directly.
///
/// Draws noise from `noise` in the same order as the data-based loop, so a
/// shared seed yields the same realization.
pub fn model_closed_loop(
    sys: &StateSpace,
    gains: &GainSchedule,
    estimator: &ModelEstimator,
    reference: &[Vector],
    mut noise: Option<&mut NoiseStream>,
) -> Result<ClosedLoopTrace> {
    let n = gains.horizon();
    let (m, p) = (sys.inputs(), sys.outputs());
    if reference.len() != n + 1 {
        return Err(Error::dim("reference length", n + 1, reference.len()));
    }
    let aug = sys.augment();
    let stacked = linalg::concat(reference);
    let mut trace = ClosedLoopTrace::default();
    let mut x = Vector::zeros(sys.states());
    let mut xc = Vector::zeros(aug.states());
    let mut u = Vector::zeros(m);
    for k in 0..=n {
        let du = if k == 0 {
            Vector::zeros(m)
        } else {
            let innovation = &trace.y[k - 1] - &aug.c_hat * &xc;
            xc = &aug.a_hat * &xc + &aug.b_hat * &trace.du[k - 1] + &estimator.l[k] * innovation;
            let xbar = aug.observability(n - k + 1) * &xc;
            let e = stacked.rows(k * p, (n - k + 1) * p) - xbar;
            gains.apply_head(k, &e)?
        };
        u += &du;
        let (w, v) = match noise.as_deref_mut() {
            Some(stream) => stream.next_pair(),
            None => (Vector::zeros(m), Vector::zeros(p)),
        };
        let y = sys.c() * &x + v;
        x = sys.a() * &x + sys.b() * &u + sys.d_dist() * &w;
        trace.error.push(&reference[k] - &y);
        trace.xbar_norm.push(0.0);
        trace.u.push(u.clone());
        trace.du.push(du);
        trace.y.push(y);
        trace.reference.push(reference[k].clone());
    }
    Ok(trace)
}
