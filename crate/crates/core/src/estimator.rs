//! Output-space state surrogate `x̄_k` driven by Markov data only.
//!
//! `x̄_k = [-F_k I] x̄_{k-1} + B_k Δu_{k-1} + F_k y_{k-1}` with
//! `F_k = M_k P_k N_kᵀ (V + N_k P_k N_kᵀ)⁻¹`, `B_k = [Ĥ_1; ...; Ĥ_{N-k+1}]`.
//!
//! `M_k` has `N-k+1` block rows (block `(i, j) = M̂_{i+j+2}`), matching the
//! length of `x̄_k`, so the recursion telescopes by one block per step.
//!
//! `P_k` is never formed from its inverse. Since
//! `T_k = [[0, N_k], [0, T_{k-1}]]`, the covariance obeys
//! `P_1 = W`, `P_{k+1} = diag(W, P_k - G S⁻¹ Gᵀ)` with `G = P_k N_kᵀ`,
//! `S = V + N_k G`, which is valid for singular `W` as well.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::markov::MarkovSequence;

/// Input disturbance covariance `W` (PSD) and sensor noise covariance `V` (PD).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub w: Mat,
    pub v: Mat,
}

impl NoiseModel {
    pub fn isotropic(m: usize, p: usize, w: f64, v: f64) -> Self {
        Self {
            w: Mat::identity(m, m) * w,
            v: Mat::identity(p, p) * v,
        }
    }

    pub fn validate(&self, m: usize, p: usize) -> Result<()> {
        if self.w.shape() != (m, m) {
            return Err(Error::dim("noise W", format!("{m}x{m}"), format!("{}x{}", self.w.nrows(), self.w.ncols())));
        }
        if self.v.shape() != (p, p) {
            return Err(Error::dim("noise V", format!("{p}x{p}"), format!("{}x{}", self.v.nrows(), self.v.ncols())));
        }
        linalg::require_psd(&self.w, "noise covariance W")?;
        linalg::require_pd(&self.v, "noise covariance V")
    }
}

/// Precomputed `(F_k, B_k)` for `k = 1..=N`. Index 0 holds empty matrices.
#[derive(Debug, Clone)]
pub struct EstimatorSchedule {
    horizon: usize,
    outputs: usize,
    inputs: usize,
    f: Vec<Mat>,
    b: Vec<Mat>,
}

impl EstimatorSchedule {
    /// Wraps externally computed `F_k`, `B_k` for `k = 1..=N`.
    pub fn from_parts(f: Vec<Mat>, b: Vec<Mat>, outputs: usize, inputs: usize) -> Result<Self> {
        let horizon = f.len();
        if horizon == 0 || b.len() != horizon {
            return Err(Error::dim("estimator schedule steps", horizon, b.len()));
        }
        for k in 1..=horizon {
            let rows = (horizon - k + 1) * outputs;
            let (fk, bk) = (&f[k - 1], &b[k - 1]);
            if fk.shape() != (rows, outputs) || bk.shape() != (rows, inputs) {
                return Err(Error::dim(
                    format!("F_{k}, B_{k}"),
                    format!("{rows}x{outputs}, {rows}x{inputs}"),
                    format!("{}x{}, {}x{}", fk.nrows(), fk.ncols(), bk.nrows(), bk.ncols()),
                ));
            }
        }
        let empty = std::iter::once(Mat::zeros(0, 0));
        Ok(Self {
            horizon,
            outputs,
            inputs,
            f: empty.clone().chain(f).collect(),
            b: empty.chain(b).collect(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn outputs(&self) -> usize {
        self.outputs
    }
    pub fn inputs(&self) -> usize {
        self.inputs
    }
    pub fn f(&self, k: usize) -> &Mat {
        &self.f[k]
    }
    pub fn b(&self, k: usize) -> &Mat {
        &self.b[k]
    }
}

/// `M_k`: `(N-k+1) x k` blocks, block `(i, j) = M̂_{i+j+2}`.
pub fn build_m(markov: &MarkovSequence, horizon: usize, k: usize) -> Mat {
    let (p, m) = (markov.outputs(), markov.inputs());
    let mh = markov.m_hat();
    let rows = horizon - k + 1;
    let mut out = Mat::zeros(rows * p, k * m);
    for i in 0..rows {
        for j in 0..k {
            out.view_mut((i * p, j * m), (p, m)).copy_from(&mh[i + j + 2]);
        }
    }
    out
}

/// `N_k = [M̂_1 ... M̂_k]`.
pub fn build_n(markov: &MarkovSequence, k: usize) -> Mat {
    let (p, m) = (markov.outputs(), markov.inputs());
    let mut out = Mat::zeros(p, k * m);
    for j in 0..k {
        out.view_mut((0, j * m), (p, m)).copy_from(&markov.m_hat()[j + 1]);
    }
    out
}

/// `T_{k-1}`: `k x k` blocks, upper Toeplitz, block `(i, j) = M̂_{j-i}`.
pub fn build_t(markov: &MarkovSequence, k: usize) -> Mat {
    let (p, m) = (markov.outputs(), markov.inputs());
    let mut out = Mat::zeros(k * p, k * m);
    for i in 0..k {
        for j in i..k {
            out.view_mut((i * p, j * m), (p, m)).copy_from(&markov.m_hat()[j - i]);
        }
    }
    out
}

/// `B_k = [Ĥ_1; ...; Ĥ_{N-k+1}]`.
pub fn build_b(markov: &MarkovSequence, horizon: usize, k: usize) -> Mat {
    let blocks: Vec<&Mat> = markov.h_hat()[1..=horizon - k + 1].iter().collect();
    linalg::vstack(&blocks)
}

fn check_inputs(markov: &MarkovSequence, noise: &NoiseModel, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    noise.validate(markov.inputs(), markov.outputs())?;
    markov.require("estimator M_k", horizon + 1)
}

/// Gain from a given `P_k`, together with `G = P_k N_kᵀ` and `S`.
fn gain_parts(n_k: &Mat, p_k: &Mat, v: &Mat, k: usize) -> Result<(Mat, Mat, Mat)> {
    let g = p_k * n_k.transpose();
    let mut s = v + n_k * &g;
    linalg::symmetrize(&mut s);
    let chol = linalg::cholesky(&s, &format!("innovation covariance at k = {k}"))?;
    // K = G S⁻¹, solved as S Kᵀ = Gᵀ.
    let kg = chol.solve(&g.transpose()).transpose();
    Ok((g, s, kg))
}

pub fn build_estimator_schedule(
    markov: &MarkovSequence,
    noise: &NoiseModel,
    horizon: usize,
) -> Result<EstimatorSchedule> {
    check_inputs(markov, noise, horizon)?;
    let (p, m) = (markov.outputs(), markov.inputs());
    let mut f = vec![Mat::zeros(0, 0)];
    let mut b = vec![Mat::zeros(0, 0)];
    let mut p_k = noise.w.clone();
    for k in 1..=horizon {
        let n_k = build_n(markov, k);
        let (g, s, kg) = gain_parts(&n_k, &p_k, &noise.v, k)?;
        f.push(build_m(markov, horizon, k) * &kg);
        b.push(build_b(markov, horizon, k));
        if k < horizon {
            // Symmetric form of P - G S⁻¹ Gᵀ; the plain form loses
            // symmetry and definiteness over long horizons.
            let kgt = kg.transpose();
            let mut reduced = &p_k - &kg * g.transpose() - &g * &kgt + &kg * (&s * &kgt);
            linalg::symmetrize(&mut reduced);
            let mut next = Mat::zeros((k + 1) * m, (k + 1) * m);
            next.view_mut((0, 0), (m, m)).copy_from(&noise.w);
            next.view_mut((m, m), (k * m, k * m)).copy_from(&reduced);
            p_k = next;
        }
    }
    Ok(EstimatorSchedule {
        horizon,
        outputs: p,
        inputs: m,
        f,
        b,
    })
}

/// `(W_blk⁻¹ + Tᵀ V_blk⁻¹ T)⁻¹` exactly as written; needs PD `W`.
pub fn covariance_direct(markov: &MarkovSequence, noise: &NoiseModel, k: usize) -> Result<Mat> {
    let t = build_t(markov, k);
    let w_inv = linalg::cholesky(&noise.w, "noise covariance W")
        .map_err(|_| Error::NotPositiveDefinite {
            what: "noise covariance W (the direct covariance form inverts it; use the recursive schedule for singular W)".into(),
        })?
        .inverse();
    let v_inv = linalg::cholesky(&noise.v, "noise covariance V")?.inverse();
    let wb = linalg::block_diag(&vec![&w_inv; k]);
    let vb = linalg::block_diag(&vec![&v_inv; k]);
    let mut info = wb + t.transpose() * vb * &t;
    linalg::symmetrize(&mut info);
    Ok(linalg::cholesky(&info, "estimator information matrix")?.inverse())
}

/// `W_blk - W_blk Tᵀ (V_blk + T W_blk Tᵀ)⁻¹ T W_blk`, valid for PSD `W`.
pub fn covariance_information(markov: &MarkovSequence, noise: &NoiseModel, k: usize) -> Result<Mat> {
    let t = build_t(markov, k);
    let wb = linalg::block_diag(&vec![&noise.w; k]);
    let vb = linalg::block_diag(&vec![&noise.v; k]);
    let tw = &t * &wb;
    let mut s = vb + &tw * t.transpose();
    linalg::symmetrize(&mut s);
    let x = linalg::cholesky(&s, "estimator innovation block")?.solve(&tw);
    let mut out = &wb - tw.transpose() * x;
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// `F_k` evaluated from an explicitly supplied `P_k`.
pub fn gain_from_covariance(markov: &MarkovSequence, noise: &NoiseModel, horizon: usize, k: usize, p_k: &Mat) -> Result<Mat> {
    let n_k = build_n(markov, k);
    let (_, _, kg) = gain_parts(&n_k, p_k, &noise.v, k)?;
    Ok(build_m(markov, horizon, k) * kg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub k: usize,
    pub xbar: Vector,
}

impl EstimatorState {
    /// `x̄_0 = 0` of length `(N+1) p`.
    pub fn initial(horizon: usize, p: usize) -> Self {
        Self {
            k: 0,
            xbar: Vector::zeros((horizon + 1) * p),
        }
    }

    /// First block of `x̄_k`: the predicted `y_k`.
    pub fn predicted_output(&self, p: usize) -> Vector {
        self.xbar.rows(0, p).into_owned()
    }
}

pub fn estimator_step(
    schedule: &EstimatorSchedule,
    state: &EstimatorState,
    du_prev: &Vector,
    y_prev: &Vector,
) -> Result<EstimatorState> {
    let k = state.k + 1;
    if k > schedule.horizon {
        return Err(Error::InvalidArgument(format!(
            "estimator already at the end of the horizon (k = {})",
            state.k
        )));
    }
    let (p, m) = (schedule.outputs, schedule.inputs);
    let expected = (schedule.horizon - state.k + 1) * p;
    if state.xbar.len() != expected {
        return Err(Error::dim(format!("x̄_{}", state.k), expected, state.xbar.len()));
    }
    if du_prev.len() != m {
        return Err(Error::dim("Δu_{k-1}", m, du_prev.len()));
    }
    if y_prev.len() != p {
        return Err(Error::dim("y_{k-1}", p, y_prev.len()));
    }
    let innovation = y_prev - state.xbar.rows(0, p);
    let tail = state.xbar.rows(p, expected - p);
    let xbar = tail + &schedule.b[k] * du_prev + &schedule.f[k] * innovation;
    Ok(EstimatorState { k, xbar })
}
