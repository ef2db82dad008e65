//! Finite-horizon tracking gains built from augmented Markov blocks.
//!
//! For step `k` the batch increment plan is `K_k (r_{k:N} - x̄_k)` with
//! `K_k = (H̄_kᵀ Q̄_k H̄_k + R̄_k)⁻¹ (Q̄_k H̄_k)ᵀ`.

use std::path::Path;

use nalgebra::{Cholesky, Dyn};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::closed_loop::ClosedLoopTrace;
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{self, Mat, Vector};
use crate::markov::MarkovSequence;
use crate::par::{self, Execution};

/// Stage and terminal weights: `Q`, `S` on tracking error, `R`, `T` on
/// input increments.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q: Mat,
    pub s: Mat,
    pub r: Mat,
    pub t: Mat,
}

impl CostWeights {
    /// `Q = S = I_p`, `R = T = rho I_m`.
    pub fn scaled_identity(p: usize, m: usize, rho: f64) -> Self {
        Self {
            q: Mat::identity(p, p),
            s: Mat::identity(p, p),
            r: Mat::identity(m, m) * rho,
            t: Mat::identity(m, m) * rho,
        }
    }

    pub fn outputs(&self) -> usize {
        self.q.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.r.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, m) = (self.outputs(), self.inputs());
        for (name, w, size) in [("Q", &self.q, p), ("S", &self.s, p), ("R", &self.r, m), ("T", &self.t, m)] {
            if w.shape() != (size, size) {
                return Err(Error::dim(
                    format!("weight {name}"),
                    format!("{size}x{size}"),
                    format!("{}x{}", w.nrows(), w.ncols()),
                ));
            }
        }
        linalg::require_psd(&self.q, "weight Q")?;
        linalg::require_psd(&self.s, "weight S")?;
        linalg::require_pd(&self.r, "weight R")?;
        linalg::require_pd(&self.t, "weight T")?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrackingProblem {
    pub horizon: usize,
    pub reference: Vec<Vector>,
    pub weights: CostWeights,
    pub markov: MarkovSequence,
}

impl TrackingProblem {
    pub fn new(
        horizon: usize,
        reference: Vec<Vector>,
        weights: CostWeights,
        markov: MarkovSequence,
    ) -> Result<Self> {
        let problem = Self {
            horizon,
            reference,
            weights,
            markov,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, m) = (self.markov.outputs(), self.markov.inputs());
        if self.reference.len() != self.horizon + 1 {
            return Err(Error::dim("reference length", self.horizon + 1, self.reference.len()));
        }
        if let Some((k, r)) = self.reference.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::dim(format!("reference r_{k}"), p, r.len()));
        }
        if self.weights.outputs() != p || self.weights.inputs() != m {
            return Err(Error::dim(
                "weights vs Markov blocks",
                format!("p={p}, m={m}"),
                format!("p={}, m={}", self.weights.outputs(), self.weights.inputs()),
            ));
        }
        self.weights.validate()?;
        self.markov.require("H̄_0", self.horizon)
    }

    pub fn outputs(&self) -> usize {
        self.markov.outputs()
    }
    pub fn inputs(&self) -> usize {
        self.markov.inputs()
    }

    /// Stacked `[r_k; ...; r_N]`.
    pub fn reference_tail(&self, k: usize) -> Vector {
        linalg::concat(&self.reference[k..])
    }
}

/// Which part of each `K_k` is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retention {
    /// The whole `((N-k+1) m) x ((N-k+1) p)` matrix.
    Full,
    /// Only the first `m` rows, which is all the closed loop applies.
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    horizon: usize,
    outputs: usize,
    inputs: usize,
    retention: Retention,
    gains: Vec<Mat>,
}

impl GainSchedule {
    /// Wraps externally computed full gains `K_0..K_N`.
    pub fn from_full(gains: Vec<Mat>, outputs: usize, inputs: usize) -> Result<Self> {
        let horizon = gains.len().checked_sub(1).ok_or_else(|| {
            Error::InvalidArgument("gain schedule needs at least one step".into())
        })?;
        for (k, g) in gains.iter().enumerate() {
            let len = horizon - k + 1;
            if g.shape() != (len * inputs, len * outputs) {
                return Err(Error::dim(
                    format!("K_{k}"),
                    format!("{}x{}", len * inputs, len * outputs),
                    format!("{}x{}", g.nrows(), g.ncols()),
                ));
            }
        }
        Ok(Self {
            horizon,
            outputs,
            inputs,
            retention: Retention::Full,
            gains,
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
    pub fn retention(&self) -> Retention {
        self.retention
    }

    /// Stored matrix for step `k` (full or head rows depending on retention).
    pub fn stored(&self, k: usize) -> &Mat {
        &self.gains[k]
    }

    /// Full `K_k`; `None` for head-only schedules.
    pub fn full(&self, k: usize) -> Option<&Mat> {
        (self.retention == Retention::Full).then(|| &self.gains[k])
    }

    /// First block-row of `K_k`.
    pub fn head(&self, k: usize) -> Mat {
        self.gains[k].rows(0, self.inputs).into_owned()
    }

    /// `Δu_k` = first block of `K_k e` for the stacked error `e`.
    pub fn apply_head(&self, k: usize, e: &Vector) -> Result<Vector> {
        let g = &self.gains[k];
        if e.len() != g.ncols() {
            return Err(Error::dim(format!("K_{k} operand"), g.ncols(), e.len()));
        }
        Ok(g.rows(0, self.inputs) * e)
    }

    pub fn save(&self, dir: &Path, rho: Option<f64>) -> Result<String> {
        let mut hasher = Sha256::default();
        io::write_blocks(dir, "K", &self.gains, &mut hasher)?;
        let hash = io::hex_digest(hasher);
        let manifest = GainManifest {
            horizon: self.horizon,
            p: self.outputs,
            m: self.inputs,
            rho,
            retention: self.retention,
            sha256: hash.clone(),
        };
        io::write_toml(&dir.join(crate::markov::MANIFEST), &manifest)?;
        Ok(hash)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(crate::markov::MANIFEST);
        let manifest: GainManifest = io::read_toml(&path)?;
        let mut hasher = Sha256::default();
        let gains = io::read_blocks(dir, "K", manifest.horizon + 1, &mut hasher)?;
        if io::hex_digest(hasher) != manifest.sha256 {
            return Err(Error::parse(&path, "content hash does not match block files"));
        }
        Ok(Self {
            horizon: manifest.horizon,
            outputs: manifest.p,
            inputs: manifest.m,
            retention: manifest.retention,
            gains,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GainManifest {
    horizon: usize,
    p: usize,
    m: usize,
    rho: Option<f64>,
    retention: Retention,
    sha256: String,
}

/// Block lower-triangular Toeplitz `H̄_k` with block `(i, j) = Ĥ_{i-j}`.
pub fn build_hbar(markov: &MarkovSequence, horizon: usize, k: usize) -> Result<Mat> {
    if k > horizon {
        return Err(Error::InvalidArgument(format!("step k = {k} exceeds horizon N = {horizon}")));
    }
    let len = horizon - k;
    markov.require("H̄_k", len)?;
    let (p, m) = (markov.outputs(), markov.inputs());
    let hh = markov.h_hat();
    let mut out = Mat::zeros((len + 1) * p, (len + 1) * m);
    for i in 0..=len {
        for j in 0..=i {
            out.view_mut((i * p, j * m), (p, m)).copy_from(&hh[i - j]);
        }
    }
    Ok(out)
}

/// `(Q̄_k, R̄_k)`: `N-k` copies of `Q` (resp. `R`) followed by `S` (resp. `T`).
pub fn build_weight_blocks(weights: &CostWeights, horizon: usize, k: usize) -> (Mat, Mat) {
    let stages = horizon.saturating_sub(k);
    let mut qs: Vec<&Mat> = vec![&weights.q; stages];
    qs.push(&weights.s);
    let mut rs: Vec<&Mat> = vec![&weights.r; stages];
    rs.push(&weights.t);
    (linalg::block_diag(&qs), linalg::block_diag(&rs))
}

fn normal_matrix(hbar: &Mat, qbar: &Mat, rbar: &Mat) -> (Mat, Mat) {
    let qh = qbar * hbar;
    let mut a = hbar.transpose() * &qh + rbar;
    linalg::symmetrize(&mut a);
    (a, qh.transpose())
}

fn factor(a: &Mat, k: usize) -> Result<Cholesky<f64, Dyn>> {
    linalg::cholesky(a, &format!("normal matrix of K_{k}"))
}

/// Every full `K_k`, one independent factorization per step.
pub fn synthesize_gains(problem: &TrackingProblem, exec: Execution) -> Result<GainSchedule> {
    problem.validate()?;
    let n = problem.horizon;
    let gains = par::try_map_indexed(n + 1, exec, |k| -> Result<Mat> {
        let hbar = build_hbar(&problem.markov, n, k)?;
        let (qbar, rbar) = build_weight_blocks(&problem.weights, n, k);
        let (a, b) = normal_matrix(&hbar, &qbar, &rbar);
        Ok(factor(&a, k)?.solve(&b))
    })?;
    Ok(GainSchedule {
        horizon: n,
        outputs: problem.outputs(),
        inputs: problem.inputs(),
        retention: Retention::Full,
        gains,
    })
}

/// First block-row of every `K_k` from a single factorization.
///
/// The normal matrix and right-hand side of step `k` are the trailing
/// principal blocks of those at step 0. Factoring the index-reversed step-0
/// matrix makes every trailing block a leading one, whose Cholesky factor is
/// the leading sub-factor. Each step then costs two triangular solves with
/// `m` right-hand sides and one product.
pub fn synthesize_head_gains(problem: &TrackingProblem, exec: Execution) -> Result<GainSchedule> {
    problem.validate()?;
    let n = problem.horizon;
    let (p, m) = (problem.outputs(), problem.inputs());
    let hbar = build_hbar(&problem.markov, n, 0)?;
    let (qbar, rbar) = build_weight_blocks(&problem.weights, n, 0);
    let (a, b) = normal_matrix(&hbar, &qbar, &rbar);
    drop(hbar);
    let dim = a.nrows();
    let reversed = Mat::from_fn(dim, dim, |i, j| a[(dim - 1 - i, dim - 1 - j)]);
    drop(a);
    let l = factor(&reversed, 0)?.unpack();
    drop(reversed);

    let gains = par::try_map_indexed(n + 1, exec, |k| -> Result<Mat> {
        let size = (n - k + 1) * m;
        let lk = l.view((0, 0), (size, size));
        // Head selector in reversed coordinates: the last m entries, order flipped.
        let mut x = Mat::zeros(size, m);
        for c in 0..m {
            x[(size - 1 - c, c)] = 1.0;
        }
        if !lk.solve_lower_triangular_mut(&mut x) || !lk.tr_solve_lower_triangular_mut(&mut x) {
            return Err(Error::Singular {
                what: format!("normal matrix of K_{k}"),
                condition: f64::INFINITY,
            });
        }
        // Undo the reversal on rows, then head = Xᵀ B_k.
        let xk = Mat::from_fn(size, m, |i, c| x[(size - 1 - i, c)]);
        let bk = b.view((k * m, k * p), (size, (n - k + 1) * p));
        Ok(xk.transpose() * bk)
    })?;
    Ok(GainSchedule {
        horizon: n,
        outputs: p,
        inputs: m,
        retention: Retention::Head,
        gains,
    })
}

/// `J = ½ e_Nᵀ S e_N + ½ Σ_{k<N} (e_kᵀ Q e_k + Δu_kᵀ R Δu_k) + ½ Δu_Nᵀ T Δu_N`.
pub fn evaluate_cost(trace: &ClosedLoopTrace, weights: &CostWeights) -> Result<f64> {
    let len = trace.len();
    if len == 0 {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    cost_from_sequences(&trace.error, &trace.du, weights)
}

pub fn cost_from_sequences(errors: &[Vector], increments: &[Vector], weights: &CostWeights) -> Result<f64> {
    let len = errors.len();
    if increments.len() != len || len == 0 {
        return Err(Error::dim("increment sequence length", len, increments.len()));
    }
    let quad = |w: &Mat, v: &Vector| v.dot(&(w * v));
    let mut j = 0.0;
    for k in 0..len - 1 {
        j += quad(&weights.q, &errors[k]) + quad(&weights.r, &increments[k]);
    }
    j += quad(&weights.s, &errors[len - 1]) + quad(&weights.t, &increments[len - 1]);
    Ok(0.5 * j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_seq(h: &[f64]) -> MarkovSequence {
        let b: Vec<Mat> = h.iter().map(|&v| Mat::from_element(1, 1, v)).collect();
        MarkovSequence::new(b.clone(), b).unwrap()
    }

    #[test]
    fn hbar_scalar_layout() {
        let seq = scalar_seq(&[0.0, 1.0, 0.5]);
        let hb = build_hbar(&seq, 2, 0).unwrap();
        assert_eq!(hb, Mat::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.5, 1.0, 0.0]));
        let last = build_hbar(&seq, 2, 2).unwrap();
        assert_eq!(last, Mat::zeros(1, 1));
        assert!(build_hbar(&seq, 2, 3).is_err());
    }

    #[test]
    fn weight_blocks() {
        let mut w = CostWeights::scaled_identity(2, 1, 1.0);
        w.s *= 2.0;
        let (q, r) = build_weight_blocks(&w, 2, 0);
        let mut expected = Mat::identity(6, 6);
        expected[(4, 4)] = 2.0;
        expected[(5, 5)] = 2.0;
        assert_eq!(q, expected);
        assert_eq!(r.shape(), (3, 3));
        let (q, r) = build_weight_blocks(&w, 2, 2);
        assert_eq!(q, w.s);
        assert_eq!(r, w.t);
    }

    #[test]
    fn zero_r_rejected() {
        let mut w = CostWeights::scaled_identity(1, 1, 1.0);
        w.r = Mat::zeros(1, 1);
        assert!(matches!(w.validate(), Err(Error::NotPositiveDefinite { .. })));
        let mut w = CostWeights::scaled_identity(1, 1, 1.0);
        w.q = Mat::zeros(1, 1);
        assert!(w.validate().is_ok());
    }
}
