//! Markov sequences, black-box plants and the two identification
//! experiments (white-noise cross-correlation and impulse response).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{Mat, Vector};
use crate::lti::StateSpace;

/// Input blocks `H_i`, disturbance blocks `M_i` and their augmented
/// counterparts `Ĥ_i = Σ_{j≤i} H_j`, `M̂_i = M_i`.
///
/// Both sequences are stored to the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSequence {
    h: Vec<Mat>,
    m: Vec<Mat>,
    h_hat: Vec<Mat>,
    m_hat: Vec<Mat>,
}

impl MarkovSequence {
    pub fn new(h: Vec<Mat>, m: Vec<Mat>) -> Result<Self> {
        let Some(first) = h.first() else {
            return Err(Error::InvalidArgument("empty Markov sequence".into()));
        };
        let shape = first.shape();
        if m.len() != h.len() {
            return Err(Error::dim("M block count", h.len(), m.len()));
        }
        for (name, seq) in [("H", &h), ("M", &m)] {
            if let Some((i, b)) = seq.iter().enumerate().find(|(_, b)| b.shape() != shape) {
                return Err(Error::dim(
                    format!("{name}_{i}"),
                    format!("{}x{}", shape.0, shape.1),
                    format!("{}x{}", b.nrows(), b.ncols()),
                ));
            }
        }
        let mut seq = Self {
            h,
            m,
            h_hat: Vec::new(),
            m_hat: Vec::new(),
        };
        seq.fill_augmented();
        Ok(seq)
    }

    fn fill_augmented(&mut self) {
        let mut acc = Mat::zeros(self.outputs(), self.inputs());
        self.h_hat = self
            .h
            .iter()
            .map(|b| {
                acc += b;
                acc.clone()
            })
            .collect();
        self.m_hat = self.m.clone();
    }

    pub fn h(&self) -> &[Mat] {
        &self.h
    }
    pub fn m(&self) -> &[Mat] {
        &self.m
    }
    pub fn h_hat(&self) -> &[Mat] {
        &self.h_hat
    }
    pub fn m_hat(&self) -> &[Mat] {
        &self.m_hat
    }

    pub fn outputs(&self) -> usize {
        self.h[0].nrows()
    }
    pub fn inputs(&self) -> usize {
        self.h[0].ncols()
    }

    /// Highest stored index (the sequence holds `count() + 1` blocks).
    pub fn count(&self) -> usize {
        self.h.len() - 1
    }

    /// Errors unless blocks up to `index` are present.
    pub fn require(&self, which: &str, index: usize) -> Result<()> {
        if index > self.count() {
            return Err(Error::InsufficientMarkov {
                which: which.into(),
                required: index,
                available: self.count(),
            });
        }
        Ok(())
    }

    /// Copy with `scale * noise` added to every `H_i`, `M_i` with `i >= 1`.
    pub fn perturbed(&self, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |b: &Mat, i: usize| {
            if i == 0 {
                b.clone()
            } else {
                b.map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + scale * z
                })
            }
        };
        let h = self.h.iter().enumerate().map(|(i, b)| jitter(b, i)).collect();
        let m = self.m.iter().enumerate().map(|(i, b)| jitter(b, i)).collect();
        Self::new(h, m).expect("shapes preserved")
    }

    pub fn save(&self, dir: &Path) -> Result<String> {
        let mut hasher = Sha256::default();
        io::write_blocks(dir, "H", &self.h, &mut hasher)?;
        io::write_blocks(dir, "M", &self.m, &mut hasher)?;
        let hash = io::hex_digest(hasher);
        let manifest = MarkovManifest {
            p: self.outputs(),
            m: self.inputs(),
            count: self.count(),
            sha256: hash.clone(),
        };
        io::write_toml(&dir.join(MANIFEST), &manifest)?;
        Ok(hash)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let manifest: MarkovManifest = io::read_toml(&path)?;
        let mut hasher = Sha256::default();
        let h = io::read_blocks(dir, "H", manifest.count + 1, &mut hasher)?;
        let m = io::read_blocks(dir, "M", manifest.count + 1, &mut hasher)?;
        let hash = io::hex_digest(hasher);
        if hash != manifest.sha256 {
            return Err(Error::parse(&path, "content hash does not match block files"));
        }
        let seq = Self::new(h, m)?;
        if seq.outputs() != manifest.p || seq.inputs() != manifest.m {
            return Err(Error::parse(
                &path,
                format!(
                    "manifest says {}x{} blocks, files hold {}x{}",
                    manifest.p,
                    manifest.m,
                    seq.outputs(),
                    seq.inputs()
                ),
            ));
        }
        Ok(seq)
    }

    /// Hash of the serialized blocks, identical to the one written by `save`.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::default();
        for b in self.h.iter().chain(&self.m) {
            sha2::Digest::update(&mut hasher, io::matrix_to_csv(b).as_bytes());
        }
        io::hex_digest(hasher)
    }
}

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Serialize, Deserialize)]
struct MarkovManifest {
    p: usize,
    m: usize,
    count: usize,
    sha256: String,
}

/// Recomputes `Ĥ`, `M̂` from `H`, `M`. Idempotent.
pub fn augment_markov(seq: &MarkovSequence) -> MarkovSequence {
    let mut out = seq.clone();
    out.fill_augmented();
    out
}

/// A plant seen only through its input/output behaviour.
///
/// `step` returns the output sampled at the start of the step and then
/// advances the plant with `u_k` held, which realizes the one-sample delay.
pub trait BlackBox {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn step(&mut self, u: &Vector) -> Result<Vector>;

    /// Whether disturbances enter through a port distinct from the input.
    fn has_disturbance_port(&self) -> bool {
        false
    }

    /// Step with an additive disturbance `w_k`. Without a dedicated port the
    /// disturbance is added to the input.
    fn step_disturbed(&mut self, u: &Vector, w: &Vector) -> Result<Vector> {
        self.step(&(u + w))
    }

    /// Returns the plant to its initial rest state.
    fn reset(&mut self) -> Result<()> {
        Err(Error::NotResettable)
    }

    fn label(&self) -> String {
        "black-box".into()
    }
}

/// Linear plant wrapped as a black box; starts at `x = 0`.
#[derive(Debug, Clone)]
pub struct LtiPlant {
    sys: StateSpace,
    x: Vector,
}

impl LtiPlant {
    pub fn new(sys: StateSpace) -> Self {
        let x = Vector::zeros(sys.states());
        Self { sys, x }
    }

    pub fn system(&self) -> &StateSpace {
        &self.sys
    }

    fn check_input(&self, u: &Vector, what: &str) -> Result<()> {
        if u.len() != self.sys.inputs() {
            return Err(Error::dim(what, self.sys.inputs(), u.len()));
        }
        Ok(())
    }
}

impl BlackBox for LtiPlant {
    fn input_dim(&self) -> usize {
        self.sys.inputs()
    }
    fn output_dim(&self) -> usize {
        self.sys.outputs()
    }

    fn step(&mut self, u: &Vector) -> Result<Vector> {
        self.check_input(u, "plant input")?;
        let y = self.sys.c() * &self.x;
        self.x = self.sys.a() * &self.x + self.sys.b() * u;
        Ok(y)
    }

    fn has_disturbance_port(&self) -> bool {
        self.sys.has_separate_disturbance()
    }

    fn step_disturbed(&mut self, u: &Vector, w: &Vector) -> Result<Vector> {
        self.check_input(u, "plant input")?;
        self.check_input(w, "plant disturbance")?;
        let y = self.sys.c() * &self.x;
        self.x = self.sys.a() * &self.x + self.sys.b() * u + self.sys.d_dist() * w;
        Ok(y)
    }

    fn reset(&mut self) -> Result<()> {
        self.x.fill(0.0);
        Ok(())
    }

    fn label(&self) -> String {
        format!(
            "lti(n={}, m={}, p={})",
            self.sys.states(),
            self.sys.inputs(),
            self.sys.outputs()
        )
    }
}

fn checked_output(y: Vector, p: usize, step: usize) -> Result<Vector> {
    if y.len() != p {
        return Err(Error::OutputLength {
            step,
            expected: p,
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteOutput { step });
    }
    Ok(y)
}

/// Cross-correlation estimate `H_i ≈ (1/samples) Σ_k y_{k+i} u_k^T` with
/// unit-covariance Gaussian excitation.
///
/// With a separate disturbance port, `u` and `w` are excited jointly by
/// independent white sequences and `M_i` is correlated against `w`;
/// otherwise `M_i = H_i`. `H_0` is set to zero (transport delay).
pub fn estimate_markov_whitenoise(
    plant: &mut dyn BlackBox,
    count: usize,
    samples: usize,
    seed: u64,
) -> Result<MarkovSequence> {
    if count == 0 {
        return Err(Error::InvalidArgument("Markov count must be >= 1".into()));
    }
    if samples < count + 1 {
        return Err(Error::InvalidArgument(format!(
            "samples ({samples}) must be at least count + 1 ({})",
            count + 1
        )));
    }
    let (m, p) = (plant.input_dim(), plant.output_dim());
    let port = plant.has_disturbance_port();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = samples + count;
    let mut us = Vec::with_capacity(samples);
    let mut ws = Vec::with_capacity(if port { samples } else { 0 });
    let mut h = vec![Mat::zeros(p, m); count + 1];
    let mut md = vec![Mat::zeros(p, m); count + 1];
    let zero = Vector::zeros(m);
    for t in 0..total {
        let (u, w) = if t < samples {
            let u = Vector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            let w = if port {
                Vector::from_fn(m, |_, _| StandardNormal.sample(&mut rng))
            } else {
                zero.clone()
            };
            (u, w)
        } else {
            (zero.clone(), zero.clone())
        };
        let y = if port {
            plant.step_disturbed(&u, &w)?
        } else {
            plant.step(&u)?
        };
        let y = checked_output(y, p, t)?;
        if t < samples {
            us.push(u);
            if port {
                ws.push(w);
            }
        }
        // y_t pairs with u_{t-i} for every lag i in 1..=count.
        for i in 1..=count.min(t) {
            let k = t - i;
            if k < samples {
                h[i].ger(1.0, &y, &us[k], 1.0);
                if port {
                    md[i].ger(1.0, &y, &ws[k], 1.0);
                }
            }
        }
    }
    let scale = 1.0 / samples as f64;
    for b in h.iter_mut().chain(md.iter_mut()) {
        *b *= scale;
    }
    if !port {
        md = h.clone();
    }
    MarkovSequence::new(h, md)
}

/// Impulse-response identification: one experiment per input channel with
/// an impulse of height `amplitude`, responses divided by the amplitude.
///
/// Requires a resettable plant; a separate disturbance port gets its own
/// set of experiments.
pub fn estimate_markov_impulse(
    plant: &mut dyn BlackBox,
    count: usize,
    amplitude: f64,
) -> Result<MarkovSequence> {
    if count == 0 {
        return Err(Error::InvalidArgument("Markov count must be >= 1".into()));
    }
    if !(amplitude.is_finite() && amplitude != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "impulse amplitude must be finite and nonzero, got {amplitude}"
        )));
    }
    let (m, p) = (plant.input_dim(), plant.output_dim());
    let h = impulse_columns(plant, count, amplitude, m, p, false)?;
    let md = if plant.has_disturbance_port() {
        impulse_columns(plant, count, amplitude, m, p, true)?
    } else {
        h.clone()
    };
    MarkovSequence::new(h, md)
}

fn impulse_columns(
    plant: &mut dyn BlackBox,
    count: usize,
    amplitude: f64,
    m: usize,
    p: usize,
    disturbance: bool,
) -> Result<Vec<Mat>> {
    let mut blocks = vec![Mat::zeros(p, m); count + 1];
    let zero = Vector::zeros(m);
    for j in 0..m {
        plant.reset()?;
        let mut pulse = Vector::zeros(m);
        pulse[j] = amplitude;
        for (i, block) in blocks.iter_mut().enumerate() {
            let input = if i == 0 { &pulse } else { &zero };
            let y = if disturbance {
                plant.step_disturbed(&zero, input)?
            } else {
                plant.step(input)?
            };
            let y = checked_output(y, p, i)?;
            block.set_column(j, &(y / amplitude));
        }
    }
    plant.reset()?;
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_plant() -> LtiPlant {
        LtiPlant::new(
            StateSpace::new(
                Mat::from_element(1, 1, 0.5),
                Mat::from_element(1, 1, 1.0),
                Mat::from_element(1, 1, 1.0),
            )
            .unwrap(),
        )
    }

    #[test]
    fn prefix_sums() {
        let h: Vec<Mat> = [0.0, 1.0, 0.5, 0.25]
            .iter()
            .map(|&v| Mat::from_element(1, 1, v))
            .collect();
        let seq = MarkovSequence::new(h.clone(), h).unwrap();
        let hh: Vec<f64> = seq.h_hat().iter().map(|b| b[(0, 0)]).collect();
        assert_eq!(hh, vec![0.0, 1.0, 1.5, 1.75]);
        assert_eq!(seq.m_hat(), seq.m());
        assert_eq!(augment_markov(&augment_markov(&seq)), seq);
    }

    #[test]
    fn impulse_matches_model_on_scalar() {
        let mut plant = scalar_plant();
        let seq = estimate_markov_impulse(&mut plant, 4, 1.0).unwrap();
        let h: Vec<f64> = seq.h().iter().map(|b| b[(0, 0)]).collect();
        assert_eq!(h, vec![0.0, 1.0, 0.5, 0.25, 0.125]);
    }

    struct Sticky;
    impl BlackBox for Sticky {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn step(&mut self, _u: &Vector) -> Result<Vector> {
            Ok(Vector::zeros(1))
        }
    }

    #[test]
    fn impulse_needs_reset() {
        let err = estimate_markov_impulse(&mut Sticky, 3, 1.0).unwrap_err();
        assert!(matches!(err, Error::NotResettable));
        assert!(err.to_string().contains("white-noise"));
    }

    struct Ragged(usize);
    impl BlackBox for Ragged {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn step(&mut self, _u: &Vector) -> Result<Vector> {
            self.0 += 1;
            Ok(Vector::zeros(if self.0 > 5 { 2 } else { 1 }))
        }
    }

    #[test]
    fn inconsistent_output_length_is_reported() {
        let err = estimate_markov_whitenoise(&mut Ragged(0), 2, 10, 0).unwrap_err();
        assert!(matches!(err, Error::OutputLength { step: 5, .. }), "{err}");
    }

    #[test]
    fn insufficient_blocks_named() {
        let seq = scalar_plant().system().markov(3).unwrap();
        let err = seq.require("H̄_0", 7).unwrap_err();
        assert!(matches!(err, Error::InsufficientMarkov { required: 7, available: 3, .. }));
    }
}
