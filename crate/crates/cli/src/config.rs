//! Experiment configuration, read from a TOML file with one table per
//! concern. Every table has defaults, so an empty file describes the
//! airfoil experiment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use datatrack::lti::StateSpace;
use datatrack::Mat;
use serde::{Deserialize, Serialize};
use tensegrity::airfoil::AirfoilSpec;
use tensegrity::Materials;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    pub airfoil: AirfoilSpec,
    pub materials: Materials,
    pub morph: MorphConfig,
    pub control: ControlConfig,
    pub weights: WeightOverrides,
    pub noise: NoiseConfig,
    pub identification: IdentificationConfig,
    pub reference: ReferenceConfig,
    pub verify: VerifyConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    #[default]
    Airfoil,
    Lti,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub kind: PlantKind,
    /// State-space text file, relative to the config file.
    pub model: Option<PathBuf>,
    /// Inline matrices, row by row, used when `model` is absent.
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<Vec<f64>>>,
    pub d: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorphConfig {
    /// Rotation increment per bar, `θ_i = i · step` (radians).
    pub step: f64,
    /// Explicit angles; overrides `step` when present.
    pub angles: Option<Vec<f64>>,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self {
            step: std::f64::consts::PI / 72.0,
            angles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub horizon: usize,
    /// Seconds per step (airfoil only).
    pub sample_time: f64,
    pub rho: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            sample_time: 0.01,
            rho: 1e-2,
        }
    }
}

/// Diagonal overrides for `Q`, `S`, `R`, `T`; unset ones keep `I` / `ρI`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightOverrides {
    pub q: Option<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub t: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Isotropic process noise variance.
    pub w: f64,
    /// Isotropic measurement noise variance.
    pub v: f64,
    /// Inject sampled noise into the run; otherwise the run is noise-free
    /// with the estimator still tuned by `w`, `v`.
    pub inject: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            w: 1.0,
            v: 1e-8,
            inject: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentMethod {
    #[default]
    Impulse,
    Whitenoise,
    /// Exact blocks from the state-space model (LTI plants only).
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentificationConfig {
    pub method: IdentMethod,
    /// Impulse height as a fraction of the chord (airfoil) or absolute (LTI).
    pub amplitude: f64,
    pub samples: usize,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            method: IdentMethod::Impulse,
            amplitude: 1e-5,
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Linear interpolation to the morph target (airfoil).
    #[default]
    Morph,
    Zero,
    Constant,
    /// Linear interpolation from zero to `value`.
    Ramp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    pub value: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub plants: usize,
    pub max_states: usize,
    pub max_io: usize,
    pub max_horizon: usize,
    /// Standard deviation of Gaussian noise added to every entry of the
    /// Markov blocks `i >= 1` before synthesis.
    pub perturbation: f64,
    pub gain_tolerance: f64,
    pub loop_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            plants: 50,
            max_states: 6,
            max_io: 3,
            max_horizon: 20,
            perturbation: 0.0,
            gain_tolerance: 1e-8,
            loop_tolerance: 1e-6,
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates a config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(model) = &cfg.plant.model {
            if model.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.plant.model = Some(base.join(model));
            }
        }
        cfg.validate()?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        if self.control.horizon == 0 {
            bail!("control.horizon must be at least 1");
        }
        if !(self.control.rho > 0.0) {
            bail!("control.rho must be positive");
        }
        if !(self.control.sample_time > 0.0) {
            bail!("control.sample_time must be positive");
        }
        if !(self.noise.w >= 0.0 && self.noise.v > 0.0) {
            bail!("noise.w must be >= 0 and noise.v > 0");
        }
        match self.plant.kind {
            PlantKind::Airfoil => {
                self.airfoil.validate()?;
                self.materials.validate()?;
                if self.identification.method == IdentMethod::Model {
                    bail!("identification.method = \"model\" needs an LTI plant");
                }
                if matches!(self.reference.kind, ReferenceKind::Constant | ReferenceKind::Ramp) && self.reference.value.is_none() {
                    bail!("reference.value is required for constant and ramp references");
                }
            }
            PlantKind::Lti => {
                if let Some(path) = &self.plant.model {
                    if !path.exists() {
                        bail!("plant.model {} does not exist", path.display());
                    }
                } else if self.plant.a.is_none() || self.plant.b.is_none() || self.plant.c.is_none() {
                    bail!("an LTI plant needs plant.model or inline plant.a, plant.b, plant.c");
                }
                if self.reference.kind == ReferenceKind::Morph {
                    bail!("reference.kind = \"morph\" needs the airfoil plant");
                }
            }
        }
        if self.identification.method == IdentMethod::Impulse && !(self.identification.amplitude > 0.0) {
            bail!("identification.amplitude must be positive");
        }
        if self.identification.method == IdentMethod::Whitenoise && self.identification.samples <= self.control.horizon + 1 {
            bail!("identification.samples must exceed horizon + 1");
        }
        if self.verify.plants == 0 || self.verify.max_states == 0 || self.verify.max_io == 0 || self.verify.max_horizon == 0 {
            bail!("verify sizes must be positive");
        }
        Ok(())
    }

    /// The LTI plant described by `[plant]`.
    pub fn state_space(&self) -> Result<StateSpace> {
        if let Some(path) = &self.plant.model {
            return Ok(StateSpace::load(path)?);
        }
        let a = rows_to_mat(self.plant.a.as_deref().unwrap_or_default(), "plant.a")?;
        let b = rows_to_mat(self.plant.b.as_deref().unwrap_or_default(), "plant.b")?;
        let c = rows_to_mat(self.plant.c.as_deref().unwrap_or_default(), "plant.c")?;
        Ok(match &self.plant.d {
            Some(d) => StateSpace::with_disturbance(a, b, c, rows_to_mat(d, "plant.d")?)?,
            None => StateSpace::new(a, b, c)?,
        })
    }
}

fn rows_to_mat(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        bail!("{what} is empty");
    }
    if rows.iter().any(|r| r.len() != ncols) {
        bail!("{what} has rows of different lengths");
    }
    Ok(Mat::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}
