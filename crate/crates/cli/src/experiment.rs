//! Identification and tracking runs, plus the files they leave behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use datatrack::closed_loop::{run_closed_loop, ClosedLoopTrace, LoopOptions, NoiseStream};
use datatrack::estimator::{build_estimator_schedule, NoiseModel};
use datatrack::io::{sha256_hex, write_toml};
use datatrack::markov::{estimate_markov_impulse, estimate_markov_whitenoise, BlackBox, LtiPlant, MarkovSequence};
use datatrack::par::Execution;
use datatrack::tracking::{evaluate_cost, synthesize_head_gains, CostWeights, TrackingProblem};
use datatrack::{Mat, Vector};
use nalgebra::Matrix3xX;
use serde::Serialize;
use tensegrity::airfoil::{self, MorphSpec};
use tensegrity::{Materials, TensegrityPlant, TensegrityTopology};

use crate::config::{ExperimentConfig, IdentMethod, PlantKind, ReferenceKind};

pub enum Plant {
    Airfoil(Box<TensegrityPlant>),
    Lti(LtiPlant),
}

impl Plant {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match cfg.plant.kind {
            PlantKind::Airfoil => Plant::Airfoil(Box::new(tensegrity::airfoil_plant(
                &cfg.airfoil,
                cfg.materials,
                cfg.control.sample_time,
            )?)),
            PlantKind::Lti => Plant::Lti(LtiPlant::new(cfg.state_space()?)),
        })
    }

    pub fn black_box(&mut self) -> &mut dyn BlackBox {
        match self {
            Plant::Airfoil(p) => p.as_mut(),
            Plant::Lti(p) => p,
        }
    }

    fn topology(&self) -> Option<&TensegrityTopology> {
        match self {
            Plant::Airfoil(p) => Some(&p.model().topology),
            Plant::Lti(_) => None,
        }
    }
}

/// Markov blocks `0..=horizon + 1`, by the configured method.
pub fn identify(cfg: &ExperimentConfig, plant: &mut Plant) -> Result<MarkovSequence> {
    let count = cfg.control.horizon + 1;
    let id = &cfg.identification;
    let markov = match (id.method, &*plant) {
        (IdentMethod::Model, Plant::Lti(p)) => p.system().markov(count)?,
        (IdentMethod::Model, Plant::Airfoil(_)) => bail!("model identification needs an LTI plant"),
        (IdentMethod::Impulse, Plant::Airfoil(_)) => {
            estimate_markov_impulse(plant.black_box(), count, id.amplitude * cfg.airfoil.chord)?
        }
        (IdentMethod::Impulse, Plant::Lti(_)) => estimate_markov_impulse(plant.black_box(), count, id.amplitude)?,
        (IdentMethod::Whitenoise, _) => estimate_markov_whitenoise(plant.black_box(), count, id.samples, cfg.seed)?,
    };
    plant.black_box().reset()?;
    Ok(markov)
}

/// Target geometry of the morph, with the free-node displacement it implies.
pub struct MorphTarget {
    pub nodes: Matrix3xX<f64>,
    pub displacement: Vector,
}

fn morph_target(cfg: &ExperimentConfig, topology: &TensegrityTopology) -> Result<MorphTarget> {
    let spec = match &cfg.morph.angles {
        Some(angles) => MorphSpec { angles: angles.clone() },
        None => MorphSpec::linear(topology.q, cfg.morph.step),
    };
    let nodes = airfoil::morph_target(topology, &spec)?;
    let displacement = airfoil::target_displacement(topology, &nodes);
    Ok(MorphTarget { nodes, displacement })
}

pub fn reference(cfg: &ExperimentConfig, p: usize, topology: Option<&TensegrityTopology>) -> Result<Vec<Vector>> {
    let n = cfg.control.horizon;
    let value = || -> Result<Vector> {
        let v = cfg.reference.value.as_deref().context("reference.value is required")?;
        if v.len() != p {
            bail!("reference.value has {} entries, plant has {p} outputs", v.len());
        }
        Ok(Vector::from_column_slice(v))
    };
    Ok(match cfg.reference.kind {
        ReferenceKind::Zero => vec![Vector::zeros(p); n + 1],
        ReferenceKind::Constant => vec![value()?; n + 1],
        ReferenceKind::Ramp => airfoil::linear_reference(&value()?, n),
        ReferenceKind::Morph => {
            let topology = topology.context("a morph reference needs the airfoil plant")?;
            airfoil::linear_reference(&morph_target(cfg, topology)?.displacement, n)
        }
    })
}

pub fn weights(cfg: &ExperimentConfig, p: usize, m: usize) -> Result<CostWeights> {
    let mut w = CostWeights::scaled_identity(p, m, cfg.control.rho);
    let o = &cfg.weights;
    for (name, diag, target, size) in [
        ("q", &o.q, &mut w.q, p),
        ("s", &o.s, &mut w.s, p),
        ("r", &o.r, &mut w.r, m),
        ("t", &o.t, &mut w.t, m),
    ] {
        if let Some(d) = diag {
            if d.len() != size {
                bail!("weights.{name} has {} entries, expected {size}", d.len());
            }
            *target = Mat::from_diagonal(&Vector::from_column_slice(d));
        }
    }
    w.validate()?;
    Ok(w)
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub horizon: usize,
    pub cost: f64,
    pub terminal_error: f64,
    /// `|r_N|`; zero for a zero reference.
    pub reference_norm: f64,
    /// Terminal error over `|r_N|`, or the plain terminal error when `r_N = 0`.
    pub relative_terminal_error: f64,
    /// Largest error norm over the first and last tenth of the horizon.
    pub early_peak: f64,
    pub late_peak: f64,
}

impl Summary {
    pub fn from_trace(trace: &ClosedLoopTrace, weights: &CostWeights) -> Result<Self> {
        let e = trace.error_norms();
        let n = e.len() - 1;
        let tenth = (n / 10).max(1);
        let peak = |s: &[f64]| s.iter().copied().fold(0.0, f64::max);
        let reference_norm = trace.reference.last().map_or(0.0, |r| r.norm());
        let terminal_error = e[n];
        Ok(Self {
            horizon: n,
            cost: evaluate_cost(trace, weights)?,
            terminal_error,
            reference_norm,
            relative_terminal_error: if reference_norm > 0.0 { terminal_error / reference_norm } else { terminal_error },
            early_peak: peak(&e[..=tenth]),
            late_peak: peak(&e[n + 1 - tenth..]),
        })
    }
}

#[derive(Debug, Serialize)]
struct Manifest {
    version: String,
    command: String,
    plant: String,
    horizon: usize,
    sample_time: Option<f64>,
    rho: f64,
    w: f64,
    v: f64,
    noise_injected: bool,
    seed: u64,
    identification: String,
    markov_sha256: String,
    config_sha256: String,
    /// Member properties, damping and gravity of the airfoil model.
    materials: Option<Materials>,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig, cfg_text: &str, command: &str, plant: &Plant, markov: &MarkovSequence, source: String) -> Self {
        let airfoil = matches!(plant, Plant::Airfoil(_));
        let label = match plant {
            Plant::Airfoil(p) => p.label(),
            Plant::Lti(p) => p.label(),
        };
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            plant: label,
            horizon: cfg.control.horizon,
            sample_time: airfoil.then_some(cfg.control.sample_time),
            rho: cfg.control.rho,
            w: cfg.noise.w,
            v: cfg.noise.v,
            noise_injected: cfg.noise.inject,
            seed: cfg.seed,
            identification: source,
            markov_sha256: markov.content_hash(),
            config_sha256: sha256_hex(cfg_text.as_bytes()),
            materials: airfoil.then_some(cfg.materials),
        }
    }
}

fn method_name(cfg: &ExperimentConfig) -> String {
    match cfg.identification.method {
        IdentMethod::Impulse => format!("impulse(amplitude={:e})", cfg.identification.amplitude),
        IdentMethod::Whitenoise => format!("whitenoise(samples={})", cfg.identification.samples),
        IdentMethod::Model => "model".into(),
    }
}

/// Identifies the plant and stores the blocks under `out/markov`.
pub fn run_identify(cfg: &ExperimentConfig, cfg_text: &str, out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut plant = Plant::build(cfg)?;
    let markov = identify(cfg, &mut plant)?;
    let dir = out.join("markov");
    std::fs::create_dir_all(&dir)?;
    markov.save(&dir)?;
    write_toml(&out.join("manifest.toml"), &Manifest::new(cfg, cfg_text, "identify", &plant, &markov, method_name(cfg)))?;
    Ok(dir)
}

pub struct TrackOutcome {
    pub summary: Summary,
    pub trace: ClosedLoopTrace,
}

/// Full pipeline: Markov data (loaded or identified), gains, estimator and
/// the closed-loop run, with every artifact written to `out`.
pub fn run_track(cfg: &ExperimentConfig, cfg_text: &str, out: &Path, markov_dir: Option<&Path>) -> Result<TrackOutcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut plant = Plant::build(cfg)?;
    let (markov, source) = match markov_dir {
        Some(dir) => {
            let seq = MarkovSequence::load(dir).with_context(|| format!("loading Markov data from {}", dir.display()))?;
            (seq, format!("loaded({})", dir.display()))
        }
        None => (identify(cfg, &mut plant)?, method_name(cfg)),
    };
    let n = cfg.control.horizon;
    let (p, m) = (plant.black_box().output_dim(), plant.black_box().input_dim());
    if markov.outputs() != p || markov.inputs() != m {
        bail!("Markov data is {}x{}, plant is {p}x{m}", markov.outputs(), markov.inputs());
    }
    markov.require("H", n + 1)?;
    let disturbances = markov.m()[0].ncols();

    let reference = reference(cfg, p, plant.topology())?;
    let weights = weights(cfg, p, m)?;
    let problem = TrackingProblem::new(n, reference.clone(), weights.clone(), markov.clone())?;
    let gains = synthesize_head_gains(&problem, Execution::available())?;
    let noise = NoiseModel::isotropic(disturbances, p, cfg.noise.w, cfg.noise.v);
    let estimator = build_estimator_schedule(&markov, &noise, n)?;

    plant.black_box().reset()?;
    if let Plant::Airfoil(t) = &mut plant {
        t.set_recording(true);
    }
    let mut stream = if cfg.noise.inject { Some(NoiseStream::new(&noise.w, &noise.v, cfg.seed)?) } else { None };
    let trace = run_closed_loop(plant.black_box(), &gains, &estimator, &reference, stream.as_mut(), LoopOptions::default())?;
    let summary = Summary::from_trace(&trace, &weights)?;

    let markov_out = out.join("markov");
    std::fs::create_dir_all(&markov_out)?;
    markov.save(&markov_out)?;
    trace.write_csv(&out.join("trace.csv"))?;
    std::fs::write(out.join("errors.csv"), errors_csv(&trace, plant.topology()))?;
    if let Plant::Airfoil(t) = &plant {
        std::fs::write(out.join("strings.csv"), strings_csv(&trace, t))?;
        let target = morph_target(cfg, &t.model().topology)?;
        std::fs::write(out.join("nodes.csv"), nodes_csv(&t.model().topology, &target.nodes, t.node_history().last()))?;
    }
    write_toml(&out.join("summary.toml"), &summary)?;
    write_toml(&out.join("manifest.toml"), &Manifest::new(cfg, cfg_text, "track", &plant, &markov, source))?;
    std::fs::write(out.join("plot.gp"), plot_script(plant.topology().is_some()))?;
    Ok(TrackOutcome { summary, trace })
}

/// Per-step error norm, then per free node `|(e_x, e_z)|` for the airfoil or
/// per output `|e_i|` otherwise.
fn errors_csv(trace: &ClosedLoopTrace, topology: Option<&TensegrityTopology>) -> String {
    let mut s = String::from("k,norm");
    match topology {
        Some(t) => t.free_nodes().iter().for_each(|n| {
            let _ = write!(s, ",node{n}");
        }),
        None => (0..trace.error[0].len()).for_each(|i| {
            let _ = write!(s, ",e{i}");
        }),
    }
    s.push('\n');
    for (k, e) in trace.error.iter().enumerate() {
        let _ = write!(s, "{k},{:?}", e.norm());
        if topology.is_some() {
            for pair in e.as_slice().chunks(2) {
                let _ = write!(s, ",{:?}", pair[0].hypot(pair[1]));
            }
        } else {
            for x in e.iter() {
                let _ = write!(s, ",{:?}", x.abs());
            }
        }
        s.push('\n');
    }
    s
}

/// Rest-length command and resulting length change of every string.
fn strings_csv(trace: &ClosedLoopTrace, plant: &TensegrityPlant) -> String {
    let model = plant.model();
    let strings = &model.topology.strings;
    let mut s = String::from("k");
    for (j, (a, b)) in strings.iter().enumerate() {
        let _ = write!(s, ",u{j}_{a}_{b}");
    }
    for (j, _) in strings.iter().enumerate() {
        let _ = write!(s, ",dl{j}");
    }
    s.push('\n');
    for (k, u) in trace.u.iter().enumerate() {
        let _ = write!(s, "{k}");
        for x in u.iter() {
            let _ = write!(s, ",{x:?}");
        }
        if let Some(dl) = plant.string_history().get(k) {
            for x in dl.iter() {
                let _ = write!(s, ",{x:?}");
            }
        }
        s.push('\n');
    }
    s
}

fn nodes_csv(topology: &TensegrityTopology, target: &Matrix3xX<f64>, last: Option<&Matrix3xX<f64>>) -> String {
    let mut s = String::from("node,fixed,x0,z0,x_target,z_target,x_final,z_final\n");
    for i in 0..topology.node_count() {
        let fin = last.map_or([f64::NAN; 2], |n| [n[(0, i)], n[(2, i)]]);
        let _ = writeln!(
            s,
            "{i},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            topology.fixed.contains(&i) as u8,
            topology.nodes[(0, i)],
            topology.nodes[(2, i)],
            target[(0, i)],
            target[(2, i)],
            fin[0],
            fin[1]
        );
    }
    s
}

fn plot_script(airfoil: bool) -> String {
    let mut s = String::from(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set terminal pngcairo size 900,600\n\
         set output 'errors.png'\n\
         set xlabel 'k'\n\
         set ylabel '|e_k|'\n\
         plot 'errors.csv' using 1:2 with lines lw 2\n",
    );
    if airfoil {
        s.push_str(
            "set output 'shape.png'\n\
             set size ratio -1\n\
             set xlabel 'x'\n\
             set ylabel 'z'\n\
             plot 'nodes.csv' using 3:4 with points pt 7 title 'initial', \\\n\
             \x20    '' using 5:6 with points pt 6 title 'target', \\\n\
             \x20    '' using 7:8 with points pt 2 title 'final'\n",
        );
    }
    s
}
