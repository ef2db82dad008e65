//! The nonlinear tensegrity dynamics exposed as a sampled black box.
//!
//! Inputs are string rest-length increments (m), outputs are free-node
//! `(x, z)` displacements from rest (m). Each sample integrates
//! `M n̈ + D ṅ + K(n) n = -g` with fixed-step RK4 substeps.

use datatrack::markov::BlackBox;
use datatrack::{Mat, Vector};
use nalgebra::Matrix3xX;

use crate::error::{Error, Result};
use crate::fem::FemModel;

/// Free-coordinate state: displacement and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub displacement: Vector,
    pub velocity: Vector,
}

#[derive(Debug, Clone)]
pub struct TensegrityPlant {
    model: FemModel,
    sample_time: f64,
    substeps: usize,
    state: PlantState,
    rest: Vec<f64>,
    time: f64,
    record: bool,
    node_history: Vec<Matrix3xX<f64>>,
    string_history: Vec<Vector>,
}

/// Upper bound on the RK4 substep.
pub const MAX_SUBSTEP: f64 = 1e-4;
/// Target `|λ|·dt` for the fastest linearized mode; RK4 is stable to about 2.8.
const STABILITY_FRACTION: f64 = 2.5;

impl TensegrityPlant {
    pub fn new(model: FemModel, sample_time: f64) -> Result<Self> {
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(Error::Parameter(format!("sample time must be positive, got {sample_time}")));
        }
        let lambda = fastest_mode(&model);
        let dt = MAX_SUBSTEP.min(STABILITY_FRACTION / lambda);
        let substeps = (sample_time / dt).ceil().max(1.0) as usize;
        let nd = model.free_dof_count();
        let rest = model.rest_length.clone();
        Ok(Self {
            model,
            sample_time,
            substeps,
            state: PlantState {
                displacement: Vector::zeros(nd),
                velocity: Vector::zeros(nd),
            },
            rest,
            time: 0.0,
            record: false,
            node_history: Vec::new(),
            string_history: Vec::new(),
        })
    }

    pub fn model(&self) -> &FemModel {
        &self.model
    }
    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }
    pub fn substeps(&self) -> usize {
        self.substeps
    }
    pub fn state(&self) -> &PlantState {
        &self.state
    }
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Keeps node positions and string length changes at every sample.
    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
    }

    pub fn node_history(&self) -> &[Matrix3xX<f64>] {
        &self.node_history
    }

    /// Current minus initial length of each string, per sample.
    pub fn string_history(&self) -> &[Vector] {
        &self.string_history
    }

    pub fn nodes(&self) -> Matrix3xX<f64> {
        self.nodes_at(&self.state.displacement)
    }

    fn nodes_at(&self, q: &Vector) -> Matrix3xX<f64> {
        let mut nodes = self.model.topology.nodes.clone();
        for (k, &dof) in self.model.free_dofs.iter().enumerate() {
            nodes[(dof % 3, dof / 3)] += q[k];
        }
        nodes
    }

    fn string_lengths(&self, nodes: &Matrix3xX<f64>) -> Vector {
        let m = &self.model;
        Vector::from_iterator(
            m.string_count(),
            m.members[m.bar_count..]
                .iter()
                .map(|&(a, b)| (nodes.column(b) - nodes.column(a)).norm()),
        )
    }

    fn derivative(&self, q: &Vector, v: &Vector) -> (Vector, Vector) {
        let nodes = self.nodes_at(q);
        let f = self.model.free_force(&nodes, &self.rest) - &self.model.damping_free * v;
        (v.clone(), &self.model.mass_free_inv * f)
    }

    fn integrate(&mut self) -> Result<()> {
        let h = self.sample_time / self.substeps as f64;
        let limit = 10.0 * self.model.topology.nodes.column(self.model.topology.trailing_edge()).norm().max(1.0);
        for _ in 0..self.substeps {
            let (q, v) = (&self.state.displacement, &self.state.velocity);
            let (k1q, k1v) = self.derivative(q, v);
            let (k2q, k2v) = self.derivative(&(q + &k1q * (0.5 * h)), &(v + &k1v * (0.5 * h)));
            let (k3q, k3v) = self.derivative(&(q + &k2q * (0.5 * h)), &(v + &k2v * (0.5 * h)));
            let (k4q, k4v) = self.derivative(&(q + &k3q * h), &(v + &k3v * h));
            let dq = (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
            let dv = (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
            self.state.displacement += dq;
            self.state.velocity += dv;
            self.time += h;
            let norm = self.nodes().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if !norm.is_finite() || norm > limit {
                return Err(Error::Unstable { time: self.time, norm });
            }
        }
        Ok(())
    }

    /// Sets string rest lengths to rest + `u`.
    fn apply_input(&mut self, u: &Vector) -> Result<()> {
        let m = &self.model;
        if u.len() != m.string_count() {
            return Err(Error::Dimension {
                what: "string rest-length increments".into(),
                expected: m.string_count(),
                found: u.len(),
            });
        }
        for (s, du) in u.iter().enumerate() {
            let j = m.bar_count + s;
            let l0 = m.rest_length[j] + du;
            if !(l0 > 0.0) {
                return Err(Error::Parameter(format!("string {s} rest length would be {l0}")));
            }
            self.rest[j] = l0;
        }
        Ok(())
    }

    fn advance(&mut self, u: &Vector) -> Result<Vector> {
        let y = self.state.displacement.clone();
        if self.record {
            let nodes = self.nodes();
            let initial = self.string_lengths(&self.model.topology.nodes);
            self.string_history.push(self.string_lengths(&nodes) - initial);
            self.node_history.push(nodes);
        }
        self.apply_input(u)?;
        self.integrate()?;
        Ok(y)
    }

    /// Kinetic plus potential energy under the current rest lengths.
    pub fn mechanical_energy(&self) -> f64 {
        let v = &self.state.velocity;
        0.5 * v.dot(&(&self.model.mass_free * v)) + self.model.potential_energy(&self.nodes(), &self.rest)
    }

    /// Linearization about rest on the free coordinates: `(M, D, K_t, ∂f/∂l0)`.
    pub fn linearization(&self) -> (Mat, Mat, Mat, Mat) {
        let m = &self.model;
        (
            m.mass_free.clone(),
            m.damping_free.clone(),
            m.stiffness_free.clone(),
            m.rest_length_sensitivity(),
        )
    }
}

/// Largest eigenvalue magnitude of the first-order linearized system.
fn fastest_mode(model: &FemModel) -> f64 {
    let nd = model.free_dof_count();
    let mut a = Mat::zeros(2 * nd, 2 * nd);
    a.view_mut((0, nd), (nd, nd)).fill_with_identity();
    a.view_mut((nd, 0), (nd, nd))
        .copy_from(&(-&model.mass_free_inv * &model.stiffness_free));
    a.view_mut((nd, nd), (nd, nd))
        .copy_from(&(-&model.mass_free_inv * &model.damping_free));
    datatrack::linalg::spectral_radius(&a)
}

impl BlackBox for TensegrityPlant {
    fn input_dim(&self) -> usize {
        self.model.string_count()
    }

    fn output_dim(&self) -> usize {
        self.model.free_dof_count()
    }

    fn step(&mut self, u: &Vector) -> datatrack::Result<Vector> {
        Ok(self.advance(u)?)
    }

    fn reset(&mut self) -> datatrack::Result<()> {
        self.state.displacement.fill(0.0);
        self.state.velocity.fill(0.0);
        self.rest.clone_from(&self.model.rest_length);
        self.time = 0.0;
        self.node_history.clear();
        self.string_history.clear();
        Ok(())
    }

    fn label(&self) -> String {
        format!(
            "tensegrity(q={}, strings={}, free_dofs={})",
            self.model.topology.q,
            self.model.string_count(),
            self.model.free_dof_count()
        )
    }
}
