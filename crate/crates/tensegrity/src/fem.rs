//! Finite-element tensegrity model: consistent mass, force-density
//! stiffness, gravity, prestress and Rayleigh damping.
//!
//! Full vectors stack node coordinates node-major, `[x_1 y_1 z_1 x_2 ...]`.
//! Dynamics run on the planar free coordinates `(x, z)` of the free nodes.

use datatrack::{Mat, Vector};
use nalgebra::Matrix3xX;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Member, TensegrityTopology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberMaterial {
    /// Young's modulus, Pa.
    pub youngs: f64,
    /// Cross-section area, m².
    pub area: f64,
    /// Density, kg/m³.
    pub density: f64,
}

impl MemberMaterial {
    fn validate(&self, what: &str) -> Result<()> {
        for (name, v) in [("youngs", self.youngs), ("area", self.area), ("density", self.density)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{what}.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Member properties, prestress floor, gravity and damping.
///
/// The defaults are soft polymer-like members chosen so that the explicit
/// integrator stays affordable; they are not taken from any published
/// airfoil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Materials {
    pub bar: MemberMaterial,
    pub string: MemberMaterial,
    /// Lower bound on string force density in the prestress solve, N/m.
    pub min_string_force_density: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Mass-proportional damping, 1/s.
    pub alpha: f64,
    /// Stiffness-proportional damping, s.
    pub beta: f64,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            bar: MemberMaterial {
                youngs: 5e7,
                area: 1e-4,
                density: 1200.0,
            },
            string: MemberMaterial {
                youngs: 5e7,
                area: 3e-6,
                density: 1000.0,
            },
            min_string_force_density: 50.0,
            gravity: 9.81,
            alpha: 0.1,
            beta: 1e-4,
        }
    }
}

impl Materials {
    pub fn validate(&self) -> Result<()> {
        self.bar.validate("bar")?;
        self.string.validate("string")?;
        if !(self.min_string_force_density > 0.0) {
            return Err(Error::Parameter("min_string_force_density must be positive".into()));
        }
        for (name, v) in [("gravity", self.gravity), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FemModel {
    pub topology: TensegrityTopology,
    pub materials: Materials,
    /// Bars first, then strings.
    pub members: Vec<Member>,
    pub bar_count: usize,
    /// Axial stiffness `E A` per member.
    pub ea: Vec<f64>,
    /// Member masses, kg.
    pub mass: Vec<f64>,
    /// Rest lengths that realize the prestress at the initial configuration.
    pub rest_length: Vec<f64>,
    /// Prestress force densities at the initial configuration, N/m.
    pub prestress: Vec<f64>,
    /// Full mass matrix, `3 n_n` square.
    pub mass_matrix: Mat,
    /// Full gravity vector (z components only).
    pub gravity: Vector,
    /// Indices of the free planar coordinates inside a full vector.
    pub free_dofs: Vec<usize>,
    pub mass_free: Mat,
    pub mass_free_inv: Mat,
    /// Tangent stiffness at rest on the free coordinates.
    pub stiffness_free: Mat,
    pub damping_free: Mat,
}

/// `(1/6)(|C|ᵀ m̂ |C| + diag(|C|ᵀ m̂ |C|)) ⊗ I_3`.
pub fn consistent_mass(members: &[Member], mass: &[f64], nodes: usize) -> Mat {
    let mut node_mass = Mat::zeros(nodes, nodes);
    for (&(a, b), &m) in members.iter().zip(mass) {
        node_mass[(a, a)] += m;
        node_mass[(b, b)] += m;
        node_mass[(a, b)] += m;
        node_mass[(b, a)] += m;
    }
    let diag = Mat::from_diagonal(&node_mass.diagonal());
    let node_mass = (node_mass + diag) / 6.0;
    node_mass.kronecker(&Mat::identity(3, 3))
}

/// `(g/2)(|C|ᵀ m) ⊗ [0 0 1]ᵀ`.
pub fn gravity_vector(members: &[Member], mass: &[f64], nodes: usize, g: f64) -> Vector {
    let mut out = Vector::zeros(3 * nodes);
    for (&(a, b), &m) in members.iter().zip(mass) {
        out[3 * a + 2] += 0.5 * g * m;
        out[3 * b + 2] += 0.5 * g * m;
    }
    out
}

/// `(Cᵀ x̂ C) ⊗ I_3` for the given force densities.
pub fn stiffness_matrix(members: &[Member], force_density: &[f64], nodes: usize) -> Mat {
    let mut k = Mat::zeros(nodes, nodes);
    for (&(a, b), &x) in members.iter().zip(force_density) {
        k[(a, a)] += x;
        k[(b, b)] += x;
        k[(a, b)] -= x;
        k[(b, a)] -= x;
    }
    k.kronecker(&Mat::identity(3, 3))
}

fn member_vector(nodes: &Matrix3xX<f64>, (a, b): Member) -> nalgebra::Vector3<f64> {
    nodes.column(b) - nodes.column(a)
}

impl FemModel {
    pub fn assemble(topology: TensegrityTopology, materials: Materials) -> Result<Self> {
        materials.validate()?;
        let members = topology.members();
        let bar_count = topology.bars.len();
        let nn = topology.node_count();
        let lengths: Vec<f64> = members.iter().map(|&m| topology.member_length(m)).collect();
        if let Some(j) = lengths.iter().position(|&l| !(l > 0.0)) {
            return Err(Error::ZeroLength { member: j });
        }
        let mat = |j: usize| if j < bar_count { &materials.bar } else { &materials.string };
        let ea: Vec<f64> = (0..members.len()).map(|j| mat(j).youngs * mat(j).area).collect();
        let mass: Vec<f64> = (0..members.len())
            .map(|j| mat(j).density * mat(j).area * lengths[j])
            .collect();

        let mass_matrix = consistent_mass(&members, &mass, nn);
        let gravity = gravity_vector(&members, &mass, nn, materials.gravity);
        let free_dofs: Vec<usize> = topology
            .free_nodes()
            .iter()
            .flat_map(|&i| [3 * i, 3 * i + 2])
            .collect();

        let prestress = solve_prestress(&topology, &members, bar_count, &gravity, &free_dofs, materials.min_string_force_density)?;
        let rest_length: Vec<f64> = (0..members.len())
            .map(|j| {
                let denom = ea[j] + prestress[j] * lengths[j];
                if denom <= 0.0 {
                    Err(Error::Parameter(format!(
                        "member {j} would need a non-positive rest length for force density {}",
                        prestress[j]
                    )))
                } else {
                    Ok(ea[j] * lengths[j] / denom)
                }
            })
            .collect::<Result<_>>()?;

        let mass_free = select(&mass_matrix, &free_dofs);
        let mass_free_inv = mass_free
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Parameter("reduced mass matrix is not positive definite".into()))?
            .inverse();

        let mut model = Self {
            topology,
            materials,
            members,
            bar_count,
            ea,
            mass,
            rest_length,
            prestress,
            mass_matrix,
            gravity,
            free_dofs,
            mass_free,
            mass_free_inv,
            stiffness_free: Mat::zeros(0, 0),
            damping_free: Mat::zeros(0, 0),
        };
        let kt = model.tangent_stiffness(&model.topology.nodes.clone(), &model.rest_length.clone());
        model.stiffness_free = select(&kt, &model.free_dofs);
        model.damping_free = &model.mass_free * materials.alpha + &model.stiffness_free * materials.beta;
        Ok(model)
    }

    pub fn string_count(&self) -> usize {
        self.members.len() - self.bar_count
    }

    pub fn free_dof_count(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `x_j = E_j A_j (l_j - l0_j) / (l0_j l_j)`, zero for slack strings.
    pub fn force_densities(&self, nodes: &Matrix3xX<f64>, rest: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                let l = member_vector(nodes, m).norm();
                let x = self.ea[j] * (l - rest[j]) / (rest[j] * l);
                if j >= self.bar_count && x < 0.0 {
                    0.0
                } else {
                    x
                }
            })
            .collect()
    }

    /// `-K n - g` on the full coordinate vector.
    pub fn net_force(&self, nodes: &Matrix3xX<f64>, rest: &[f64]) -> Vector {
        let x = self.force_densities(nodes, rest);
        let mut f = -&self.gravity;
        for (j, &m) in self.members.iter().enumerate() {
            let d = member_vector(nodes, m) * x[j];
            for c in 0..3 {
                f[3 * m.0 + c] += d[c];
                f[3 * m.1 + c] -= d[c];
            }
        }
        f
    }

    /// Elastic energy of the taut members plus gravity potential `gᵀ n`.
    pub fn potential_energy(&self, nodes: &Matrix3xX<f64>, rest: &[f64]) -> f64 {
        let elastic: f64 = self
            .members
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                let stretch = member_vector(nodes, m).norm() - rest[j];
                if j >= self.bar_count && stretch < 0.0 {
                    0.0
                } else {
                    0.5 * self.ea[j] * stretch * stretch / rest[j]
                }
            })
            .sum();
        elastic + self.gravity.dot(&Vector::from_column_slice(nodes.as_slice()))
    }

    /// Net force restricted to the free planar coordinates.
    pub fn free_force(&self, nodes: &Matrix3xX<f64>, rest: &[f64]) -> Vector {
        let f = self.net_force(nodes, rest);
        Vector::from_iterator(self.free_dofs.len(), self.free_dofs.iter().map(|&i| f[i]))
    }

    /// Tangent stiffness `∂(K n)/∂n`: per member `x I + (EA / l³) d dᵀ`.
    pub fn tangent_stiffness(&self, nodes: &Matrix3xX<f64>, rest: &[f64]) -> Mat {
        let nn = self.topology.node_count();
        let x = self.force_densities(nodes, rest);
        let mut k = Mat::zeros(3 * nn, 3 * nn);
        for (j, &m) in self.members.iter().enumerate() {
            let d = member_vector(nodes, m);
            let l = d.norm();
            let slack = j >= self.bar_count && x[j] == 0.0;
            let axial = if slack { 0.0 } else { self.ea[j] / (l * l * l) };
            let block = nalgebra::Matrix3::identity() * x[j] + d * d.transpose() * axial;
            for (r, sr) in [(m.0, 1.0), (m.1, -1.0)] {
                for (c, sc) in [(m.0, 1.0), (m.1, -1.0)] {
                    let mut v = k.view_mut((3 * r, 3 * c), (3, 3));
                    v += block * (sr * sc);
                }
            }
        }
        k
    }

    /// `∂f/∂l0` for the strings on the free coordinates (one column per string).
    pub fn rest_length_sensitivity(&self) -> Mat {
        let nodes = &self.topology.nodes;
        let nn = self.topology.node_count();
        let ns = self.string_count();
        let mut full = Mat::zeros(3 * nn, ns);
        for s in 0..ns {
            let j = self.bar_count + s;
            let m = self.members[j];
            let d = member_vector(nodes, m) * (self.ea[j] / (self.rest_length[j] * self.rest_length[j]));
            for c in 0..3 {
                full[(3 * m.0 + c, s)] -= d[c];
                full[(3 * m.1 + c, s)] += d[c];
            }
        }
        Mat::from_fn(self.free_dofs.len(), ns, |r, c| full[(self.free_dofs[r], c)])
    }

    /// Largest free-coordinate force imbalance at rest relative to the
    /// largest member force.
    pub fn equilibrium_residual(&self) -> f64 {
        let f = self.free_force(&self.topology.nodes, &self.rest_length);
        let max_force = self
            .members
            .iter()
            .zip(&self.prestress)
            .map(|(&m, x)| (x * self.topology.member_length(m)).abs())
            .fold(0.0, f64::max);
        f.amax() / max_force
    }
}

fn select(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Minimum-norm force densities with `A x = -g` on the free coordinates and
/// `x ≥ floor` on every string, by Dykstra's alternating projections.
fn solve_prestress(
    topology: &TensegrityTopology,
    members: &[Member],
    bar_count: usize,
    gravity: &Vector,
    free_dofs: &[usize],
    floor: f64,
) -> Result<Vec<f64>> {
    let nm = members.len();
    let mut a_full = Mat::zeros(3 * topology.node_count(), nm);
    for (j, &m) in members.iter().enumerate() {
        let d = member_vector(&topology.nodes, m);
        for c in 0..3 {
            a_full[(3 * m.0 + c, j)] -= d[c];
            a_full[(3 * m.1 + c, j)] += d[c];
        }
    }
    let a = Mat::from_fn(free_dofs.len(), nm, |r, c| a_full[(free_dofs[r], c)]);
    let rhs = Vector::from_iterator(free_dofs.len(), free_dofs.iter().map(|&i| -gravity[i]));
    let pinv = a
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Parameter(format!("equilibrium matrix pseudo-inverse failed: {e}")))?;
    let affine = |x: &Vector| x - &pinv * (&a * x - &rhs);
    let boxed = |x: &Vector| {
        let mut y = x.clone();
        for v in y.rows_mut(bar_count, nm - bar_count).iter_mut() {
            *v = v.max(floor);
        }
        y
    };

    let mut x = Vector::zeros(nm);
    let mut p = Vector::zeros(nm);
    let mut q = Vector::zeros(nm);
    for _ in 0..4_000_000 {
        let y = affine(&(&x + &p));
        p = &x + &p - &y;
        let next = boxed(&(&y + &q));
        q = &y + &q - &next;
        let change = (&next - &x).norm();
        x = next;
        if change < 1e-13 * x.norm().max(1.0) {
            break;
        }
    }
    let x = affine(&x);
    let residual = (&a * &x - &rhs).amax();
    let scale = x.amax().max(1.0);
    let min_string = x.rows(bar_count, nm - bar_count).min();
    if residual > 1e-9 * scale || min_string < 0.99 * floor {
        return Err(Error::Prestress { residual: residual.max(floor - min_string) });
    }
    Ok(x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rod_mass() {
        let m = consistent_mass(&[(0, 1)], &[6.0], 2);
        let expected = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]).kronecker(&Mat::identity(3, 3));
        assert!((m - expected).amax() < 1e-15);
    }

    #[test]
    fn gravity_sums_to_weight() {
        let g = gravity_vector(&[(0, 1), (1, 2)], &[1.0, 2.0], 3, 9.81);
        let z: f64 = (0..3).map(|i| g[3 * i + 2]).sum();
        assert!((z - 9.81 * 3.0).abs() < 1e-12);
        assert_eq!(g[0], 0.0);
    }
}
