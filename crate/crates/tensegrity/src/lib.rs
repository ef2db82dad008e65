//! Planar tensegrity morphing airfoil: topology, NACA-based geometry,
//! nonlinear FEM dynamics and a sampled black-box plant.

pub mod airfoil;
pub mod error;
pub mod fem;
pub mod plant;
pub mod topology;

pub use error::{Error, Result};
pub use fem::{FemModel, Materials, MemberMaterial};
pub use plant::TensegrityPlant;
pub use topology::TensegrityTopology;

/// Builds the airfoil model for `spec` and wraps it as a plant.
pub fn airfoil_plant(
    spec: &airfoil::AirfoilSpec,
    materials: Materials,
    sample_time: f64,
) -> Result<TensegrityPlant> {
    let topology = airfoil::initial_configuration(spec)?;
    let model = FemModel::assemble(topology, materials)?;
    TensegrityPlant::new(model, sample_time)
}
