use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("complexity q = {0} is too small; the member tables need q >= 2")]
    Complexity(usize),

    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid airfoil specification: {0}")]
    Airfoil(String),

    #[error("error bound {delta} too coarse: only {segments} segment(s)")]
    TooCoarse { delta: f64, segments: usize },

    #[error("invalid material or model parameter: {0}")]
    Parameter(String),

    #[error("member {member} has zero length")]
    ZeroLength { member: usize },

    #[error("prestress solve did not reach equilibrium (residual {residual:.3e})")]
    Prestress { residual: f64 },

    #[error("dynamics diverged at t = {time:.4} s (node norm {norm:.3e} m)")]
    Unstable { time: f64, norm: f64 },

    #[error(transparent)]
    Core(#[from] datatrack::Error),
}

impl From<Error> for datatrack::Error {
    fn from(e: Error) -> Self {
        match e {
            Error::Core(inner) => inner,
            other => datatrack::Error::Plant(other.to_string()),
        }
    }
}
