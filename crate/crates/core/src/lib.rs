//! Finite-horizon reference tracking driven only by a plant's Markov
//! parameters (impulse-response blocks).
//!
//! The pipeline is: identify `H_i`, `M_i` from a [`markov::BlackBox`],
//! synthesize tracking gains ([`tracking`]) and the output-space estimator
//! ([`estimator`]), then run [`closed_loop::run_closed_loop`]. The
//! [`oracle`] module recomputes the same quantities from a state-space model
//! for verification.

pub mod closed_loop;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod lti;
pub mod markov;
pub mod oracle;
pub mod par;
pub mod tracking;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
