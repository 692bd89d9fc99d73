//! Continuous-variable quantum Gibbs samplers on truncated bosonic Fock spaces.
//!
//! The crate builds Lindbladian generators whose fixed point is the Gibbs
//! state of a given Hamiltonian, exactly in the frequency domain, and audits
//! their spectral properties: gaps, perturbation bounds, truncation
//! convergence, mixing times and free-energy estimation.

pub mod error;
pub mod experiment;
pub mod filters;
pub mod fock;
pub mod lindblad;
pub mod linalg;
pub mod models;
pub mod quadrature;
pub mod spectral;
pub mod thermal;

pub use error::{Error, Result};
pub use fock::{FockBasis, LadderKind, Operator, OperatorJson};
pub use num_complex::Complex64 as C64;
