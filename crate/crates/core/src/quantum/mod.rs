//! Exact dense Lindblad dynamics for small Hilbert spaces.
//!
//! This is the propagation engine of the refrigerator environment and the
//! reference against which the closed-form two-level and oscillator
//! environments are checked.

mod density;
mod lindblad;
mod model;
pub mod operator;

pub use density::{DensityMatrix, HERMITICITY_TOL, POSITIVITY_TOL, TRACE_TOL};
pub use lindblad::{
    generator_norm, gibbs_state, propagate_constant, propagate_with, sudden_jump, HeatFlows, Liouvillian,
    Propagation, DEFAULT_MAX_SUBSTEP, TRACE_DRIFT_LIMIT,
};
pub use model::{
    bose, build_channels, build_hamiltonian, fermi, BathChoice, BathCoupling, BathSpec, BathTag, Baths,
    LindbladChannel, Model, OscillatorModel, OscillatorOperators, QubitEigenbasis,
};
pub use operator::{CMatrix, C64};
