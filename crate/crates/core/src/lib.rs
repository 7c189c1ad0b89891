//! Discovery of maximum-power thermodynamic cycles for driven open quantum
//! systems.
//!
//! A hybrid discrete/continuous soft actor-critic agent ([`sac`]) is trained
//! ([`trainer`]) against small-system Lindblad dynamics ([`quantum`],
//! [`env`]); the cycles it finds are benchmarked against classically
//! optimized square-wave, trapezoidal and Otto cycles ([`baselines`]).

pub mod config;
pub mod baselines;
pub mod env;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod quantum;
pub mod replay;
pub mod sac;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
