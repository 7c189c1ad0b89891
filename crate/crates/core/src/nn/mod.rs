//! Small fully connected networks with reverse-mode gradients, ADAM and
//! polyak averaging, in 64-bit floats.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::Adam;
pub use mlp::{polyak_update, Mlp, MlpGrads, Tape};
