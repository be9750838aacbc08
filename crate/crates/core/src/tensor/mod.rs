//! Dense f64 tensors with reverse-mode automatic differentiation,
//! the neural layer primitives built on them, the Adam optimizer and
//! the binary parameter checkpoint format.

mod adam;
mod checkpoint;
pub mod rng;
mod tape;

pub use adam::{AdamConfig, ParamStore};
pub use checkpoint::{load_params, save_params};
pub use tape::{positional_encoding, Tape, Tensor, Tid};
