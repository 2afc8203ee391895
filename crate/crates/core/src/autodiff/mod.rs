//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation eagerly; [`Tape::backward`] replays
//! the records in reverse insertion order (which is a reverse topological
//! order by construction) and accumulates gradients by addition.
//! Non-finite values are rejected at the operation that produced them
//! rather than silently propagated.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

#[cfg(test)]
mod tests;

pub use adam::AdamState;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use tape::{DiffProbe, Gradients, Tape, TapeError, Var};
pub use tensor::{Tensor, TensorError};
