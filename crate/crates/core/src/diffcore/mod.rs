//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

pub mod check;
mod optim;
mod params;
mod tape;
mod tensor;

pub use check::{check_gradients, objective, relative_error, GradCheckConfig, ParamCheck};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{Activation, OpKind, Tape, Var, LOG_CLAMP};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
