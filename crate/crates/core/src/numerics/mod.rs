//! Dense row-major tensors, layer primitives with hand-derived backward
//! passes, AdamW and a central-difference gradient oracle.

mod gradcheck;
mod layers;
mod ops;
mod optim;
mod param;
mod real;
pub mod rng;
mod tensor;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use layers::{Conv1d, GroupNorm, Linear, SeqCache, SeqLayer, Sequential};
pub use ops::*;
pub use optim::{adamw_step, AdamW, AdamWConfig, AdamWState};
pub use param::{Module, Param, Trainable};
pub use real::Real;
pub use tensor::Tensor;
