//! Minimal differentiable-computation substrate: dense tensors, a
//! reverse-mode tape, an AdamW optimizer, a finite-difference gradient
//! checker, and the checkpoint file format. Everything is generic over
//! the scalar type: training runs in f32, gradient checking re-executes
//! the same graph in f64.

mod adamw;
mod checkpoint;
mod gradcheck;
mod init;
mod params;
mod tape;
mod tensor;

pub use adamw::{adamw_step, AdamwHyper, OptimState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use init::Initializer;
pub use params::{Gradients, ModelParams};
pub use tape::{Bindings, GraphError, Tape, Var};
pub use tensor::Tensor;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the numeric stack is generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + std::iter::Sum
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn fr(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
