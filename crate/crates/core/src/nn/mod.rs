//! A small tape-based reverse-mode autodiff engine with the layers, losses,
//! optimizer and checkpoint format the models need.
//!
//! Every graph value is a row-major matrix; vectors are `1 x n` and scalars
//! `1 x 1`. Parameters live in a [`ParamStore`] and are borrowed by a
//! [`Graph`] for one forward/backward pass; gradients come back as a
//! [`Gradients`] value that the store accumulates.

mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
pub mod layers;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, grad_check_f32, random_projection_loss, GradFn};
pub use graph::{Gradients, Graph, Var};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::{Init, ParamId, ParamStore, Scalar, Tensor};
