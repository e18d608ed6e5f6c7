//! Dense networks, optimizers, and the numeric primitives used by the
//! diversity losses.

mod nn;
mod ops;
mod optim;

pub use nn::{Activation, ForwardTrace, Gradients, Mlp};
pub use ops::{clip, fdm_second_derivative, kl_divergence, softmax};
pub use optim::{Optimizer, OptimizerKind};
