//! Dense numeric engine: matrices, feed-forward nets with reverse-mode
//! gradients, first-order optimizers and symmetric eigendecomposition.

mod eig;
mod matrix;
mod net;
mod optim;

pub use eig::{symmetric_eig, SYMMETRY_TOLERANCE};
pub use matrix::Matrix;
pub use net::{Activation, DenseLayer, DenseNet, ForwardTrace, GradientTape};
pub use optim::{Optimizer, OptimizerKind};
