//! Small reverse-mode autodiff engine for channel-first 2D/3D grids.
//!
//! Only what the smoke-correction networks need: same-padded convolutions,
//! pooling, nearest up-sampling, multilinear backward warping, finite
//! differences and axis projection, plus Adam and a flat checkpoint format.

pub mod graph;
pub mod kernels;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::Adam;
pub use params::{Bound, CheckpointError, ParamSet};
pub use scalar::{lit, Scalar};
pub use tensor::Tensor;
