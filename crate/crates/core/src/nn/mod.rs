//! A small reverse-mode automatic differentiation engine.
//!
//! Only the operations the aligner needs are provided: dense layers,
//! 1-D/2-D convolutions, pooling, transposed convolution, reflection
//! padding, GRUs and a row-wise softmax cross-entropy. Everything runs on
//! `f64` so finite-difference checks are meaningful.

mod conv;
mod gemm;
mod graph;
mod gru;
mod optim;
mod params;
mod tensor;

pub use conv::reflect_index;
pub use graph::{cross_correlate_raw, Gradients, Graph, Var};
pub use optim::{AdamW, AdamWConfig};
pub use params::{glorot_bound, he_bound, uniform, ParamId, ParamSet};
pub use tensor::Tensor;
