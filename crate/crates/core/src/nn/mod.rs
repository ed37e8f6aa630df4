//! A small reverse-mode differentiation engine over dense `f64` matrices,
//! plus the layer building blocks used by the completion network.

mod graph;
mod layers;
mod params;

pub use graph::{Graph, Var};
pub use layers::{AttentionBlock, Linear, Mlp};
pub use params::{Gradients, ParamId, ParamStore};

pub type Mat = ndarray::Array2<f64>;
