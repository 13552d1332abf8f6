//! Layers, their kernels, and model composition.

mod layer;
mod model;
pub mod ops;

pub use layer::{init_params, LayerSpec, LayerState, Padding};
pub use model::{
    ForwardCache, Gradients, LayerCache, Model, ModelSpec, Phase, Summary, SummaryRow,
};
