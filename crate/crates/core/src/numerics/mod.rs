//! Dense numerics for the embedding head.
//!
//! The embedding model is a stack of affine layers with rectifier activations
//! between them and a row-wise L2 normalization at the output, so every
//! embedding lies on the unit hypersphere. Gradients are exact analytic
//! derivatives; [`adam`] applies the bias-corrected Adam update and
//! [`persist`] reads and writes the plain-text model format.

pub mod adam;
pub mod model;
pub mod persist;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{
    init_model, Activation, EmbeddingModel, Embeddings, ForwardCache, Layer, ModelGrads,
    NORM_EPSILON,
};
pub use persist::{load_model, save_model};
