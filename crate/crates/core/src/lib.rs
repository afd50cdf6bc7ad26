//! Prototype maps for rare, costly random fields.
//!
//! Lloyd quantization driven by an importance-sampled input law, with an
//! FPCA + Gaussian-process surrogate standing in for the simulator.

mod error;

pub mod campbell;
pub mod fpca;
pub mod gp;
pub mod maps;
pub mod metamodel;
pub mod metrics;
mod optim;
pub mod parallel;
pub mod quantizer;
pub mod sampling;

pub use error::{Error, Result};
pub use maps::{
    empirical_quantization_error, nearest_prototype, weighted_inner_product, GridMap,
    InnerProductWeights, MapSet, PrototypeSet, VoronoiAssignment,
};
