//! Identification of directed-edge coefficients in linear structural equation
//! models with latent confounding, by iterating the half-trek criterion from
//! a seed of already-known coefficients.
//!
//! The graph and closure layers are purely combinatorial. The numerical
//! oracle is generic over the scalar; estimation works in `f64`.

pub mod closure;
pub mod estimate;
pub mod experiments;
pub mod fixtures;
pub mod graph;
pub mod htc;
pub mod oracle;
pub mod seeds;

pub use closure::{iic_close, ClosureRequest, ClosureResult};
pub use graph::{Edge, EdgeStatus, MixedGraph, NodeId};
pub use seeds::{IvTriple, SeedSet, SeedSpec};

pub type Params = oracle::ParamRealization<f64>;
pub type Params32 = oracle::ParamRealization<f32>;
