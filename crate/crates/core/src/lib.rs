//! Supra-Laplacian spatio-temporal encoding and a fully-connected
//! spatio-temporal transformer for link prediction on discrete-time
//! dynamic graphs.
//!
//! The pipeline for one prediction at time `t + 1`:
//!
//! 1. [`graph`] takes the window of snapshots ending at `t`.
//! 2. [`supra`] turns the window into a connected multi-layer graph: isolated
//!    nodes are removed, one virtual node per layer is wired to every remaining
//!    node, and each node is linked to its own copy in the next layer.
//! 3. [`spectral`] extracts the smallest non-trivial eigenpairs of the
//!    normalized supra-Laplacian and builds per-(node, time) raw encodings.
//! 4. [`model`] turns encodings and learned node embeddings into tokens, runs
//!    one dense encoder layer over all `N * w` tokens, and scores node pairs
//!    with a cross-attention edge module.
//! 5. [`train`] holds the training loop, negative samplers and ranking metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the training pipeline and
//! the eigensolvers are validated against.

pub mod error;
pub mod graph;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod spectral;
pub mod supra;
pub mod train;

pub use error::{Error, Result};
pub use graph::{DynamicGraph, IsolationMask, Snapshot, SplitSpec, Window};
pub use scalar::Scalar;
pub use supra::{SupraConfig, SupraGraph};

pub type Tensor = nn::Tensor<f64>;
pub type Tape = nn::Tape<f64>;
pub type ParameterStore = nn::ParameterStore<f64>;
pub type NormalizedSupraLaplacian = spectral::NormalizedSupraLaplacian<f64>;
pub type SpectralBasis = spectral::SpectralBasis<f64>;
pub type RawEncodingTable = spectral::RawEncodingTable<f64>;
pub type SlateModel = model::SlateModel<f64>;
