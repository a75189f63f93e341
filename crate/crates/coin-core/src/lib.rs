//! Convection-diffusion networks at desk scale.
//!
//! A residual classifier produces class probabilities `u0`; graph-Laplacian
//! diffusion layers `u <- u - sigma^2 * L u` smooth those probabilities over a
//! weighted graph before the loss is taken. The same convection-diffusion
//! structure is checked numerically on a 1D periodic grid in [`pdelab`]:
//! operator splitting, Feynman-Kac Monte Carlo, and the scale-space style
//! axioms (comparison, Markov, linearity, regularity) that a monotone scheme
//! satisfies.
//!
//! Modules:
//! - [`tensor`]: dense row-major `f64` matrices and parameter/gradient pairs
//! - [`graph`]: compressed-row sparse graphs, GCN normalization, Laplacian
//!   application, Gaussian k-NN graph construction
//! - [`nn`]: layers, losses, dropout, Adam/SGD, reverse-mode gradients
//! - [`data`]: citation-network ingestion (content/cites and the Pubmed tab
//!   variant), CSV tables, binary bundle caches
//! - [`coin`]: the model, training loop with early stopping, the random
//!   split protocol, and parameter sweeps
//! - [`pdelab`]: the 1D convection-diffusion bench

pub mod coin;
pub mod data;
pub mod graph;
pub mod nn;
pub mod pdelab;
pub mod rng;
pub mod tensor;

pub use coin::{CoinConfig, CoinModel, Split, TrainReport};
pub use data::DatasetBundle;
pub use graph::SparseGraph;
pub use tensor::{Param, Tensor};
