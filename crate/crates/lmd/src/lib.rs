//! Toolkit for spectral analysis of small feedforward networks.
//!
//! - [`linalg`]: dense SVD, truncated SVD, symmetric eigendecomposition,
//!   pseudo-inverse.
//! - [`graph`]: Gaussian-kernel and kNN graphs over datasets, graph
//!   Laplacians and spectral embeddings.
//! - [`factor`]: five-factor layer decompositions (trivial and
//!   graph-Laplacian metric transforms) and per-layer reports.
//! - [`mlp`]: deterministic SGD training of small MLPs with convergence
//!   certificates and encoding checks.
//! - [`uhn`]: single-shot associative memory (similarity / separation /
//!   projection) and capacity sweeps.
//! - [`io`]: bit-exact JSON/CSV persistence for models, datasets and
//!   reports.
//!
//! The `parallel` feature (on by default) runs the data-parallel inner
//! loops on rayon; output is bit-identical with the sequential fallback.

// index-based loops over matrix coordinates read better than iterator
// chains in the numerical kernels
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod factor;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod mlp;
pub mod uhn;

pub use error::{Error, Result};
