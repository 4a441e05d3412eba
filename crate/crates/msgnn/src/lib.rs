//! A learned-simulation engine that forecasts unsteady continuum fields on
//! unstructured node sets with a multi-scale graph neural network.
//!
//! The crate covers the full pipeline:
//!
//! - [`geometry`]: node sets, periodic coordinate embedding, k-NN edges and
//!   quasi-uniform node sampling;
//! - [`graphs`]: the multi-level graph hierarchy with grid coarsening and
//!   inter-scale edge sets;
//! - [`neural`]: a reverse-mode tape over dense f64 matrices, SELU MLPs,
//!   Adam, gradient clipping and checkpoints;
//! - [`model`]: the V-cycle forward pass (encode, message passing across
//!   scales, decode) and autoregressive rollout;
//! - [`training`]: the composite loss, rollout curriculum, input noise and
//!   learning-rate schedule;
//! - [`datagen`]: advection data generation against exact and
//!   semi-Lagrangian oracles plus the binary dataset container;
//! - [`remesh`]: adaptive node coarsening/refinement with field transfer.

pub mod datagen;
pub mod error;
pub mod geometry;
pub mod graphs;
pub mod model;
pub mod neural;
pub mod remesh;
pub mod training;

pub use error::{Error, Result};
