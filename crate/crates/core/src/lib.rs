//! Dual-scale validation of pointwise model predictions for a continuous,
//! subjective attribute against human pointwise and pairwise annotations.

pub mod artifacts;
pub mod btrank;
pub mod comparisons;
pub mod config;
pub mod corpus;
pub mod error;
pub mod pairs;
pub mod pipeline;
pub mod pointwise;
pub mod rank_eval;
pub mod reliability;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
