//! Skeleton-based action recognition toolkit.
//!
//! The crate covers the whole comparison pipeline between raw skeleton
//! sequences and Taylor-transformed ones:
//!
//! - [`data`]: NTU `.skeleton` parsing, the JSON interchange format,
//!   preprocessing, dataset splits and a synthetic motion generator.
//! - [`taylor`]: finite-difference stacks, the Taylor transform and
//!   per-joint motion magnitudes.
//! - [`topology`]: the 25-joint skeletal graph with spatial partitions and
//!   body-part hypergraphs.
//! - [`numerics`]: a small f64 tensor engine with reverse-mode
//!   differentiation and a finite-difference gradient checker.
//! - [`models`]: ST-GCN and a hypergraph-attention transformer.
//! - [`pipeline`]: input variants (original or Taylor) and batching.
//! - [`training`]: momentum SGD with step and milestone schedules.
//! - [`evaluation`]: top-k metrics, confusion matrices and delta tables.
//! - [`render`]: SVG skeleton overlays and confusion heatmaps.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod numerics;
pub mod pipeline;
pub mod render;
pub mod taylor;
pub mod topology;
pub mod training;

pub use error::{Error, Result};
