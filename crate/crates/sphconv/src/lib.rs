//! Spherical convolution networks over octree-partitioned 3D point clouds.
//!
//! A point neighborhood is quantized into the volumetric bins of a sphere
//! (azimuth × elevation × radial shells, plus one self-convolution bin), and
//! each bin owns a learnable weight matrix. The network layout is taken from
//! an octree built over the cloud: one neuron per non-empty node, one hidden
//! layer per tree level, inter-layer convolutions along parent→child edges.
//!
//! Crate layout:
//! - [`geometry`] — 3D types, spherical transforms, cloud normalization
//! - [`kernel`] — bin-edge configuration, bin assignment, weight banks
//! - [`octree`] — tree construction and its flattened per-layer network plan
//! - [`network`] — forward/backward passes, batch norm, loss
//! - [`training`] — SGD loop, schedule, augmentation, evaluation
//! - [`data`] — OFF meshes, surface sampling, synthetic dataset, caches
//! - [`bench`] — neighborhood-structuring and inference timing harness
//!
//! Batch-level work is data-parallel via rayon when the `parallel` feature
//! (default) is enabled; every entry point takes an [`ExecMode`] and degrades
//! to the sequential path otherwise.

pub mod bench;
pub mod checkpoint;
pub mod data;
mod exec;
pub mod geometry;
pub mod kernel;
pub mod network;
pub mod octree;
mod real;
mod rng;
pub mod training;

pub use exec::ExecMode;
pub use real::Real;
