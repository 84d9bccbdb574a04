//! Fourier occupancy field (FOF) toolkit.
//!
//! A FOF stores, for every pixel of an orthographic image, the truncated
//! Fourier series of the occupancy function along the depth axis. This crate
//! converts between triangle meshes, per-pixel occupancy intervals, FOF
//! coefficient grids and dense occupancy volumes, and provides the pieces
//! built on top of that representation:
//!
//! - [`geometry`]: mesh I/O, normalization, yaw rotation and watertight
//!   orthographic ray casting.
//! - [`fof`]: the closed-form codec, inversion, band split and the binary
//!   containers.
//! - [`joints`]: per-joint sphere embeddings concatenated into a pose
//!   condition tensor.
//! - [`recarve`]: multi-view re-encoding and occupancy blending.
//! - [`meshing`]: marching cubes, evaluation metrics and turntable renders.
//!
//! Coordinate conventions are documented in [`lattice`].

pub mod fof;
pub mod geometry;
pub mod joints;
pub mod lattice;
pub mod meshing;
pub mod recarve;

mod error;

pub use error::ErrorClass;
pub use fof::{FofGrid, OccupancyGrid};
pub use geometry::{IntervalImage, Mesh, NormalizedFrame};
