//! A direct-summation N-body engine whose force and jerk evaluation runs on a
//! simulated tile-dataflow accelerator.
//!
//! Positions and velocities are packed into 32×32 binary32 tiles and streamed
//! through a read → compute → write kernel pipeline linked by circular
//! buffers. A fourth-order Hermite integrator advances the system in
//! binary64 on the host.

pub mod bench;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod device;
pub mod engine;
pub mod error;
pub mod hermite;
pub mod kernels;
mod par;
pub mod particles;
pub mod tile;
pub mod topology;

pub use error::{Error, Result};
pub use particles::{ParticleSystem, Vec3};
pub use tile::{Tile, TILE_BYTES, TILE_DIM, TILE_LANES};
