//! Capacitive imaging simulation and amplitude/phase image fusion.
//!
//! The crate models the full measurement chain of a coplanar capacitive
//! probe scanned over a dielectric sample:
//!
//! - [`geometry`]: sample, defect and probe models rasterized onto a voxel lattice;
//! - [`fieldsolver`]: quasi-static potential solve and induced charge on the sensing electrode;
//! - [`lockin`]: charge amplifier, signal synthesis and lock-in demodulation into X, Y, R, φ;
//! - [`scanner`]: raster scans producing amplitude and phase images;
//! - [`fusion`]: min-max normalization and the Δ / Ξ fused images;
//! - [`analysis`]: line profiles, per-defect peaks, linear fits and SNR;
//! - [`io`]: JSON configuration, CSV matrices, PGM images;
//! - [`pipeline`]: the end-to-end operations behind the command line.

pub mod analysis;
pub mod error;
pub mod fieldsolver;
pub mod fusion;
pub mod geometry;
pub mod image;
pub mod io;
pub mod lockin;
pub mod pipeline;
pub mod scanner;

pub use error::{Error, Result};
