//! QR-recursive compression of a volume integral equation for electromagnetic
//! scattering by planar arrays of identical sub-wavelength scatterers.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the whole
//! numerical pipeline:
//!
//! - [`geometry`]: voxel meshes, Vogel-spiral layouts and the multilevel block
//!   tree with near/far classification.
//! - [`basis`]: divergence-free loop/star current basis on a voxel mesh.
//! - [`assembly`]: Galerkin interaction blocks `Z_ij` and the excitation vector.
//! - [`compression`]: low-rank QR factors of far blocks and the compressed
//!   operator with its storage ledger.
//! - [`solver`]: block-diagonal preconditioner, full GMRES and accuracy metrics.
//! - [`schedule`]: static greedy least-loaded assignment of work items.
//!
//! IO, threads, configuration and the command-line tool live in the `qrvie`
//! crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod basis;
pub mod compression;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod math;
pub mod quadrature;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use math::C64;
