//! Intrinsic neural fields on discrete manifolds.
//!
//! The crate learns functions on triangle meshes (and closed polylines) by
//! feeding Laplace–Beltrami eigenfunctions to a small MLP, and provides the
//! surrounding machinery: eigenbasis computation, ray-cast training data,
//! rendering and metrics, infinite-width NTK analysis, and functional-map
//! transfer between shapes.

pub mod error;
pub mod mesh;

pub use error::{Error, Result};
pub mod bench1d;
pub mod embedding;
pub mod field;
pub mod ntk;
pub mod render;
pub mod spectrum;
pub mod transfer;

mod container;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
