//! Optimal point-to-point control of linear networks, computed either from a
//! model or directly from recorded experiments.

pub mod ddcontrol;
pub mod error;
pub mod experiments;
pub mod graphs;
pub mod linalg;
pub mod network;
pub mod seed;
pub mod swing;
pub mod sysid;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
