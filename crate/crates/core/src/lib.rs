//! Covariance-based device activity detection for massive MIMO random access.

pub mod detect;
pub mod error;
pub mod experiments;
pub mod fronthaul;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod phase;
pub mod rng;

pub use error::{Error, Result};
