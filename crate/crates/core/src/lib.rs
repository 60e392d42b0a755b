//! Numerical laboratory for the two-particle quasiperiodic Schrödinger operator
//!
//! ```text
//! H(θ1,θ2) = Δ + λ (v(n1 ω + θ1) + v(n2 ω + θ2)) + U(n1, n2)   on Z^2
//! ```
//!
//! with `Δ` the nearest-neighbour hopping (entries 1, no diagonal term).

pub mod error;
pub mod green;
pub mod interaction;
pub mod levelset;
pub mod linalg;
pub mod localization;
pub mod operator;
pub mod potential;
pub mod arithmetic;
pub mod stats;

pub use error::{Error, Result};
