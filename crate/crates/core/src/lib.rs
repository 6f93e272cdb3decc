//! Finite-horizon experiments with generically and coarsely computable
//! equivalence structures.
//!
//! Everything here works on stage-indexed approximations: c.e. sets are
//! monotone stage oracles, limits are replaced by trailing-window estimates,
//! and every density is an exact rational.

pub mod density;
pub mod enumeration;
pub mod error;
pub mod generic;
pub mod iso;
pub mod rational;
pub mod report;
pub mod runner;
pub mod s1;
pub mod scenario;
pub mod sets;
pub mod structures;

pub use error::{Error, Result};
pub use rational::Rational;
