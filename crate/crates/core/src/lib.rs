//! Simulation laboratory for blind cyclic-prefix CFO estimation in
//! MIMO-OFDM: frame synthesis, a multipath Rayleigh channel with CFO and
//! AWGN, the coarse and subset-refined estimators, the Cramér-Rao bound and
//! a deterministic Monte-Carlo sweep harness.

pub mod bounds;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod frame;
pub mod harness;

pub use error::{Error, Result};
