//! Second-moment polytopic (SMP) stochastic linear systems: expansion,
//! mean-square stability certification and state-feedback synthesis.

pub mod benchmark;
pub mod error;
pub mod expansion;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod sdp;
pub mod stability;
pub mod synthesis;
pub mod tensor;

pub use error::{Result, SmpError};
