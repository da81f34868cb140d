pub mod adversary;
pub mod analysis;
pub mod channel;
pub mod code;
pub mod error;
pub mod experiment;
pub mod gf2;
pub mod otm;
pub mod qsim;
pub mod rng;

pub use error::{Error, Result};
