pub mod architectures;
pub mod config;
pub mod datagen;
pub mod error;
pub mod inference;
pub mod losses;
pub mod nn;
pub mod oracles;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod special;
pub mod trainer_eval;

pub use error::{Error, Result};
pub use scalar::Scalar;
