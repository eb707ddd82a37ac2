pub mod causal;
pub mod denoiser;
pub mod error;
pub mod harness;
pub mod motion;
pub mod nn;
pub mod numcore;
pub mod objective;
pub mod schedule;

pub use error::{Error, Result};
