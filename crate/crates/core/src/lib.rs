pub mod assess;
pub mod bgmotion;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod pipeline;
pub mod tracker;
pub mod trajnet;
pub mod xcorr;

pub use error::{Error, Result};
