pub mod alpha;
pub mod contrast;
pub mod coord;
pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod rng;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
