//! Knowledge inheritance pre-training at desk scale: a student language model
//! learns from its own objective and from a smaller teacher's predictions,
//! with the teacher's weight decaying over training.

pub mod corpus;
pub mod error;
pub mod kicore;
pub mod logitcache;
pub mod model;
pub(crate) mod rng;
pub mod runconfig;
pub mod trainer;

pub use error::{KiError, Result};
