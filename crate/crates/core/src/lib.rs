//! Reward learning for object rearrangement from one demonstration plus
//! binary feedback on relation graphs.

pub mod env;
pub mod error;
pub mod eval;
pub mod mairl;
pub mod mappings;
pub mod nn;
pub mod refine;
pub mod relations;
pub mod reward;
pub mod rng;
pub mod scene;
pub mod task;

pub use error::{GemError, Result};
