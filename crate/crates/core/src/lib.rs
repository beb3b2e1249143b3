pub mod audio;
pub mod augment;
pub mod dvector;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod manifest;
pub mod pipeline;
pub mod recipes;
pub mod seed;
pub mod transcripts;
pub mod voices;
pub mod world;

pub use error::{Error, Result};
