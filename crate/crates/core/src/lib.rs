//! Core library for building a common multilingual semantic space from
//! per-language word vectors and bilingual dictionaries, and for quantifying
//! cross-linguistic semantic affinity of concepts, domains, and language pairs.

pub mod affinity;
pub mod align;
pub mod error;
pub mod io;
pub mod math;
pub mod pipeline;
pub mod predictors;
pub mod report;
pub mod stats;
pub mod synth;
pub mod typology;
pub mod types;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
