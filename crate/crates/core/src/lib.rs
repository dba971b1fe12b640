//! Knowledge-capacity laboratory: synthetic knowledge corpora, a hand-built
//! micro transformer, and bit-level accounting of what it memorizes.

pub mod bitmath;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod knowledge;
pub mod model;
pub mod oracles;
pub mod quant;
pub mod rng;

pub use error::{Error, Result};
