//! Hybrid random generation: entropy sources combined with deterministic
//! generators, a statistical test battery and a Monte Carlo harness.

pub mod battery;
pub mod cli;
pub mod combiner;
pub mod entropy;
pub mod error;
pub mod generator;
pub mod io;
pub mod montecarlo;
pub mod prng;
pub mod special;
pub mod stream;

pub use error::{Error, Result};
pub use generator::{Generator, GeneratorDescriptor};
pub use stream::{BitStream, Provenance, SymbolStream, UnitReal};
