use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid modulus q={0}: must be at least 2")]
    InvalidModulus(u64),

    #[error("modulus q={0} is not a power of two; symbol to bit expansion is not invertible")]
    NonInvertibleModulus(u64),

    #[error("need {needed} symbols but only {available} available")]
    InsufficientSymbols { needed: usize, available: usize },

    #[error("bit stream contains a value other than 0 or 1 at index {index}")]
    InvalidBit { index: usize },

    #[error("symbol {symbol} at index {index} is outside [0, {q})")]
    InvalidSymbol { index: usize, symbol: u32, q: u32 },

    #[error("entropy source unavailable: {0}")]
    SourceUnavailable(String),

    #[error("entropy source exhausted: requested {requested} bits, {delivered} delivered")]
    ExhaustedSource { requested: u64, delivered: u64 },

    #[error("invalid seed: {0}")]
    InvalidSeed(String),

    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{test}: insufficient data (need {needed}, got {got})")]
    InsufficientData {
        test: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("{test}: not applicable ({reason})")]
    NotApplicable { test: &'static str, reason: String },

    #[error("approximate entropy block length m={m} exceeds maximum {max} for this stream length")]
    BlockTooLarge { m: u32, max: u32 },

    #[error("cell budget exceeded: {cells} cells, limit {budget}")]
    CellBudgetExceeded { cells: u64, budget: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at byte offset {offset}: unexpected byte 0x{byte:02x}")]
    Parse { offset: usize, byte: u8 },

    #[error("parse error at line {line}: {message}")]
    SymbolParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that mean "this test cannot be evaluated on this input"
    /// rather than a failure of the machinery.
    pub fn is_not_applicable(&self) -> bool {
        matches!(
            self,
            Error::InsufficientData { .. }
                | Error::NotApplicable { .. }
                | Error::BlockTooLarge { .. }
                | Error::CellBudgetExceeded { .. }
                | Error::InvalidModulus(_)
        )
    }
}
