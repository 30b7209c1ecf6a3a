//! Bit and symbol streams, and the conversions between bits, symbols over
//! `Z/qZ` and labels in the unit interval.
//!
//! Bits are grouped most-significant-first. A symbol alphabet that is not a
//! power of two is reached by rejection: groups of `ceil(log2 q)` bits whose
//! value is `>= q` are dropped, so every accepted symbol is equiprobable when
//! the input bits are fair and independent.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::generator::GeneratorDescriptor;

/// Where a stream came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Provenance {
    Generator {
        descriptor: GeneratorDescriptor,
    },
    File {
        path: PathBuf,
    },
    #[default]
    Literal,
}

/// A finite sequence of bits, each stored as a `u8` equal to 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BitStream {
    bits: Vec<u8>,
    provenance: Provenance,
    discarded_bits: u64,
}

impl BitStream {
    pub fn new(bits: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if let Some(index) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidBit { index });
        }
        Ok(Self {
            bits,
            provenance,
            discarded_bits: 0,
        })
    }

    /// Builds a literal stream, panicking on values other than 0/1.
    pub fn from_bits(bits: &[u8]) -> Self {
        Self::new(bits.to_vec(), Provenance::Literal).expect("bits must be 0 or 1")
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self {
            bits: iter.into_iter().map(u8::from).collect(),
            provenance: Provenance::Literal,
            discarded_bits: 0,
        }
    }

    pub fn empty() -> Self {
        Self::from_bools(std::iter::empty())
    }

    /// Unpacks `bit_count` bits from `bytes`, most-significant-bit first.
    pub fn from_msb_bytes(bytes: &[u8], bit_count: usize) -> Result<Self> {
        if bit_count > bytes.len() * 8 {
            return Err(Error::LengthMismatch {
                left: bit_count,
                right: bytes.len() * 8,
            });
        }
        let bits = (0..bit_count)
            .map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1)
            .collect();
        Ok(Self {
            bits,
            provenance: Provenance::Literal,
            discarded_bits: 0,
        })
    }

    /// Packs into bytes, most-significant-bit first; the last byte is
    /// zero-padded.
    pub fn to_msb_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | (b << (7 - i)))
            })
            .collect()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_discarded(mut self, discarded_bits: u64) -> Self {
        self.discarded_bits = discarded_bits;
        self
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn discarded_bits(&self) -> u64 {
        self.discarded_bits
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|&b| b ^ 1).collect(),
            provenance: self.provenance.clone(),
            discarded_bits: self.discarded_bits,
        }
    }
}

/// A finite sequence over `Z/qZ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolStream {
    q: u32,
    symbols: Vec<u32>,
    discarded_bits: u64,
}

impl SymbolStream {
    pub fn new(q: u32, symbols: Vec<u32>) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidModulus(q as u64));
        }
        if let Some(index) = symbols.iter().position(|&s| s >= q) {
            return Err(Error::InvalidSymbol {
                index,
                symbol: symbols[index],
                q,
            });
        }
        Ok(Self {
            q,
            symbols,
            discarded_bits: 0,
        })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<u32> {
        self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Bits dropped while converting from a bit stream (rejected groups plus
    /// the trailing partial group).
    pub fn discarded_bits(&self) -> u64 {
        self.discarded_bits
    }
}

/// A label `0.m1 m2 ... mn` in base q.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct UnitReal {
    value: f64,
    digits_used: usize,
}

impl UnitReal {
    pub fn new(value: f64, digits_used: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!("unit real {value} outside [0, 1]")));
        }
        Ok(Self { value, digits_used })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn digits_used(&self) -> usize {
        self.digits_used
    }
}

/// Bits needed to hold one symbol of `Z/qZ`, i.e. `ceil(log2 q)`.
pub fn symbol_width(q: u32) -> u32 {
    32 - (q - 1).leading_zeros()
}

pub(crate) fn check_modulus(q: u32) -> Result<()> {
    if q < 2 {
        Err(Error::InvalidModulus(q as u64))
    } else {
        Ok(())
    }
}

/// Reads `ceil(log2 q)`-bit groups and keeps those whose value is below `q`.
pub fn bits_to_symbols(bits: &BitStream, q: u32) -> Result<SymbolStream> {
    check_modulus(q)?;
    let width = symbol_width(q) as usize;
    let chunks = bits.bits.chunks_exact(width);
    let trailing = chunks.remainder().len() as u64;
    let mut symbols = Vec::with_capacity(bits.len() / width);
    let mut rejected = 0u64;
    for group in chunks {
        let v = group.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        if v < q {
            symbols.push(v);
        } else {
            rejected += 1;
        }
    }
    Ok(SymbolStream {
        q,
        symbols,
        discarded_bits: rejected * width as u64 + trailing,
    })
}

/// Expands each symbol into `log2 q` bits, most-significant-first.
pub fn symbols_to_bits(s: &SymbolStream) -> Result<BitStream> {
    if !s.q.is_power_of_two() {
        return Err(Error::NonInvertibleModulus(s.q as u64));
    }
    let width = s.q.trailing_zeros();
    let mut bits = Vec::with_capacity(s.len() * width as usize);
    for &sym in &s.symbols {
        for shift in (0..width).rev() {
            bits.push(((sym >> shift) & 1) as u8);
        }
    }
    Ok(BitStream {
        bits,
        provenance: Provenance::Literal,
        discarded_bits: 0,
    })
}

/// Labels the first `n` symbols as the base-q fraction `0.m1 m2 ... mn`.
///
/// Evaluated by Horner's rule from the last digit, which keeps the map
/// monotone in lexicographic digit order under rounding. Digits past the
/// precision of `f64` have no effect.
pub fn symbols_to_unit_real(s: &SymbolStream, n: usize) -> Result<UnitReal> {
    if n > s.len() {
        return Err(Error::InsufficientSymbols {
            needed: n,
            available: s.len(),
        });
    }
    let q = s.q as f64;
    let value = s.symbols[..n]
        .iter()
        .rev()
        .fold(0.0f64, |acc, &m| (acc + m as f64) / q);
    Ok(UnitReal {
        value: value.min(1.0),
        digits_used: n,
    })
}
