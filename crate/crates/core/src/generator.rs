//! One descriptor type and one handle type covering every kind of stream
//! producer: deterministic generators, entropy sources and hybrids.

use serde::{Deserialize, Serialize};

use crate::combiner::{CombinerDescriptor, HybridGenerator, RsAccounting};
use crate::entropy::{open_source, EntropySource, EntropySourceDescriptor};
use crate::error::{Error, Result};
use crate::prng::{PrngBitReader, PrngDescriptor, PrngState};
use crate::stream::{check_modulus, symbol_width, BitStream, Provenance, SymbolStream};

/// Declarative identity of a producer, sufficient for bit-exact replay when
/// every entropy source involved is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorDescriptor {
    Prng(PrngDescriptor),
    Entropy(EntropySourceDescriptor),
    Hybrid(CombinerDescriptor),
}

impl GeneratorDescriptor {
    pub fn is_reproducible(&self) -> bool {
        match self {
            GeneratorDescriptor::Prng(_) => true,
            GeneratorDescriptor::Entropy(e) => e.is_reproducible(),
            GeneratorDescriptor::Hybrid(c) => c.rs.is_reproducible(),
        }
    }

    /// Short human-readable label for tables.
    pub fn label(&self) -> String {
        fn prng(d: &PrngDescriptor) -> String {
            match (d.preset_name(), d.family()) {
                (Some(p), _) => format!("{p}(seed={})", d.seed()),
                (None, crate::prng::PrngFamily::Lcg { a, c, modulus }) => {
                    format!("lcg(a={a},c={c},m={modulus},seed={})", d.seed())
                }
                (None, crate::prng::PrngFamily::Xorshift64) => {
                    format!("xorshift64(seed={})", d.seed())
                }
                (None, crate::prng::PrngFamily::Mix64) => format!("mix64(seed={})", d.seed()),
            }
        }
        fn entropy(e: &EntropySourceDescriptor) -> String {
            match e {
                EntropySourceDescriptor::OsEntropy => "os-entropy".into(),
                EntropySourceDescriptor::TimingJitter { .. } => "timing-jitter".into(),
                EntropySourceDescriptor::FileReplay { path, .. } => {
                    format!("file-replay({})", path.display())
                }
                EntropySourceDescriptor::DeterministicTest { .. } => "deterministic-test".into(),
            }
        }
        match self {
            GeneratorDescriptor::Prng(d) => prng(d),
            GeneratorDescriptor::Entropy(e) => entropy(e),
            GeneratorDescriptor::Hybrid(c) => {
                let mode = match c.mode {
                    crate::combiner::CombineMode::Xor => "xor",
                    crate::combiner::CombineMode::DigitalDice => "dice",
                };
                format!(
                    "hybrid-{mode}(q={},mix={}; {} o {})",
                    c.q,
                    c.mix_rate,
                    entropy(&c.rs),
                    prng(&c.ss)
                )
            }
        }
    }
}

/// An opened producer. Single consumer.
#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Generator {
    Prng(PrngBitReader),
    Entropy(EntropySource),
    Hybrid(HybridGenerator),
}

impl Generator {
    pub fn open(descriptor: &GeneratorDescriptor) -> Result<Self> {
        Ok(match descriptor {
            GeneratorDescriptor::Prng(d) => {
                Generator::Prng(PrngBitReader::new(PrngState::new(d.clone())))
            }
            GeneratorDescriptor::Entropy(e) => Generator::Entropy(open_source(e)?),
            GeneratorDescriptor::Hybrid(c) => Generator::Hybrid(HybridGenerator::open(c)?),
        })
    }

    pub fn descriptor(&self) -> GeneratorDescriptor {
        match self {
            Generator::Prng(r) => GeneratorDescriptor::Prng(r.state().descriptor().clone()),
            Generator::Entropy(e) => GeneratorDescriptor::Entropy(e.descriptor().clone()),
            Generator::Hybrid(h) => GeneratorDescriptor::Hybrid(h.descriptor().clone()),
        }
    }

    pub fn accounting(&self) -> Option<RsAccounting> {
        match self {
            Generator::Hybrid(h) => Some(h.accounting()),
            _ => None,
        }
    }

    /// Bits read from an entropy source so far, if one is involved.
    pub fn entropy_bits_consumed(&self) -> Option<u64> {
        match self {
            Generator::Prng(_) => None,
            Generator::Entropy(e) => Some(e.bits_delivered()),
            Generator::Hybrid(h) => Some(h.accounting().rs_bits_consumed),
        }
    }

    /// The entropy source feeding this producer, if any.
    pub fn entropy_source_mut(&mut self) -> Option<&mut EntropySource> {
        match self {
            Generator::Prng(_) => None,
            Generator::Entropy(e) => Some(e),
            Generator::Hybrid(h) => Some(h.rs_mut()),
        }
    }

    #[inline]
    pub fn next_bit(&mut self) -> Result<u8> {
        match self {
            Generator::Prng(r) => Ok(r.next_bit()),
            Generator::Entropy(e) => e.next_bit(),
            Generator::Hybrid(h) => h.next_bit(),
        }
    }

    pub fn next_bits(&mut self, n: usize) -> Result<BitStream> {
        let provenance = Provenance::Generator {
            descriptor: self.descriptor(),
        };
        let bits = match self {
            Generator::Hybrid(h) => h.next_bits(n)?.into_bits(),
            _ => (0..n)
                .map(|_| self.next_bit())
                .collect::<Result<Vec<_>>>()?,
        };
        BitStream::new(bits, provenance)
    }

    /// Symbols over `Z/qZ`: segment indices for a deterministic generator,
    /// rejection-sampled bit groups for an entropy source, and the combined
    /// output for a hybrid (whose own `q` must match).
    pub fn next_symbols(&mut self, n: usize, q: u32) -> Result<SymbolStream> {
        check_modulus(q)?;
        match self {
            Generator::Prng(r) => r.state_mut().segments(q, n),
            Generator::Entropy(e) => {
                let width = symbol_width(q);
                let mut symbols = Vec::with_capacity(n);
                while symbols.len() < n {
                    let v = e.next_value(width)?;
                    if v < q as u64 {
                        symbols.push(v as u32);
                    }
                }
                SymbolStream::new(q, symbols)
            }
            Generator::Hybrid(h) => {
                if h.descriptor().q != q {
                    return Err(Error::Config(format!(
                        "hybrid generator is configured for q={}, not q={q}",
                        h.descriptor().q
                    )));
                }
                h.next_symbols(n)
            }
        }
    }

    /// A 32-bit word: the top 32 bits of the next generator word (scaled up
    /// when the word is narrower), or 32 stream bits for other producers.
    #[inline]
    pub fn next_u32(&mut self) -> Result<u32> {
        match self {
            Generator::Prng(r) => {
                let t = r.state().descriptor().usable_bits();
                let top = r.state_mut().next_top();
                Ok(if t >= 32 {
                    (top >> (t - 32)) as u32
                } else {
                    (top << (32 - t)) as u32
                })
            }
            _ => {
                let mut v = 0u32;
                for _ in 0..32 {
                    v = (v << 1) | self.next_bit()? as u32;
                }
                Ok(v)
            }
        }
    }

    /// A unit real in `[0, 1)`: `next_u32() / 2^32`.
    #[inline]
    pub fn next_unit(&mut self) -> Result<f64> {
        Ok(self.next_u32()? as f64 / 4_294_967_296.0)
    }
}
