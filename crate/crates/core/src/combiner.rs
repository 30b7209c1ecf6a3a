//! The hybrid generator: a deterministic generator's output, segmented into
//! `q` equal parts, shifted by offsets drawn from an entropy source.
//!
//! Two combiners are provided. `digital-dice` adds a uniform offset
//! `r in Z/qZ` to the segment index `u` of each generator word, so the result
//! `(u + r) mod q` is uniform whatever the distribution of `u`. `xor` XORs
//! generator bits with entropy bits group by group.
//!
//! The mix rate `p/k` sets how much entropy is spent: a fresh offset (or xor
//! block) is reused for `ceil(k/p)` consecutive outputs. An exhausted entropy
//! source is always an error; the generator never continues on the
//! deterministic side alone.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::entropy::{open_source, EntropySource, EntropySourceDescriptor};
use crate::error::{Error, Result};
use crate::generator::GeneratorDescriptor;
use crate::prng::{PrngBitReader, PrngDescriptor, PrngState};
use crate::stream::{check_modulus, symbol_width, BitStream, Provenance, SymbolStream};

/// Fresh entropy symbols per output symbol, as a fraction in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MixRate {
    num: u32,
    den: u32,
}

impl MixRate {
    pub const ONE: MixRate = MixRate { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::InvalidDescriptor(format!(
                "mix rate {num}/{den} outside (0, 1]"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    /// Consecutive outputs sharing one fresh draw: `ceil(den / num)`.
    pub fn reuse_span(&self) -> u32 {
        self.den.div_ceil(self.num)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for MixRate {
    fn default() -> Self {
        MixRate::ONE
    }
}

impl fmt::Display for MixRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for MixRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidDescriptor(format!("mix rate {s:?} is not of the form P/K"));
        let (p, k) = s.split_once('/').unwrap_or((s, "1"));
        let p = p.trim().parse().map_err(|_| bad())?;
        let k = k.trim().parse().map_err(|_| bad())?;
        MixRate::new(p, k)
    }
}

impl Serialize for MixRate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MixRate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineMode {
    Xor,
    #[default]
    DigitalDice,
}

fn default_q() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinerDescriptor {
    #[serde(default)]
    pub mode: CombineMode,
    #[serde(default = "default_q")]
    pub q: u32,
    #[serde(default)]
    pub mix_rate: MixRate,
    pub rs: EntropySourceDescriptor,
    pub ss: PrngDescriptor,
}

impl CombinerDescriptor {
    pub fn dice(q: u32, rs: EntropySourceDescriptor, ss: PrngDescriptor) -> Self {
        Self {
            mode: CombineMode::DigitalDice,
            q,
            mix_rate: MixRate::ONE,
            rs,
            ss,
        }
    }

    pub fn xor(q: u32, rs: EntropySourceDescriptor, ss: PrngDescriptor) -> Self {
        Self {
            mode: CombineMode::Xor,
            ..Self::dice(q, rs, ss)
        }
    }

    pub fn with_mix_rate(mut self, mix_rate: MixRate) -> Self {
        self.mix_rate = mix_rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_modulus(self.q)?;
        MixRate::new(self.mix_rate.num, self.mix_rate.den)?;
        Ok(())
    }
}

/// One application of the segment measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiceOutcome {
    pub ss_segment: u32,
    pub rs_offset: u32,
    pub result: u32,
}

/// A [`DiceOutcome`] tagged with the index of the entropy draw it used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiceRecord {
    pub outcome: DiceOutcome,
    pub rs_draw: u64,
}

pub fn digital_dice_step(u: u32, r: u32, q: u32) -> Result<DiceOutcome> {
    check_modulus(q)?;
    if u >= q || r >= q {
        return Err(Error::Domain(format!(
            "segment {u} and offset {r} must both lie in [0, {q})"
        )));
    }
    Ok(DiceOutcome {
        ss_segment: u,
        rs_offset: r,
        result: ((u as u64 + r as u64) % q as u64) as u32,
    })
}

pub fn xor_combine(a: &BitStream, b: &BitStream) -> Result<BitStream> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(BitStream::from_bools(
        a.bits().iter().zip(b.bits()).map(|(x, y)| x != y),
    ))
}

/// Entropy spent by a hybrid generator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RsAccounting {
    /// Bits read from the entropy source.
    pub rs_bits_consumed: u64,
    /// Fresh offsets (dice) or xor blocks drawn.
    pub rs_draws: u64,
    /// Symbols (dice) or bit groups (xor) produced.
    pub outputs: u64,
    /// `ceil(outputs * mix_rate) * ceil(log2 q) * 2^w / q` for dice,
    /// without the rejection factor for xor.
    pub rs_bits_expected: f64,
}

/// A running hybrid generator. Single consumer.
#[derive(Debug)]
pub struct HybridGenerator {
    descriptor: CombinerDescriptor,
    rs: EntropySource,
    ss: PrngBitReader,
    width: u32,
    span: u32,
    current: u64,
    uses_left: u32,
    draws: u64,
    outputs: u64,
    bit_buf: u64,
    bit_left: u32,
}

impl HybridGenerator {
    pub fn open(descriptor: &CombinerDescriptor) -> Result<Self> {
        descriptor.validate()?;
        let rs = open_source(&descriptor.rs)?;
        Ok(Self {
            width: symbol_width(descriptor.q),
            span: descriptor.mix_rate.reuse_span(),
            descriptor: descriptor.clone(),
            rs,
            ss: PrngBitReader::new(PrngState::new(descriptor.ss.clone())),
            current: 0,
            uses_left: 0,
            draws: 0,
            outputs: 0,
            bit_buf: 0,
            bit_left: 0,
        })
    }

    pub fn descriptor(&self) -> &CombinerDescriptor {
        &self.descriptor
    }

    /// The entropy side, e.g. to record what it delivers.
    pub fn rs_mut(&mut self) -> &mut EntropySource {
        &mut self.rs
    }

    pub fn accounting(&self) -> RsAccounting {
        let q = self.descriptor.q as f64;
        let rejection = match self.descriptor.mode {
            CombineMode::DigitalDice => (1u64 << self.width) as f64 / q,
            CombineMode::Xor => 1.0,
        };
        let m = self.descriptor.mix_rate;
        let fresh = (self.outputs * m.num as u64).div_ceil(m.den as u64);
        RsAccounting {
            rs_bits_consumed: self.rs.bits_delivered(),
            rs_draws: self.draws,
            outputs: self.outputs,
            rs_bits_expected: fresh as f64 * self.width as f64 * rejection,
        }
    }

    fn draw(&mut self) -> Result<u64> {
        if self.uses_left == 0 {
            self.current = match self.descriptor.mode {
                CombineMode::DigitalDice => loop {
                    let v = self.rs.next_value(self.width)?;
                    if v < self.descriptor.q as u64 {
                        break v;
                    }
                },
                CombineMode::Xor => self.rs.next_value(self.width)?,
            };
            self.draws += 1;
            self.uses_left = self.span;
        }
        self.uses_left -= 1;
        Ok(self.current)
    }

    /// One digital-dice measurement.
    pub fn next_outcome(&mut self) -> Result<DiceRecord> {
        if self.descriptor.mode != CombineMode::DigitalDice {
            return Err(Error::Config("dice outcomes need digital-dice mode".into()));
        }
        let q = self.descriptor.q;
        let u = self.ss.state_mut().next_segment(q);
        let r = self.draw()? as u32;
        let outcome = digital_dice_step(u, r, q)?;
        self.outputs += 1;
        Ok(DiceRecord {
            outcome,
            rs_draw: self.draws - 1,
        })
    }

    fn next_xor_group(&mut self) -> Result<u64> {
        let block = self.draw()?;
        let ss = self.ss.next_bits_value(self.width);
        self.outputs += 1;
        Ok(ss ^ block)
    }

    pub fn next_symbol(&mut self) -> Result<u32> {
        match self.descriptor.mode {
            CombineMode::DigitalDice => Ok(self.next_outcome()?.outcome.result),
            CombineMode::Xor => loop {
                let v = self.next_xor_group()?;
                if v < self.descriptor.q as u64 {
                    return Ok(v as u32);
                }
            },
        }
    }

    pub fn next_symbols(&mut self, n: usize) -> Result<SymbolStream> {
        let symbols = (0..n)
            .map(|_| self.next_symbol())
            .collect::<Result<Vec<_>>>()?;
        SymbolStream::new(self.descriptor.q, symbols)
    }

    /// Bit-level output. Digital-dice symbols are expanded to `log2 q` bits,
    /// which needs a power-of-two `q`; xor mode emits its combined groups.
    #[inline]
    pub fn next_bit(&mut self) -> Result<u8> {
        if self.bit_left == 0 {
            self.bit_buf = match self.descriptor.mode {
                CombineMode::DigitalDice => {
                    if !self.descriptor.q.is_power_of_two() {
                        return Err(Error::NonInvertibleModulus(self.descriptor.q as u64));
                    }
                    self.next_outcome()?.outcome.result as u64
                }
                CombineMode::Xor => self.next_xor_group()?,
            };
            self.bit_left = self.width;
        }
        self.bit_left -= 1;
        Ok(((self.bit_buf >> self.bit_left) & 1) as u8)
    }

    pub fn next_bits(&mut self, n: usize) -> Result<BitStream> {
        if self.descriptor.mode == CombineMode::DigitalDice && !self.descriptor.q.is_power_of_two()
        {
            return Err(Error::NonInvertibleModulus(self.descriptor.q as u64));
        }
        let bits = (0..n)
            .map(|_| self.next_bit())
            .collect::<Result<Vec<_>>>()?;
        BitStream::new(bits, self.provenance())
    }

    fn provenance(&self) -> Provenance {
        Provenance::Generator {
            descriptor: GeneratorDescriptor::Hybrid(self.descriptor.clone()),
        }
    }
}

/// `n` symbols from a freshly opened hybrid generator.
pub fn hybrid_next_symbols(descriptor: &CombinerDescriptor, n: usize) -> Result<SymbolStream> {
    HybridGenerator::open(descriptor)?.next_symbols(n)
}

/// `n` bits from a freshly opened hybrid generator.
pub fn hybrid_next_bits(descriptor: &CombinerDescriptor, n: usize) -> Result<BitStream> {
    HybridGenerator::open(descriptor)?.next_bits(n)
}
