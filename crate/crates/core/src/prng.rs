//! Deterministic generators: linear congruential (including the defective
//! RANDU preset), xorshift64 and a counter-based 64-bit mixer.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stream::{BitStream, Provenance, SymbolStream};

/// Golden-ratio increment of the splittable 64-bit generator construction.
pub const MIX64_INCREMENT: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX64_MUL1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX64_MUL2: u64 = 0x94D0_49BB_1331_11EB;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// a = 65539, c = 0, m = 2^31
    Randu,
    /// a = 16807, c = 0, m = 2^31 - 1
    Minstd,
}

impl Preset {
    pub fn family(self) -> PrngFamily {
        match self {
            Preset::Randu => PrngFamily::Lcg {
                a: 65539,
                c: 0,
                modulus: 1 << 31,
            },
            Preset::Minstd => PrngFamily::Lcg {
                a: 16807,
                c: 0,
                modulus: (1 << 31) - 1,
            },
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "randu" => Ok(Preset::Randu),
            "minstd" => Ok(Preset::Minstd),
            _ => Err(Error::InvalidDescriptor(format!("unknown preset {s:?}"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Randu => "randu",
            Preset::Minstd => "minstd",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrngFamily {
    Lcg { a: u64, c: u64, modulus: u64 },
    Xorshift64,
    Mix64,
}

/// Identity of a deterministic generator: family parameters plus seed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PrngSpec", into = "PrngSpec")]
pub struct PrngDescriptor {
    family: PrngFamily,
    seed: u64,
    preset: Option<Preset>,
}

impl PrngDescriptor {
    pub fn new(family: PrngFamily, seed: u64) -> Result<Self> {
        validate(family, seed)?;
        Ok(Self {
            family,
            seed,
            preset: None,
        })
    }

    pub fn lcg(a: u64, c: u64, modulus: u64, seed: u64) -> Result<Self> {
        Self::new(PrngFamily::Lcg { a, c, modulus }, seed)
    }

    pub fn preset(preset: Preset, seed: u64) -> Result<Self> {
        validate(preset.family(), seed)?;
        Ok(Self {
            family: preset.family(),
            seed,
            preset: Some(preset),
        })
    }

    pub fn randu(seed: u64) -> Result<Self> {
        Self::preset(Preset::Randu, seed)
    }

    pub fn minstd(seed: u64) -> Result<Self> {
        Self::preset(Preset::Minstd, seed)
    }

    pub fn xorshift64(seed: u64) -> Result<Self> {
        Self::new(PrngFamily::Xorshift64, seed)
    }

    pub fn mix64(seed: u64) -> Self {
        Self {
            family: PrngFamily::Mix64,
            seed,
            preset: None,
        }
    }

    pub fn family(&self) -> PrngFamily {
        self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn preset_name(&self) -> Option<Preset> {
        self.preset
    }

    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        validate(self.family, seed)?;
        Ok(Self {
            seed,
            ..self.clone()
        })
    }

    /// Bits per raw output word: `ceil(log2 m)` for an LCG, 64 otherwise.
    pub fn word_bits(&self) -> u32 {
        match self.family {
            PrngFamily::Lcg { modulus, .. } => 64 - (modulus - 1).leading_zeros(),
            _ => 64,
        }
    }

    /// Bits taken from the top of each word: `floor(log2 m)` for an LCG.
    pub fn usable_bits(&self) -> u32 {
        match self.family {
            PrngFamily::Lcg { modulus, .. } => 63 - modulus.leading_zeros(),
            _ => 64,
        }
    }
}

fn validate(family: PrngFamily, seed: u64) -> Result<()> {
    match family {
        PrngFamily::Lcg { a, c, modulus } => {
            if !(2..=1 << 63).contains(&modulus) {
                return Err(Error::InvalidDescriptor(format!(
                    "lcg modulus {modulus} outside [2, 2^63]"
                )));
            }
            if a >= modulus || c >= modulus {
                return Err(Error::InvalidDescriptor(format!(
                    "lcg parameters a={a}, c={c} must be below modulus {modulus}"
                )));
            }
            if seed >= modulus {
                return Err(Error::InvalidSeed(format!(
                    "seed {seed} must be below modulus {modulus}"
                )));
            }
            if c == 0 && seed == 0 {
                return Err(Error::InvalidSeed(
                    "multiplicative lcg (c = 0) needs a nonzero seed".into(),
                ));
            }
        }
        PrngFamily::Xorshift64 => {
            if seed == 0 {
                return Err(Error::InvalidSeed("xorshift64 seed must be nonzero".into()));
            }
        }
        PrngFamily::Mix64 => {}
    }
    Ok(())
}

/// Serialized form. A preset may stand in for the explicit parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrngSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modulus: Option<u64>,
    seed: u64,
}

impl TryFrom<PrngSpec> for PrngDescriptor {
    type Error = Error;

    fn try_from(spec: PrngSpec) -> Result<Self> {
        if let Some(preset) = spec.preset {
            let PrngFamily::Lcg { a, c, modulus } = preset.family() else {
                unreachable!()
            };
            let conflicts = spec.family.as_deref().is_some_and(|f| f != "lcg")
                || spec.a.is_some_and(|v| v != a)
                || spec.c.is_some_and(|v| v != c)
                || spec.modulus.is_some_and(|v| v != modulus);
            if conflicts {
                return Err(Error::InvalidDescriptor(format!(
                    "explicit parameters conflict with preset {preset}"
                )));
            }
            return PrngDescriptor::preset(preset, spec.seed);
        }
        match spec.family.as_deref() {
            Some("lcg") => match (spec.a, spec.c, spec.modulus) {
                (Some(a), Some(c), Some(m)) => PrngDescriptor::lcg(a, c, m, spec.seed),
                _ => Err(Error::InvalidDescriptor(
                    "lcg needs a, c and modulus (or a preset)".into(),
                )),
            },
            Some("xorshift64") => PrngDescriptor::xorshift64(spec.seed),
            Some("mix64") => Ok(PrngDescriptor::mix64(spec.seed)),
            Some(other) => Err(Error::InvalidDescriptor(format!(
                "unknown generator family {other:?}"
            ))),
            None => Err(Error::InvalidDescriptor(
                "generator needs a family or a preset".into(),
            )),
        }
    }
}

impl From<PrngDescriptor> for PrngSpec {
    fn from(d: PrngDescriptor) -> Self {
        let (family, a, c, modulus) = match d.family {
            PrngFamily::Lcg { a, c, modulus } => ("lcg", Some(a), Some(c), Some(modulus)),
            PrngFamily::Xorshift64 => ("xorshift64", None, None, None),
            PrngFamily::Mix64 => ("mix64", None, None, None),
        };
        PrngSpec {
            family: Some(family.into()),
            preset: d.preset,
            a,
            c,
            modulus,
            seed: d.seed,
        }
    }
}

/// `(a * x + c) mod m` with a 128-bit intermediate.
#[inline]
pub fn lcg_step(a: u64, c: u64, modulus: u64, x: u64) -> u64 {
    ((a as u128 * x as u128 + c as u128) % modulus as u128) as u64
}

/// Shift triple (13, 7, 17).
#[inline]
pub fn xorshift64_step(mut x: u64) -> u64 {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    x
}

/// Output permutation of the counter-based generator.
#[inline]
pub fn mix64_finalize(counter: u64) -> u64 {
    let mut z = counter;
    z = (z ^ (z >> 30)).wrapping_mul(MIX64_MUL1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX64_MUL2);
    z ^ (z >> 31)
}

#[inline]
fn advance(family: PrngFamily, state: u64) -> u64 {
    match family {
        PrngFamily::Lcg { a, c, modulus } => lcg_step(a, c, modulus, state),
        PrngFamily::Xorshift64 => xorshift64_step(state),
        PrngFamily::Mix64 => state.wrapping_add(MIX64_INCREMENT),
    }
}

/// Generator state as an explicit value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrngState {
    descriptor: PrngDescriptor,
    state: u64,
    emitted: u64,
}

impl PrngState {
    pub fn new(descriptor: PrngDescriptor) -> Self {
        Self {
            state: descriptor.seed,
            descriptor,
            emitted: 0,
        }
    }

    pub fn descriptor(&self) -> &PrngDescriptor {
        &self.descriptor
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Advances once, returning the successor state and the output word.
    #[must_use]
    pub fn step(&self) -> (PrngState, u64) {
        let mut next = self.clone();
        let out = next.next_word();
        (next, out)
    }

    /// In-place form of [`PrngState::step`].
    #[inline]
    pub fn next_word(&mut self) -> u64 {
        let family = self.descriptor.family;
        self.state = advance(family, self.state);
        self.emitted += 1;
        match family {
            PrngFamily::Mix64 => mix64_finalize(self.state),
            _ => self.state,
        }
    }

    /// The top `usable_bits()` bits of the next word.
    #[inline]
    pub fn next_top(&mut self) -> u64 {
        let drop = self.descriptor.word_bits() - self.descriptor.usable_bits();
        self.next_word() >> drop
    }

    /// Segment index `floor(q * w / 2^t)` of the next word, where `w` is its
    /// top `t = usable_bits()` bits.
    #[inline]
    pub fn next_segment(&mut self, q: u32) -> u32 {
        let t = self.descriptor.usable_bits();
        let top = self.next_top() as u128;
        ((q as u128 * top) >> t) as u32
    }

    pub fn segments(&mut self, q: u32, n: usize) -> Result<SymbolStream> {
        crate::stream::check_modulus(q)?;
        let symbols = (0..n).map(|_| self.next_segment(q)).collect();
        SymbolStream::new(q, symbols)
    }
}

/// Streams generator output bit by bit, top bits of each word first.
#[derive(Clone, Debug)]
pub struct PrngBitReader {
    state: PrngState,
    word: u64,
    remaining: u32,
}

impl PrngBitReader {
    pub fn new(state: PrngState) -> Self {
        Self {
            state,
            word: 0,
            remaining: 0,
        }
    }

    pub fn state(&self) -> &PrngState {
        &self.state
    }

    /// Word-level access; bits still buffered in the reader are unaffected.
    pub fn state_mut(&mut self) -> &mut PrngState {
        &mut self.state
    }

    #[inline]
    pub fn next_bit(&mut self) -> u8 {
        if self.remaining == 0 {
            self.word = self.state.next_top();
            self.remaining = self.state.descriptor.usable_bits();
        }
        self.remaining -= 1;
        ((self.word >> self.remaining) & 1) as u8
    }

    /// Next `width` bits (at most 64) as an integer, most-significant first.
    pub fn next_bits_value(&mut self, width: u32) -> u64 {
        (0..width).fold(0u64, |acc, _| (acc << 1) | self.next_bit() as u64)
    }
}

/// Exactly `n` bits from a copy of `state`; bits left over in the final word
/// are dropped.
pub fn prng_bits(state: &PrngState, n: usize) -> BitStream {
    let mut reader = PrngBitReader::new(state.clone());
    let bits: Vec<u8> = (0..n).map(|_| reader.next_bit()).collect();
    BitStream::new(bits, Provenance::Literal)
        .expect("generator bits are binary")
        .with_provenance(Provenance::Generator {
            descriptor: crate::generator::GeneratorDescriptor::Prng(state.descriptor.clone()),
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Period {
    Exact(u64),
    ExceedsCap,
}

/// Cycle length of the state sequence from the descriptor's seed, by Floyd's
/// tortoise-and-hare. Gives up once either phase needs more than `cap` steps.
pub fn detect_period(descriptor: &PrngDescriptor, cap: u64) -> Period {
    let family = descriptor.family;
    let f = |x| advance(family, x);
    let x0 = descriptor.seed;

    let mut tortoise = f(x0);
    let mut hare = f(f(x0));
    let mut steps = 1u64;
    while tortoise != hare {
        if steps >= cap {
            return Period::ExceedsCap;
        }
        tortoise = f(tortoise);
        hare = f(f(hare));
        steps += 1;
    }

    // tortoise now sits inside the cycle; walk once around it
    let mut length = 1u64;
    let mut probe = f(tortoise);
    while probe != tortoise {
        if length >= cap {
            return Period::ExceedsCap;
        }
        probe = f(probe);
        length += 1;
    }
    Period::Exact(length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // independent brute force: first revisit of any state
    fn brute_cycle_length(a: u64, c: u64, m: u64, seed: u64) -> u64 {
        let mut seen = vec![u64::MAX; m as usize];
        let mut x = seed;
        let mut i = 0u64;
        loop {
            if seen[x as usize] != u64::MAX {
                return i - seen[x as usize];
            }
            seen[x as usize] = i;
            x = (a * x + c) % m;
            i += 1;
        }
    }

    #[test]
    fn preset_first_outputs() {
        let (_, out) = PrngState::new(PrngDescriptor::randu(1).unwrap()).step();
        assert_eq!(out, 65539);
        let (_, out) = PrngState::new(PrngDescriptor::minstd(1).unwrap()).step();
        assert_eq!(out, 16807);
    }

    #[test]
    fn step_is_a_pure_value_transition() {
        let s0 = PrngState::new(PrngDescriptor::randu(1).unwrap());
        let (s1, a) = s0.step();
        let (s1b, b) = s0.step();
        assert_eq!(a, b);
        assert_eq!(s1, s1b);
        assert_eq!(s0.emitted(), 0);
        assert_eq!(s1.emitted(), 1);
        assert_eq!(s1.state(), 65539);
    }

    #[test]
    fn full_period_lcg_visits_every_residue() {
        let mut s = PrngState::new(PrngDescriptor::lcg(5, 1, 16, 0).unwrap());
        let mut seen = [false; 16];
        for _ in 0..16 {
            let v = s.next_word();
            assert!(!seen[v as usize]);
            seen[v as usize] = true;
        }
        assert_eq!(s.next_word(), 1);
    }

    #[test]
    fn xorshift_first_output() {
        // x=1: 1^(1<<13)=8193; ^(8193>>7)=8257; ^(8257<<17)
        let expected = 8257u64 ^ (8257u64 << 17);
        assert_eq!(expected, 1_082_269_761);
        let (_, out) = PrngState::new(PrngDescriptor::xorshift64(1).unwrap()).step();
        assert_eq!(out, expected);
    }

    #[test]
    fn xorshift_rejects_zero_seed() {
        assert!(matches!(
            PrngDescriptor::xorshift64(0),
            Err(Error::InvalidSeed(_))
        ));
    }

    #[test]
    fn lcg_validation() {
        assert!(PrngDescriptor::lcg(5, 1, 1, 0).is_err());
        assert!(PrngDescriptor::lcg(16, 1, 16, 0).is_err());
        assert!(PrngDescriptor::lcg(5, 0, 16, 0).is_err());
        assert!(PrngDescriptor::lcg(5, 1, 16, 16).is_err());
        assert!(PrngDescriptor::lcg(3, 0, 1 << 63, 1).is_ok());
    }

    #[test]
    fn mix64_known_values() {
        // reference outputs of the splittable 64-bit generator seeded with 0
        let mut s = PrngState::new(PrngDescriptor::mix64(0));
        let outs: Vec<u64> = (0..4).map(|_| s.next_word()).collect();
        assert_eq!(outs[0], 0xE220_A839_7B1D_CDAF);
        assert_eq!(outs[1], 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(outs[2], 0x06C4_5D18_8009_454F);
        assert_eq!(outs[3], 0xF88B_B8A8_724C_81EC);
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(outs[i], outs[j]);
            }
        }
    }

    #[test]
    fn determinism() {
        for d in [
            PrngDescriptor::mix64(7),
            PrngDescriptor::xorshift64(7).unwrap(),
            PrngDescriptor::randu(7).unwrap(),
        ] {
            let a = prng_bits(&PrngState::new(d.clone()), 1000);
            let b = prng_bits(&PrngState::new(d), 1000);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn minstd_never_outputs_zero() {
        let mut s = PrngState::new(PrngDescriptor::minstd(1).unwrap());
        for _ in 0..1_000_000 {
            assert_ne!(s.next_word(), 0);
        }
    }

    #[test]
    fn randu_top_bits() {
        // 65539 as a 31-bit word, first 16 characters
        let word = format!("{:031b}", 65539u64);
        let expected: Vec<u8> = word[..16].bytes().map(|c| c - b'0').collect();
        let bits = prng_bits(&PrngState::new(PrngDescriptor::randu(1).unwrap()), 16);
        assert_eq!(bits.bits(), expected.as_slice());
        assert_eq!(
            bits.bits(),
            &[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0]
        );
        let s = crate::stream::bits_to_symbols(&bits, 2).unwrap();
        assert_eq!(
            s.symbols().iter().map(|&v| v as u8).collect::<Vec<_>>(),
            bits.bits()
        );
    }

    #[test]
    fn prng_bits_lengths() {
        let s = PrngState::new(PrngDescriptor::mix64(1));
        assert!(prng_bits(&s, 0).is_empty());
        assert_eq!(prng_bits(&s, 777).len(), 777);
    }

    #[test]
    fn minstd_uses_30_top_bits() {
        let d = PrngDescriptor::minstd(1).unwrap();
        assert_eq!(d.word_bits(), 31);
        assert_eq!(d.usable_bits(), 30);
        let mut s = PrngState::new(d);
        assert_eq!(s.next_top(), 16807 >> 1);
    }

    #[test]
    fn segments_use_top_bits() {
        let mut s = PrngState::new(PrngDescriptor::lcg(5, 1, 16, 0).unwrap());
        // outputs 1, 6, 15, 12 -> floor(4 * w / 16)
        let seg = s.segments(4, 4).unwrap();
        assert_eq!(seg.symbols(), &[0, 1, 3, 3]);
    }

    #[test]
    fn segment_imbalance_is_bounded() {
        // m = 16, q = 3: counts over one full period differ by at most 1
        let q = 3u32;
        let mut s = PrngState::new(PrngDescriptor::lcg(5, 1, 16, 0).unwrap());
        let mut counts = [0u32; 3];
        for _ in 0..16 {
            counts[s.next_segment(q) as usize] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
        assert_eq!(counts.iter().sum::<u32>(), 16);
    }

    #[test]
    fn period_examples() {
        for seed in 0..16 {
            let d = PrngDescriptor::lcg(5, 1, 16, seed).unwrap();
            assert_eq!(detect_period(&d, 100), Period::Exact(16));
        }
        let d = PrngDescriptor::lcg(1, 0, 7, 3).unwrap();
        assert_eq!(detect_period(&d, 10), Period::Exact(1));
        let d = PrngDescriptor::randu(1).unwrap();
        assert_eq!(detect_period(&d, 1000), Period::ExceedsCap);
    }

    #[test]
    fn randu_seed_not_revisited_within_1000_steps() {
        let mut s = PrngState::new(PrngDescriptor::randu(1).unwrap());
        for _ in 0..1000 {
            assert_ne!(s.next_word(), 1);
        }
    }

    #[test]
    fn hull_dobell_small_moduli() {
        for k in 1..=8u32 {
            let m = 1u64 << k;
            for a in 0..m {
                for c in 0..m {
                    let seed = if c == 0 { 1 } else { 0 };
                    if seed >= m {
                        continue;
                    }
                    let full = c % 2 == 1 && a % 4 == 1;
                    let len = brute_cycle_length(a, c, m, seed);
                    assert_eq!(len == m, full, "a={a} c={c} m={m}");
                }
            }
        }
    }

    #[test]
    fn descriptor_json_forms() {
        let d: PrngDescriptor = serde_json::from_str(r#"{"preset":"randu","seed":1}"#).unwrap();
        assert_eq!(d, PrngDescriptor::randu(1).unwrap());
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("\"a\":65539"));
        let back: PrngDescriptor = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);

        let d: PrngDescriptor =
            serde_json::from_str(r#"{"family":"lcg","a":5,"c":1,"modulus":16,"seed":0}"#).unwrap();
        assert_eq!(d, PrngDescriptor::lcg(5, 1, 16, 0).unwrap());
        assert!(
            serde_json::from_str::<PrngDescriptor>(r#"{"family":"xorshift64","seed":0}"#).is_err()
        );
        assert!(
            serde_json::from_str::<PrngDescriptor>(r#"{"preset":"randu","a":3,"seed":1}"#).is_err()
        );
    }

    proptest! {
        #[test]
        fn floyd_matches_brute_force(k in 1u32..=16, a in any::<u64>(), c in any::<u64>(), seed in any::<u64>()) {
            let m = 1u64 << k;
            let (a, c) = (a % m, c % m);
            let seed = if c == 0 { (seed % (m - 1).max(1)) + 1 } else { seed % m };
            prop_assume!(seed < m);
            let d = PrngDescriptor::lcg(a, c, m, seed).unwrap();
            let brute = brute_cycle_length(a, c, m, seed);
            match detect_period(&d, m + 1) {
                Period::Exact(p) => prop_assert_eq!(brute % p, 0),
                Period::ExceedsCap => prop_assert!(false, "cap m+1 always suffices"),
            }
        }

        #[test]
        fn floyd_matches_brute_force_odd_moduli(m in 2u64..=65536, a in any::<u64>(), c in any::<u64>(), seed in any::<u64>()) {
            let (a, c) = (a % m, c % m);
            let seed = if c == 0 { (seed % (m - 1)) + 1 } else { seed % m };
            let d = PrngDescriptor::lcg(a, c, m, seed).unwrap();
            let brute = brute_cycle_length(a, c, m, seed);
            prop_assert_eq!(detect_period(&d, m + 1), Period::Exact(brute));
        }

        #[test]
        fn xorshift_never_hits_zero(seed in 1u64..) {
            let mut s = PrngState::new(PrngDescriptor::xorshift64(seed).unwrap());
            for _ in 0..64 {
                prop_assert_ne!(s.next_word(), 0);
            }
        }
    }
}
