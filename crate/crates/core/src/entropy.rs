//! Physical and recorded entropy sources.

use serde::{Deserialize, Serialize};
use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::generator::GeneratorDescriptor;
use crate::io::{self, BitFileMode};
use crate::stream::{BitStream, Provenance};

const OS_BUFFER_BYTES: usize = 4096;

fn default_spin() -> u32 {
    64
}

fn default_resolution() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EntropySourceDescriptor {
    /// The operating system's conditioned entropy pool.
    OsEntropy,
    /// Least significant bit of loop timing deltas, von Neumann debiased.
    TimingJitter {
        /// Busy-loop iterations per timing probe.
        #[serde(default = "default_spin")]
        probe_count: u32,
        /// Deltas are divided by this many nanoseconds before the LSB is taken.
        #[serde(default = "default_resolution")]
        clock_resolution_ns: u64,
    },
    /// A recorded bit stream file, replayed verbatim.
    FileReplay {
        path: PathBuf,
        #[serde(default)]
        mode: BitFileMode,
    },
    /// A fixed byte pattern repeated forever.
    DeterministicTest { pattern: Vec<u8> },
}

impl EntropySourceDescriptor {
    pub fn timing_jitter() -> Self {
        EntropySourceDescriptor::TimingJitter {
            probe_count: default_spin(),
            clock_resolution_ns: default_resolution(),
        }
    }

    pub fn file_replay(path: impl Into<PathBuf>, mode: BitFileMode) -> Self {
        EntropySourceDescriptor::FileReplay {
            path: path.into(),
            mode,
        }
    }

    pub fn pattern(bytes: &[u8]) -> Self {
        EntropySourceDescriptor::DeterministicTest {
            pattern: bytes.to_vec(),
        }
    }

    /// Whether two handles over this descriptor yield identical streams.
    pub fn is_reproducible(&self) -> bool {
        matches!(
            self,
            EntropySourceDescriptor::FileReplay { .. }
                | EntropySourceDescriptor::DeterministicTest { .. }
        )
    }
}

/// Unconditioned timing measurements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSampleBlock {
    samples: Vec<u64>,
    width: u32,
}

impl RawSampleBlock {
    pub fn new(samples: Vec<u64>, width: u32) -> Result<Self> {
        if width < 64 {
            if let Some(s) = samples.iter().find(|&&s| s >> width != 0) {
                return Err(Error::Domain(format!(
                    "sample {s} does not fit in {width} bits"
                )));
            }
        }
        Ok(Self { samples, width })
    }

    pub fn samples(&self) -> &[u64] {
        &self.samples
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// The jitter conditioning pipeline: LSB of each sample, then von Neumann.
    pub fn condition(&self) -> BitStream {
        let lsbs = BitStream::from_bools(self.samples.iter().map(|&s| s & 1 == 1));
        von_neumann_debias(&lsbs)
    }
}

/// Pairwise extractor: `01 -> 1`, `10 -> 0`, equal pairs dropped. A trailing
/// odd bit is ignored.
pub fn von_neumann_debias(raw: &BitStream) -> BitStream {
    let bits = raw.bits();
    BitStream::from_bools(
        bits.chunks_exact(2)
            .filter(|pair| pair[0] != pair[1])
            .map(|pair| pair[1] == 1),
    )
    .with_provenance(raw.provenance().clone())
}

struct JitterProbe {
    spin: u32,
    resolution: u64,
    pending: Vec<u8>,
}

impl JitterProbe {
    fn sample(&self) -> u64 {
        let start = Instant::now();
        let mut acc = 0u64;
        for i in 0..self.spin {
            acc = black_box(acc.wrapping_mul(6364136223846793005).wrapping_add(i as u64));
        }
        black_box(acc);
        start.elapsed().as_nanos() as u64 / self.resolution
    }

    fn raw_block(&self, count: usize) -> RawSampleBlock {
        RawSampleBlock {
            samples: (0..count).map(|_| self.sample()).collect(),
            width: 64,
        }
    }

    fn refill(&mut self) {
        while self.pending.is_empty() {
            let conditioned = self.raw_block(1024).condition();
            // reversed so pop() yields bits in production order
            self.pending.extend(conditioned.bits().iter().rev());
        }
    }
}

enum Inner {
    Os { buf: Vec<u8>, bit: usize },
    Jitter(JitterProbe),
    Replay { bits: Vec<u8>, pos: usize },
    Pattern { pattern: Vec<u8>, bit: usize },
}

/// A single-consumer handle over an entropy source.
pub struct EntropySource {
    descriptor: EntropySourceDescriptor,
    inner: Inner,
    delivered: u64,
    recording: Option<Vec<u8>>,
}

impl std::fmt::Debug for EntropySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EntropySource")
            .field("descriptor", &self.descriptor)
            .field("delivered", &self.delivered)
            .finish()
    }
}

fn os_fill(buf: &mut [u8]) -> Result<()> {
    getrandom::fill(buf).map_err(|e| Error::SourceUnavailable(format!("os entropy: {e}")))
}

pub fn open_source(descriptor: &EntropySourceDescriptor) -> Result<EntropySource> {
    let inner = match descriptor {
        EntropySourceDescriptor::OsEntropy => {
            let mut buf = vec![0u8; OS_BUFFER_BYTES];
            os_fill(&mut buf)?;
            Inner::Os { buf, bit: 0 }
        }
        EntropySourceDescriptor::TimingJitter {
            probe_count,
            clock_resolution_ns,
        } => {
            if *clock_resolution_ns == 0 {
                return Err(Error::InvalidDescriptor(
                    "clock_resolution_ns must be positive".into(),
                ));
            }
            Inner::Jitter(JitterProbe {
                spin: *probe_count,
                resolution: *clock_resolution_ns,
                pending: Vec::new(),
            })
        }
        EntropySourceDescriptor::FileReplay { path, mode } => {
            if !path.is_file() {
                return Err(Error::SourceUnavailable(format!(
                    "replay file {} not found",
                    path.display()
                )));
            }
            let bits = io::read_bits(path, Some(*mode))
                .map_err(|e| match e {
                    Error::Io(io) => Error::SourceUnavailable(format!("{}: {io}", path.display())),
                    other => other,
                })?
                .into_bits();
            Inner::Replay { bits, pos: 0 }
        }
        EntropySourceDescriptor::DeterministicTest { pattern } => {
            if pattern.is_empty() {
                return Err(Error::InvalidDescriptor(
                    "deterministic-test pattern must not be empty".into(),
                ));
            }
            Inner::Pattern {
                pattern: pattern.clone(),
                bit: 0,
            }
        }
    };
    Ok(EntropySource {
        descriptor: descriptor.clone(),
        inner,
        delivered: 0,
        recording: None,
    })
}

impl EntropySource {
    pub fn descriptor(&self) -> &EntropySourceDescriptor {
        &self.descriptor
    }

    /// Total bits handed out so far.
    pub fn bits_delivered(&self) -> u64 {
        self.delivered
    }

    #[inline]
    pub fn next_bit(&mut self) -> Result<u8> {
        let bit = match &mut self.inner {
            Inner::Os { buf, bit } => {
                if *bit == buf.len() * 8 {
                    os_fill(buf)?;
                    *bit = 0;
                }
                let b = (buf[*bit / 8] >> (7 - *bit % 8)) & 1;
                *bit += 1;
                b
            }
            Inner::Jitter(probe) => {
                probe.refill();
                probe.pending.pop().expect("refilled")
            }
            Inner::Replay { bits, pos } => {
                let Some(&b) = bits.get(*pos) else {
                    return Err(Error::ExhaustedSource {
                        requested: self.delivered + 1,
                        delivered: self.delivered,
                    });
                };
                *pos += 1;
                b
            }
            Inner::Pattern { pattern, bit } => {
                let b = (pattern[*bit / 8] >> (7 - *bit % 8)) & 1;
                *bit = (*bit + 1) % (pattern.len() * 8);
                b
            }
        };
        self.delivered += 1;
        if let Some(rec) = &mut self.recording {
            rec.push(bit);
        }
        Ok(bit)
    }

    /// Next `width` bits (at most 64) as an integer, most-significant first.
    pub fn next_value(&mut self, width: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.next_bit()? as u64;
        }
        Ok(v)
    }

    /// Exactly `n` bits. Jitter output is always conditioned; other kinds are
    /// returned verbatim. A replay that runs dry is an error.
    pub fn next_bits(&mut self, n: usize) -> Result<BitStream> {
        let start = self.delivered;
        let mut bits = Vec::with_capacity(n);
        for _ in 0..n {
            match self.next_bit() {
                Ok(b) => bits.push(b),
                Err(Error::ExhaustedSource { delivered, .. }) => {
                    return Err(Error::ExhaustedSource {
                        requested: n as u64,
                        delivered: delivered - start,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(
            BitStream::new(bits, Provenance::Literal)?.with_provenance(Provenance::Generator {
                descriptor: GeneratorDescriptor::Entropy(self.descriptor.clone()),
            }),
        )
    }

    /// Starts keeping a copy of every bit delivered from now on.
    pub fn start_recording(&mut self) {
        self.recording.get_or_insert_with(Vec::new);
    }

    /// Bits delivered since [`EntropySource::start_recording`], if recording.
    pub fn take_recording(&mut self) -> Option<BitStream> {
        self.recording.take().map(|bits| {
            BitStream::from_bits(&bits).with_provenance(Provenance::Generator {
                descriptor: GeneratorDescriptor::Entropy(self.descriptor.clone()),
            })
        })
    }

    /// Raw, unconditioned timing samples. Only meaningful for timing-jitter
    /// sources; these are never emitted through [`EntropySource::next_bits`].
    pub fn sample_raw(&mut self, count: usize) -> Result<RawSampleBlock> {
        match &self.inner {
            Inner::Jitter(probe) => Ok(probe.raw_block(count)),
            _ => Err(Error::Domain(
                "raw samples are only available from timing-jitter sources".into(),
            )),
        }
    }
}
