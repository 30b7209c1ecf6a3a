//! Bit stream files and their JSON sidecars.
//!
//! Raw files hold packed bytes, most-significant-bit first; a final partial
//! byte is zero-padded and the true bit count lives in the sidecar. ASCII
//! files hold `'0'`/`'1'` characters with any number of `\n`/`\r`.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::stream::{BitStream, Provenance, SymbolStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BitFileMode {
    #[default]
    Raw,
    Ascii,
}

/// Stream-level part of a sidecar record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub provenance: Provenance,
    pub mode: BitFileMode,
    pub bit_count: u64,
    pub discarded_bits: u64,
}

impl StreamMetadata {
    pub fn for_stream(bits: &BitStream, mode: BitFileMode) -> Self {
        Self {
            provenance: bits.provenance().clone(),
            mode,
            bit_count: bits.len() as u64,
            discarded_bits: bits.discarded_bits(),
        }
    }
}

/// `<path>.meta.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn encode_ascii(bits: &BitStream) -> Vec<u8> {
    bits.bits().iter().map(|&b| b'0' + b).collect()
}

pub fn decode_ascii(data: &[u8]) -> Result<BitStream> {
    let mut bits = Vec::with_capacity(data.len());
    for (offset, &byte) in data.iter().enumerate() {
        match byte {
            b'0' => bits.push(0),
            b'1' => bits.push(1),
            b'\n' | b'\r' => {}
            _ => return Err(Error::Parse { offset, byte }),
        }
    }
    BitStream::new(bits, Provenance::Literal)
}

pub fn encode(bits: &BitStream, mode: BitFileMode) -> Vec<u8> {
    match mode {
        BitFileMode::Raw => bits.to_msb_bytes(),
        BitFileMode::Ascii => encode_ascii(bits),
    }
}

/// Decodes a file body. For raw data, `bit_count` trims the padding of the
/// final byte; without it every byte contributes eight bits.
pub fn decode(data: &[u8], mode: BitFileMode, bit_count: Option<u64>) -> Result<BitStream> {
    let bits = match mode {
        BitFileMode::Raw => {
            let n = bit_count.map_or(data.len() * 8, |n| n as usize);
            BitStream::from_msb_bytes(data, n)?
        }
        BitFileMode::Ascii => {
            let b = decode_ascii(data)?;
            match bit_count {
                Some(n) if (n as usize) < b.len() => BitStream::from_bits(&b.bits()[..n as usize]),
                _ => b,
            }
        }
    };
    Ok(bits)
}

/// Reads `stream.bit_count` and `stream.mode` from a sidecar next to `path`,
/// if there is one.
pub fn read_sidecar_stream(path: &Path) -> Option<StreamMetadata> {
    let text = fs::read_to_string(sidecar_path(path)).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    serde_json::from_value(value.get("stream")?.clone()).ok()
}

/// Loads a bit stream file. The sidecar, when present, supplies the exact bit
/// count; an explicit `mode` overrides the sidecar's.
pub fn read_bits(path: &Path, mode: Option<BitFileMode>) -> Result<BitStream> {
    let data = fs::read(path)?;
    let meta = read_sidecar_stream(path);
    let mode = mode.or(meta.as_ref().map(|m| m.mode)).unwrap_or_default();
    let bit_count = meta.filter(|m| m.mode == mode).map(|m| m.bit_count);
    Ok(
        decode(&data, mode, bit_count)?.with_provenance(Provenance::File {
            path: path.to_path_buf(),
        }),
    )
}

/// Writes `bytes` to `<path>.partial` and renames it into place, so a failed
/// write never leaves a truncated file under the requested name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    fs::write(&partial, bytes)?;
    fs::rename(&partial, path)?;
    Ok(())
}

pub fn write_bits(path: &Path, bits: &BitStream, mode: BitFileMode) -> Result<()> {
    write_atomic(path, &encode(bits, mode))
}

/// Newline-separated decimal symbols.
pub fn encode_symbols(s: &SymbolStream) -> Vec<u8> {
    let mut out = String::with_capacity(s.len() * 3);
    for sym in s.symbols() {
        out.push_str(&sym.to_string());
        out.push('\n');
    }
    out.into_bytes()
}

pub fn decode_symbols(text: &str, q: u32) -> Result<SymbolStream> {
    let mut symbols = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: u32 = line.parse().map_err(|e| Error::SymbolParse {
            line: i + 1,
            message: format!("{e}"),
        })?;
        symbols.push(v);
    }
    SymbolStream::new(q, symbols)
}
