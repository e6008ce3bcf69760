//! Minimal RIFF/WAVE reader and writer.
//!
//! Reads 16/24-bit integer PCM and 32-bit IEEE float, including the
//! `WAVE_FORMAT_EXTENSIBLE` wrapper around those codecs. Multi-channel data is
//! averaged to mono. Integer codes are normalized by `2^(bits-1)`, so the
//! most negative code maps to exactly -1.0.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Signal;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Sample encoding used when writing a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    F32,
}

impl BitDepth {
    pub fn bits(self) -> u16 {
        match self {
            BitDepth::Pcm16 => 16,
            BitDepth::Pcm24 => 24,
            BitDepth::F32 => 32,
        }
    }
}

impl std::str::FromStr for BitDepth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "16" => Ok(BitDepth::Pcm16),
            "24" => Ok(BitDepth::Pcm24),
            "f32" | "32f" | "float" => Ok(BitDepth::F32),
            other => Err(format!("unknown bit depth '{other}' (expected 16, 24 or f32)")),
        }
    }
}

/// Outcome of [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WriteReport {
    /// Number of samples that fell outside `[-1, 1]` and were saturated.
    pub clipped: usize,
}

fn codec_name(tag: u16) -> String {
    match tag {
        0x0002 => "Microsoft ADPCM (0x0002)".into(),
        0x0006 => "A-law (0x0006)".into(),
        0x0007 => "mu-law (0x0007)".into(),
        0x0011 => "IMA ADPCM (0x0011)".into(),
        0x0055 => "MPEG layer 3 (0x0055)".into(),
        other => format!("format tag 0x{other:04X}"),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.bytes.len() as u64,
                msg: format!(
                    "file truncated while reading {what} ({n} bytes needed at offset {})",
                    self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[derive(Debug, Clone, Copy)]
enum Codec {
    Int16,
    Int24,
    Float32,
}

#[derive(Debug, Clone, Copy)]
struct Format {
    codec: Codec,
    channels: u16,
    sample_rate: u32,
}

fn parse_fmt(body: &[u8], offset: usize) -> Result<Format> {
    let mut c = Cursor { bytes: body, pos: 0 };
    let parse_err = |e: Error| match e {
        Error::Parse { msg, .. } => Error::Parse {
            offset: (offset + body.len()) as u64,
            msg,
        },
        other => other,
    };
    let mut tag = c.u16("fmt format tag").map_err(parse_err)?;
    let channels = c.u16("fmt channel count").map_err(parse_err)?;
    let sample_rate = c.u32("fmt sample rate").map_err(parse_err)?;
    let _byte_rate = c.u32("fmt byte rate").map_err(parse_err)?;
    let _block_align = c.u16("fmt block align").map_err(parse_err)?;
    let bits = c.u16("fmt bits per sample").map_err(parse_err)?;
    if tag == FORMAT_EXTENSIBLE {
        let cb = c.u16("extensible cbSize").map_err(parse_err)?;
        if cb < 22 {
            return Err(Error::Parse {
                offset: (offset + c.pos) as u64,
                msg: format!("extensible fmt chunk too short (cbSize {cb})"),
            });
        }
        let _valid_bits = c.u16("extensible valid bits").map_err(parse_err)?;
        let _mask = c.u32("extensible channel mask").map_err(parse_err)?;
        tag = c.u16("extensible sub-format").map_err(parse_err)?;
    }
    if channels == 0 {
        return Err(Error::Parse {
            offset: (offset + 2) as u64,
            msg: "channel count is zero".into(),
        });
    }
    if sample_rate == 0 {
        return Err(Error::Parse {
            offset: (offset + 4) as u64,
            msg: "sample rate is zero".into(),
        });
    }
    let codec = match (tag, bits) {
        (FORMAT_PCM, 16) => Codec::Int16,
        (FORMAT_PCM, 24) => Codec::Int24,
        (FORMAT_IEEE_FLOAT, 32) => Codec::Float32,
        (FORMAT_PCM, b) => return Err(Error::UnsupportedFormat(format!("PCM {b}-bit"))),
        (FORMAT_IEEE_FLOAT, b) => return Err(Error::UnsupportedFormat(format!("IEEE float {b}-bit"))),
        (t, _) => return Err(Error::UnsupportedFormat(codec_name(t))),
    };
    Ok(Format {
        codec,
        channels,
        sample_rate,
    })
}

fn decode(data: &[u8], fmt: Format, data_offset: usize) -> Result<Vec<f64>> {
    let width = match fmt.codec {
        Codec::Int16 => 2,
        Codec::Int24 => 3,
        Codec::Float32 => 4,
    };
    let frame_bytes = width * fmt.channels as usize;
    if !data.len().is_multiple_of(frame_bytes) {
        return Err(Error::Parse {
            offset: (data_offset + data.len() - data.len() % frame_bytes) as u64,
            msg: format!("data chunk ends inside a sample frame ({frame_bytes} bytes per frame)"),
        });
    }
    let mut out = Vec::with_capacity(data.len() / frame_bytes);
    let inv_channels = 1.0 / fmt.channels as f64;
    for frame in data.chunks_exact(frame_bytes) {
        let mut acc = 0.0;
        for s in frame.chunks_exact(width) {
            acc += match fmt.codec {
                Codec::Int16 => i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
                Codec::Int24 => {
                    let v = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
                    v as f64 / 8_388_608.0
                }
                Codec::Float32 => f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
            };
        }
        out.push(if fmt.channels == 1 { acc } else { acc * inv_channels });
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Parse {
            offset: (data_offset + i * frame_bytes) as u64,
            msg: "non-finite float sample".into(),
        });
    }
    Ok(out)
}

/// Parses an in-memory WAV image.
pub fn parse_wav(bytes: &[u8]) -> Result<Signal> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "RIFF tag")? != b"RIFF" {
        return Err(Error::Parse {
            offset: 0,
            msg: "missing RIFF tag".into(),
        });
    }
    c.u32("RIFF size")?;
    if c.take(4, "WAVE tag")? != b"WAVE" {
        return Err(Error::Parse {
            offset: 8,
            msg: "missing WAVE tag".into(),
        });
    }

    let mut fmt: Option<Format> = None;
    loop {
        if c.pos == bytes.len() {
            return Err(Error::Parse {
                offset: c.pos as u64,
                msg: "no data chunk found".into(),
            });
        }
        let id: [u8; 4] = c.take(4, "chunk id")?.try_into().unwrap();
        let size = c.u32("chunk size")? as usize;
        let body_start = c.pos;
        if &id == b"data" {
            let Some(f) = fmt else {
                return Err(Error::Parse {
                    offset: (body_start - 8) as u64,
                    msg: "data chunk precedes fmt chunk".into(),
                });
            };
            let available = bytes.len() - body_start;
            if size > available {
                return Err(Error::Parse {
                    offset: bytes.len() as u64,
                    msg: format!("data chunk declares {size} bytes but only {available} remain (truncated file)"),
                });
            }
            let samples = decode(&bytes[body_start..body_start + size], f, body_start)?;
            return Signal::new(samples, f.sample_rate as f64);
        }
        let body = c.take(size, "chunk body")?;
        if &id == b"fmt " {
            fmt = Some(parse_fmt(body, body_start)?);
        }
        if size % 2 == 1 && c.pos < bytes.len() {
            c.pos += 1;
        }
    }
}

/// Reads a WAV file into a mono [`Signal`].
pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io("signal", path, e))?;
    parse_wav(&bytes)
}

/// Encodes a signal as a mono WAV image.
///
/// Integer depths saturate samples outside `[-1, 1]`; float output stores the
/// nearest `f32` and never clips.
pub fn encode_wav(signal: &Signal, depth: BitDepth) -> (Vec<u8>, WriteReport) {
    let n = signal.len();
    let width = depth.bits() as usize / 8;
    let data_len = n * width;
    let float = depth == BitDepth::F32;
    let fmt_len: u32 = if float { 18 } else { 16 };
    let fact_len: u32 = if float { 12 } else { 0 };
    let riff_len = 4 + (8 + fmt_len) + fact_len + 8 + data_len as u32;

    let mut out = Vec::with_capacity(riff_len as usize + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_len.to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&fmt_len.to_le_bytes());
    out.extend_from_slice(&(if float { FORMAT_IEEE_FLOAT } else { FORMAT_PCM }).to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    let rate = signal.sample_rate().round() as u32;
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * width as u32).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&depth.bits().to_le_bytes());
    if float {
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());

    let mut clipped = 0;
    for &x in signal.samples() {
        match depth {
            BitDepth::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            BitDepth::Pcm16 | BitDepth::Pcm24 => {
                if !(-1.0..=1.0).contains(&x) {
                    clipped += 1;
                }
                let scale = (1i64 << (depth.bits() - 1)) as f64;
                let code = (x * scale).round().clamp(-scale, scale - 1.0) as i32;
                let bytes = code.to_le_bytes();
                out.extend_from_slice(&bytes[..width]);
            }
        }
    }
    (out, WriteReport { clipped })
}

/// Writes `signal` as a mono WAV file.
pub fn write_wav(signal: &Signal, path: impl AsRef<Path>, depth: BitDepth) -> Result<WriteReport> {
    let path = path.as_ref();
    let (bytes, report) = encode_wav(signal, depth);
    let file = fs::File::create(path).map_err(|e| Error::io("signal", path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io("signal", path, e))?;
    Ok(report)
}
