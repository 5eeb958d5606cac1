//! Minimal RIFF/WAVE codec: integer PCM (16/24/32-bit) and IEEE float
//! (32/64-bit), including the `WAVE_FORMAT_EXTENSIBLE` wrapper.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomically, Signal};
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WavEncoding {
    Pcm16,
    Pcm24,
    Pcm32,
    Float32,
    Float64,
}

impl WavEncoding {
    fn format_tag(self) -> u16 {
        match self {
            WavEncoding::Float32 | WavEncoding::Float64 => FORMAT_FLOAT,
            _ => FORMAT_PCM,
        }
    }

    fn bits(self) -> u16 {
        match self {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Pcm24 => 24,
            WavEncoding::Pcm32 | WavEncoding::Float32 => 32,
            WavEncoding::Float64 => 64,
        }
    }

    fn from_header(tag: u16, bits: u16) -> Result<Self> {
        match (tag, bits) {
            (FORMAT_PCM, 16) => Ok(WavEncoding::Pcm16),
            (FORMAT_PCM, 24) => Ok(WavEncoding::Pcm24),
            (FORMAT_PCM, 32) => Ok(WavEncoding::Pcm32),
            (FORMAT_FLOAT, 32) => Ok(WavEncoding::Float32),
            (FORMAT_FLOAT, 64) => Ok(WavEncoding::Float64),
            _ => Err(Error::UnsupportedEncoding(format!(
                "WAV format tag {tag} with {bits} bits per sample"
            ))),
        }
    }
}

struct FormatChunk {
    encoding: WavEncoding,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_format(chunk: &[u8], unreadable: &dyn Fn(&str) -> Error) -> Result<FormatChunk> {
    if chunk.len() < 16 {
        return Err(unreadable("fmt chunk too short"));
    }
    let mut tag = u16_at(chunk, 0);
    let channels = u16_at(chunk, 2);
    let sample_rate = u32_at(chunk, 4);
    let block_align = u16_at(chunk, 12);
    let bits = u16_at(chunk, 14);
    if tag == FORMAT_EXTENSIBLE {
        if chunk.len() < 26 {
            return Err(unreadable("extensible fmt chunk too short"));
        }
        // First two bytes of the sub-format GUID carry the real format tag.
        tag = u16_at(chunk, 24);
    }
    let encoding = WavEncoding::from_header(tag, bits)?;
    if channels == 0 || sample_rate == 0 {
        return Err(unreadable("zero channels or zero sample rate"));
    }
    if block_align as usize != channels as usize * bits as usize / 8 {
        return Err(unreadable("block alignment disagrees with channel layout"));
    }
    Ok(FormatChunk {
        encoding,
        channels,
        sample_rate,
        block_align,
    })
}

fn decode(encoding: WavEncoding, b: &[u8]) -> f64 {
    match encoding {
        WavEncoding::Pcm16 => i16::from_le_bytes([b[0], b[1]]) as f64 / 32_768.0,
        WavEncoding::Pcm24 => {
            let raw = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            raw as f64 / 8_388_608.0
        }
        WavEncoding::Pcm32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
        WavEncoding::Float32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        WavEncoding::Float64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
    }
}

/// Load channel 0 of a WAV file.
pub fn load_wav(path: &Path) -> Result<Signal> {
    load_wav_channel(path, 0)
}

/// Load one channel of a WAV file; integer formats are scaled into `[-1, 1)`.
pub fn load_wav_channel(path: &Path, channel: usize) -> Result<Signal> {
    let bytes = fs::read(path).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let unreadable = |reason: &str| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(unreadable("missing RIFF/WAVE header"));
    }

    let mut format = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(&bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => format = Some(parse_format(body, &unreadable)?),
            // A data chunk that claims more bytes than the file holds is read
            // up to the last complete frame.
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }

    let format = format.ok_or_else(|| unreadable("no fmt chunk"))?;
    let data = data.ok_or_else(|| unreadable("no data chunk"))?;
    if channel >= format.channels as usize {
        return Err(Error::InvalidParameter(format!(
            "channel {channel} requested but the file has {} channel(s)",
            format.channels
        )));
    }
    let block = format.block_align as usize;
    let width = format.encoding.bits() as usize / 8;
    let n_frames = data.len() / block;
    if n_frames == 0 {
        return Err(Error::Empty(format!(
            "{} has no audio frames",
            path.display()
        )));
    }
    let samples = (0..n_frames)
        .map(|f| {
            let at = f * block + channel * width;
            decode(format.encoding, &data[at..at + width])
        })
        .collect();
    Signal::new(samples, format.sample_rate as f64)
}

fn quantize(x: f64, bits: u32) -> i64 {
    let full = (1i64 << (bits - 1)) as f64;
    (x * full).round().clamp(-full, full - 1.0) as i64
}

/// Write a mono WAV file.
pub fn save_wav(signal: &Signal, path: &Path, encoding: WavEncoding) -> Result<()> {
    let rate = signal.sample_rate_hz().round();
    if rate < 1.0 || rate > u32::MAX as f64 {
        return Err(Error::InvalidParameter(format!(
            "sample rate {} cannot be stored in a WAV header",
            signal.sample_rate_hz()
        )));
    }
    let rate = rate as u32;
    let width = encoding.bits() as usize / 8;
    let data_len = signal.len() * width;
    let is_float = encoding.format_tag() == FORMAT_FLOAT;
    let fact_len = if is_float { 12 } else { 0 };

    let mut out = Vec::with_capacity(44 + fact_len + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((4 + 24 + fact_len + 8 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&encoding.format_tag().to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * width as u32).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&encoding.bits().to_le_bytes());
    if is_float {
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(signal.len() as u32).to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &x in signal.samples() {
        match encoding {
            WavEncoding::Pcm16 => out.extend_from_slice(&(quantize(x, 16) as i16).to_le_bytes()),
            WavEncoding::Pcm24 => {
                out.extend_from_slice(&(quantize(x, 24) as i32).to_le_bytes()[..3])
            }
            WavEncoding::Pcm32 => out.extend_from_slice(&(quantize(x, 32) as i32).to_le_bytes()),
            WavEncoding::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            WavEncoding::Float64 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    write_atomically(path, &out)
}
