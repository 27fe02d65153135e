//! Minimal RIFF/WAVE PCM16 codec.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use enf_core::SampleBuffer;

const PCM: u16 = 1;
const EXTENSIBLE: u16 = 0xfffe;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Format {
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Decode a PCM16 WAV held in memory. Multi-channel audio is averaged to
/// mono; samples are scaled by 1/32768.
pub fn decode_wav(bytes: &[u8]) -> Result<SampleBuffer> {
    if bytes.len() < 12 {
        bail!("byte 0: file too short for a RIFF header ({} bytes)", bytes.len());
    }
    if &bytes[0..4] != b"RIFF" {
        bail!("byte 0: missing RIFF tag");
    }
    if &bytes[8..12] != b"WAVE" {
        bail!("byte 8: missing WAVE tag");
    }

    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<(usize, usize)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if id == b"fmt " {
            if size < 16 || body + size > bytes.len() {
                bail!("byte {pos}: truncated fmt chunk");
            }
            let mut tag = u16_at(bytes, body);
            if tag == EXTENSIBLE && size >= 26 {
                tag = u16_at(bytes, body + 24);
            }
            if tag != PCM {
                bail!("byte {body}: unsupported codec tag {tag:#06x}, only PCM is read");
            }
            format = Some(Format {
                channels: u16_at(bytes, body + 2),
                sample_rate: u32_at(bytes, body + 4),
                bits: u16_at(bytes, body + 14),
            });
        } else if id == b"data" {
            if body + size > bytes.len() {
                bail!(
                    "byte {pos}: data chunk declares {size} bytes but only {} remain",
                    bytes.len() - body
                );
            }
            data = Some((body, size));
            break;
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }

    let Some(fmt) = format else { bail!("byte 12: no fmt chunk before the data") };
    let Some((start, len)) = data else { bail!("byte {pos}: no data chunk") };
    if fmt.bits != 16 {
        bail!("byte 34: {}-bit samples are not supported, expected 16", fmt.bits);
    }
    if fmt.channels == 0 || fmt.sample_rate == 0 {
        bail!("byte 22: zero channels or zero sample rate");
    }
    let ch = fmt.channels as usize;
    let frame_bytes = 2 * ch;
    if len % frame_bytes != 0 {
        bail!("byte {start}: data length {len} is not a whole number of {ch}-channel frames");
    }
    let samples: Vec<f64> = bytes[start..start + len]
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f64 = frame.chunks_exact(2).map(|s| i16::from_le_bytes([s[0], s[1]]) as f64).sum();
            sum / (ch as f64 * 32768.0)
        })
        .collect();
    Ok(SampleBuffer::new(samples, fmt.sample_rate as f64)?)
}

pub fn read_wav(path: &Path) -> Result<SampleBuffer> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_wav(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// Encode mono PCM16. Samples are clipped to the representable range.
pub fn encode_wav(x: &SampleBuffer) -> Result<Vec<u8>> {
    let fs = x.sample_rate_hz();
    if fs.fract() != 0.0 || fs < 1.0 || fs > u32::MAX as f64 {
        bail!("sample rate {fs} Hz cannot be stored in a WAV header");
    }
    let rate = fs as u32;
    let data_len = 2 * x.len();
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(2 * rate).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in x.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}
