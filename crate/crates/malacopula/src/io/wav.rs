//! Mono 16-bit PCM WAV reading and writing.
//!
//! The quantization convention is symmetric about zero: samples are scaled
//! by 32767 on write and divided by 32767 on read, so write∘read is the
//! identity on every representable file.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Signal;

const PCM_FULL_SCALE: f64 = 32767.0;

/// Writes a signal as mono PCM s16le. Samples are clamped to [−1, 1]
/// before quantization.
pub fn write_wav(path: &Path, signal: &Signal) -> Result<()> {
    let data_len = signal.len() * 2;
    let mut bytes = Vec::with_capacity(44 + data_len);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&signal.sample_rate_hz().to_le_bytes());
    bytes.extend_from_slice(&(signal.sample_rate_hz() * 2).to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data_len as u32).to_le_bytes());
    for v in signal.samples() {
        let q = (v.clamp(-1.0, 1.0) * PCM_FULL_SCALE).round() as i32;
        let q = q.clamp(i16::MIN as i32, i16::MAX as i32) as i16;
        bytes.extend_from_slice(&q.to_le_bytes());
    }

    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Reads a mono PCM s16le WAV file. Other encodings, channel counts, or
/// bit depths are format errors.
pub fn read_wav(path: &Path) -> Result<Signal> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    let fail = |msg: &str| Error::format(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fail("not a RIFF/WAVE file"));
    }

    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let chunk_id = &bytes[at..at + 4];
        let chunk_len = read_u32(&bytes, at + 4) as usize;
        let body_start = at + 8;
        if body_start + chunk_len > bytes.len() {
            return Err(fail("chunk overruns file"));
        }
        match chunk_id {
            b"fmt " => {
                if chunk_len < 16 {
                    return Err(fail("fmt chunk too short"));
                }
                let format = read_u16(&bytes, body_start);
                let channels = read_u16(&bytes, body_start + 2);
                let rate = read_u32(&bytes, body_start + 4);
                let bits = read_u16(&bytes, body_start + 14);
                if format != 1 {
                    return Err(fail("only PCM encoding is supported"));
                }
                if channels != 1 {
                    return Err(fail("only mono audio is supported"));
                }
                if bits != 16 {
                    return Err(fail("only 16-bit samples are supported"));
                }
                sample_rate = Some(rate);
            }
            b"data" => data = Some(&bytes[body_start..body_start + chunk_len]),
            _ => {}
        }
        // Chunks are word-aligned; odd lengths carry a pad byte.
        at = body_start + chunk_len + (chunk_len & 1);
    }

    let sample_rate = sample_rate.ok_or_else(|| fail("missing fmt chunk"))?;
    let data = data.ok_or_else(|| fail("missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(fail("data chunk has a partial sample"));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|pair| i16::from_le_bytes([pair[0], pair[1]]) as f64 / PCM_FULL_SCALE)
        .collect();
    if samples.is_empty() {
        return Err(fail("empty data chunk"));
    }
    Signal::new(samples, sample_rate)
}
