//! Bit-exact file formats: binary waveform files, CSV exports for external
//! plotting, and JSON configs/reports.
//!
//! Waveform file layout (all multi-byte integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "LMSW"
//!      4     2  version (currently 1)
//!      6     4  sample_rate_hz
//!     10     1  sample_format_code: 0 = f32 LE, 1 = i16 LE
//!     11     1  frac_bits (integer format only; 0 for f32)
//!     12     4  frame_length
//!     16     4  frame_count
//!     20     -  payload: frame_count * frame_length samples
//! ```
//!
//! Writes go through a temp file and an atomic rename, so a reader never
//! observes a half-written file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::chain::Tap;
use crate::error::{Error, Result};
use crate::signal::Frame;

pub const WAVEFORM_MAGIC: &[u8; 4] = b"LMSW";
pub const WAVEFORM_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveformFormat {
    /// 32-bit little-endian IEEE float.
    F32,
    /// 16-bit little-endian signed integer with `frac_bits` fractional bits.
    I16 { frac_bits: u8 },
}

impl WaveformFormat {
    fn code(&self) -> u8 {
        match self {
            WaveformFormat::F32 => 0,
            WaveformFormat::I16 { .. } => 1,
        }
    }

    fn frac_bits(&self) -> u8 {
        match self {
            WaveformFormat::F32 => 0,
            WaveformFormat::I16 { frac_bits } => *frac_bits,
        }
    }

    fn sample_size(&self) -> usize {
        match self {
            WaveformFormat::F32 => 4,
            WaveformFormat::I16 { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformFileHeader {
    pub version: u16,
    pub sample_rate_hz: u32,
    pub format: WaveformFormat,
    pub frame_length: u32,
    pub frame_count: u32,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::WaveformFormat {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Serialize frames into waveform-file bytes.
pub fn encode_waveform(
    frames: &[Frame],
    format: WaveformFormat,
    sample_rate_hz: u32,
) -> Result<Vec<u8>> {
    let frame_length = frames.first().map_or(0, |f| f.len());
    for f in frames {
        if f.len() != frame_length {
            return Err(Error::LengthMismatch {
                left: frame_length,
                right: f.len(),
            });
        }
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN + frames.len() * frame_length * format.sample_size());
    bytes.extend_from_slice(WAVEFORM_MAGIC);
    bytes.extend_from_slice(&WAVEFORM_VERSION.to_le_bytes());
    bytes.extend_from_slice(&sample_rate_hz.to_le_bytes());
    bytes.push(format.code());
    bytes.push(format.frac_bits());
    bytes.extend_from_slice(&(frame_length as u32).to_le_bytes());
    bytes.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for f in frames {
        for &s in &f.samples {
            match format {
                WaveformFormat::F32 => bytes.extend_from_slice(&(s as f32).to_le_bytes()),
                WaveformFormat::I16 { frac_bits } => {
                    let scale = (1i32 << frac_bits) as f64;
                    let code = (s * scale).round_ties_even().clamp(-32768.0, 32767.0) as i16;
                    bytes.extend_from_slice(&code.to_le_bytes());
                }
            }
        }
    }
    Ok(bytes)
}

/// Parse waveform-file bytes. Pulse indices are assigned sequentially from
/// zero; the format does not store them.
pub fn decode_waveform(bytes: &[u8], path: &Path) -> Result<(WaveformFileHeader, Vec<Frame>)> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(
            path,
            format!("truncated header: expected {HEADER_LEN} bytes, got {}", bytes.len()),
        ));
    }
    if &bytes[0..4] != WAVEFORM_MAGIC {
        return Err(format_err(path, format!("bad magic at offset 0: {:02x?}", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != WAVEFORM_VERSION {
        return Err(format_err(
            path,
            format!("unsupported version {version} at offset 4 (expected {WAVEFORM_VERSION})"),
        ));
    }
    let sample_rate_hz = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let format = match bytes[10] {
        0 => WaveformFormat::F32,
        1 => WaveformFormat::I16 { frac_bits: bytes[11] },
        code => return Err(format_err(path, format!("unknown sample_format_code {code} at offset 10"))),
    };
    let frame_length = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let frame_count = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let expected = HEADER_LEN
        + frame_length as usize * frame_count as usize * format.sample_size();
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!("payload size mismatch: expected {expected} bytes, got {}", bytes.len()),
        ));
    }
    let mut frames = Vec::with_capacity(frame_count as usize);
    let mut offset = HEADER_LEN;
    for k in 0..frame_count {
        let mut samples = Vec::with_capacity(frame_length as usize);
        for _ in 0..frame_length {
            let s = match format {
                WaveformFormat::F32 => {
                    let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
                    offset += 4;
                    v as f64
                }
                WaveformFormat::I16 { frac_bits } => {
                    let code = i16::from_le_bytes(bytes[offset..offset + 2].try_into().unwrap());
                    offset += 2;
                    code as f64 / (1i32 << frac_bits) as f64
                }
            };
            samples.push(s);
        }
        frames.push(Frame::new(samples, k as u64));
    }
    let header = WaveformFileHeader {
        version,
        sample_rate_hz,
        format,
        frame_length,
        frame_count,
    };
    Ok((header, frames))
}

pub fn write_waveform(
    path: &Path,
    frames: &[Frame],
    format: WaveformFormat,
    sample_rate_hz: u32,
) -> Result<()> {
    let bytes = encode_waveform(frames, format, sample_rate_hz)?;
    atomic_write(path, &bytes)
}

pub fn read_waveform(path: &Path) -> Result<(WaveformFileHeader, Vec<Frame>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_waveform(&bytes, path)
}

/// Render recorded taps to CSV: `sample_index,time_us,<tap names>`, one row
/// per sample across the whole concatenated stream. Time is exact f64
/// microseconds (shortest round-trip formatting).
pub fn export_csv(
    recorded: &BTreeMap<Tap, Vec<Frame>>,
    columns: &[Tap],
    sample_rate_hz: f64,
) -> Result<String> {
    if columns.is_empty() {
        return Err(Error::EmptyColumns);
    }
    let mut streams: Vec<(&Tap, Vec<f64>)> = Vec::new();
    for tap in columns {
        if *tap == Tap::W {
            return Err(Error::UnknownColumn(
                "w (weight snapshots are not a sample stream; see the report)".into(),
            ));
        }
        let frames = recorded
            .get(tap)
            .ok_or_else(|| Error::UnknownColumn(tap.name().to_string()))?;
        let flat: Vec<f64> = frames.iter().flat_map(|f| f.samples.iter().copied()).collect();
        streams.push((tap, flat));
    }
    let len = streams.iter().map(|(_, s)| s.len()).min().unwrap_or(0);
    let mut out = String::from("sample_index,time_us");
    for (tap, _) in &streams {
        out.push(',');
        out.push_str(tap.name());
    }
    out.push('\n');
    for n in 0..len {
        let t_us = n as f64 / sample_rate_hz * 1e6;
        out.push_str(&format!("{n},{t_us}"));
        for (_, s) in &streams {
            out.push_str(&format!(",{}", s[n]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Write bytes via a temp file in the same directory plus an atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}
