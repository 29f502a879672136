//! `.iqf` binary IQ frame container.
//!
//! All integers little-endian. Layout (byte offsets):
//!
//! | off | size | field                                   |
//! |-----|------|-----------------------------------------|
//! | 0   | 4    | magic `PDIQ`                            |
//! | 4   | 2    | version (u16, currently 1)              |
//! | 6   | 2    | header_len (u16, 72 for version 1)      |
//! | 8   | 8    | center_freq_hz (u64)                    |
//! | 16  | 8    | span_hz (u64)                           |
//! | 24  | 8    | iq_rate_hz (u64)                        |
//! | 32  | 8    | t0_unix_ms (i64)                        |
//! | 40  | 8    | n_samples (u64)                         |
//! | 48  | 1    | adc_bits (u8)                           |
//! | 49  | 8    | full_scale_microvolts (u64)             |
//! | 57  | 8    | cal_constant_micro (u64, C × 10⁶)       |
//! | 65  | 4    | window_index (u32)                      |
//! | 69  | 3    | reserved, zero                          |
//! | 72  | 4·n  | payload: n × (I i16, Q i16)             |
//! | end | 4    | CRC-32 (IEEE, 0xEDB88320) of header+payload |
//!
//! Readers skip header bytes beyond the fields they know, so later versions
//! may grow `header_len`.

use std::path::Path;

use chrono::DateTime;
use num_complex::Complex;

use super::{io_err, CodecError, Result};
use crate::dsp::CalConstant;
use crate::frame::IqFrame;

pub const IQF_MAGIC: [u8; 4] = *b"PDIQ";
pub const IQF_VERSION: u16 = 1;
pub const IQF_HEADER_LEN: u16 = 72;
const KNOWN_FIELDS_END: usize = 69;

fn to_units(v: f64, scale: f64, what: &str) -> Result<u64> {
    let u = (v * scale).round();
    if !(u.is_finite() && u >= 0.0 && u <= u64::MAX as f64) {
        return Err(CodecError::Format(format!("{what} {v} not representable")));
    }
    Ok(u as u64)
}

pub fn encode_iqf(frame: &IqFrame) -> Result<Vec<u8>> {
    if frame.samples.is_empty() {
        return Err(CodecError::Format("frame has no samples".into()));
    }
    if !(8..=16).contains(&frame.adc_bits) {
        return Err(CodecError::Format(format!("adc_bits {} outside [8, 16]", frame.adc_bits)));
    }
    let window = u32::try_from(frame.window_index)
        .map_err(|_| CodecError::Format(format!("window index {} too large", frame.window_index)))?;
    let mut out = Vec::with_capacity(IQF_HEADER_LEN as usize + 4 * frame.samples.len() + 4);
    out.extend_from_slice(&IQF_MAGIC);
    out.extend_from_slice(&IQF_VERSION.to_le_bytes());
    out.extend_from_slice(&IQF_HEADER_LEN.to_le_bytes());
    out.extend_from_slice(&to_units(frame.center_freq, 1.0, "center_freq")?.to_le_bytes());
    out.extend_from_slice(&to_units(frame.span, 1.0, "span")?.to_le_bytes());
    out.extend_from_slice(&to_units(frame.iq_rate, 1.0, "iq_rate")?.to_le_bytes());
    out.extend_from_slice(&frame.t0.timestamp_millis().to_le_bytes());
    out.extend_from_slice(&(frame.samples.len() as u64).to_le_bytes());
    out.push(frame.adc_bits);
    out.extend_from_slice(&to_units(frame.full_scale, 1e6, "full_scale")?.to_le_bytes());
    out.extend_from_slice(&to_units(frame.cal.get(), 1e6, "cal_constant")?.to_le_bytes());
    out.extend_from_slice(&window.to_le_bytes());
    out.resize(IQF_HEADER_LEN as usize, 0);
    for s in &frame.samples {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes(b[off..off + 2].try_into().unwrap())
}
fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}
fn u64_at(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

pub fn decode_iqf(bytes: &[u8]) -> Result<IqFrame> {
    if bytes.len() < 8 {
        return Err(CodecError::Corrupt(format!("truncated: {} bytes", bytes.len())));
    }
    if bytes[0..4] != IQF_MAGIC {
        return Err(CodecError::Format(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
    }
    let version = u16_at(bytes, 4);
    if version != IQF_VERSION {
        return Err(CodecError::Format(format!("unsupported version {version}")));
    }
    let header_len = usize::from(u16_at(bytes, 6));
    if header_len < KNOWN_FIELDS_END {
        return Err(CodecError::Corrupt(format!("header_len {header_len} too small")));
    }
    if bytes.len() < header_len + 4 {
        return Err(CodecError::Corrupt(format!("truncated: {} bytes", bytes.len())));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32_at(bytes, bytes.len() - 4);
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(CodecError::Corrupt(format!("CRC mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    let n_samples = u64_at(bytes, 40);
    let payload = &body[header_len..];
    if payload.len() as u64 != n_samples.saturating_mul(4) {
        return Err(CodecError::Corrupt(format!(
            "payload has {} bytes, header declares {n_samples} samples",
            payload.len()
        )));
    }
    if n_samples == 0 {
        return Err(CodecError::Format("no samples".into()));
    }
    let adc_bits = bytes[48];
    if !(8..=16).contains(&adc_bits) {
        return Err(CodecError::Format(format!("adc_bits {adc_bits} outside [8, 16]")));
    }
    let t0 = DateTime::from_timestamp_millis(i64::from_le_bytes(bytes[32..40].try_into().unwrap()))
        .ok_or_else(|| CodecError::Format("t0 out of range".into()))?;
    let cal = CalConstant::new(u64_at(bytes, 57) as f64 / 1e6).map_err(|e| CodecError::Format(e.to_string()))?;
    let samples = payload
        .chunks_exact(4)
        .map(|c| Complex::new(i16::from_le_bytes([c[0], c[1]]), i16::from_le_bytes([c[2], c[3]])))
        .collect();
    Ok(IqFrame {
        window_index: u32_at(bytes, 65) as usize,
        center_freq: u64_at(bytes, 8) as f64,
        span: u64_at(bytes, 16) as f64,
        iq_rate: u64_at(bytes, 24) as f64,
        t0,
        samples,
        adc_bits,
        full_scale: u64_at(bytes, 49) as f64 / 1e6,
        cal,
    })
}

/// Write `frame` to `path`, returning the byte count.
pub fn write_iqf(frame: &IqFrame, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = encode_iqf(frame)?;
    std::fs::write(path, &bytes).map_err(io_err(path))?;
    Ok(bytes.len() as u64)
}

pub fn read_iqf(path: impl AsRef<Path>) -> Result<IqFrame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_iqf(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn frame(n: usize) -> IqFrame {
        IqFrame {
            window_index: 5,
            center_freq: 315e6,
            span: 4e6,
            iq_rate: 4e6,
            t0: Utc.timestamp_millis_opt(1_714_564_800_123).unwrap(),
            samples: (0..n)
                .map(|i| {
                    let v = (i % 30_000) as i16;
                    Complex::new(v - 3, -v)
                })
                .collect(),
            adc_bits: 16,
            full_scale: 0.1,
            cal: CalConstant::FIFTY_OHM,
        }
    }

    #[test]
    fn layout_and_size() {
        let bytes = encode_iqf(&frame(3)).unwrap();
        assert_eq!(bytes.len(), 72 + 12 + 4);
        assert_eq!(&bytes[0..4], b"PDIQ");
        assert_eq!(u16_at(&bytes, 4), 1);
        assert_eq!(u16_at(&bytes, 6), 72);
        assert_eq!(u64_at(&bytes, 8), 315_000_000);
        assert_eq!(u64_at(&bytes, 40), 3);
        assert_eq!(bytes[48], 16);
        assert_eq!(u64_at(&bytes, 49), 100_000);
        assert_eq!(u64_at(&bytes, 57), 10_000);
        assert_eq!(u32_at(&bytes, 65), 5);
        assert_eq!(&bytes[69..72], &[0, 0, 0]);
        // first sample (-3, 0)
        assert_eq!(&bytes[72..76], &[0xfd, 0xff, 0, 0]);
        assert_eq!(decode_iqf(&bytes).unwrap(), frame(3));
    }

    #[test]
    fn full_dwell_at_56_msps_byte_count() {
        let f = frame(560_000);
        let bytes = encode_iqf(&f).unwrap();
        assert_eq!(bytes.len(), 72 + 2_240_000 + 4);
    }

    #[test]
    fn empty_frame_rejected() {
        assert!(matches!(encode_iqf(&frame(0)), Err(CodecError::Format(_))));
    }

    #[test]
    fn corruption_cases() {
        let good = encode_iqf(&frame(8)).unwrap();
        let mut flipped = good.clone();
        flipped[80] ^= 0x01;
        assert!(matches!(decode_iqf(&flipped), Err(CodecError::Corrupt(_))));

        let mut magic = good.clone();
        magic[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_iqf(&magic), Err(CodecError::Format(_))));

        assert!(matches!(decode_iqf(&good[..good.len() - 5]), Err(CodecError::Corrupt(_))));
        assert!(matches!(decode_iqf(&good[..40]), Err(CodecError::Corrupt(_))));
        assert!(matches!(decode_iqf(&good[..3]), Err(CodecError::Corrupt(_))));
    }

    #[test]
    fn longer_header_is_skipped() {
        let f = frame(2);
        let mut bytes = encode_iqf(&f).unwrap();
        bytes.truncate(bytes.len() - 4);
        bytes[6..8].copy_from_slice(&80u16.to_le_bytes());
        bytes.splice(72..72, [0u8; 8]);
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_iqf(&bytes).unwrap(), f);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.iqf");
        let n = write_iqf(&frame(100), &p).unwrap();
        assert_eq!(n, 72 + 400 + 4);
        assert_eq!(read_iqf(&p).unwrap(), frame(100));
        assert!(matches!(read_iqf(dir.path().join("missing.iqf")), Err(CodecError::Io { .. })));
    }
}
