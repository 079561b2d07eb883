use std::fs;
use std::path::Path;

use super::{AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32768.0;

/// Reads a RIFF/WAVE file holding 16-bit little-endian PCM, mono, 16 kHz.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let samples = parse_wav(path, &bytes)?;
    AudioSignal::new(samples)
}

fn parse_wav(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 12 {
        return Err(Error::corrupt(path, "file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format(format!("{}: not a RIFF/WAVE file", path.display())));
    }

    let mut pos = 12;
    let mut fmt_seen = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if body + 16 > bytes.len() || size < 16 {
                    return Err(Error::corrupt(path, "truncated fmt chunk"));
                }
                let f = &bytes[body..body + 16];
                let format_tag = u16::from_le_bytes([f[0], f[1]]);
                let channels = u16::from_le_bytes([f[2], f[3]]);
                let rate = u32::from_le_bytes([f[4], f[5], f[6], f[7]]);
                let bits = u16::from_le_bytes([f[14], f[15]]);
                if format_tag != 1 && format_tag != 0xFFFE {
                    return Err(Error::Format(format!("format_tag={format_tag} (PCM required)")));
                }
                if channels != 1 {
                    return Err(Error::Format(format!("channels={channels}")));
                }
                if rate != SAMPLE_RATE {
                    return Err(Error::Format(format!("sample_rate={rate}")));
                }
                if bits != 16 {
                    return Err(Error::Format(format!("bits_per_sample={bits}")));
                }
                fmt_seen = true;
            }
            b"data" => {
                if !fmt_seen {
                    return Err(Error::corrupt(path, "data chunk before fmt chunk"));
                }
                if body + size > bytes.len() {
                    return Err(Error::corrupt(
                        path,
                        format!(
                            "data chunk declares {size} bytes, {} present",
                            bytes.len() - body
                        ),
                    ));
                }
                if size % 2 != 0 {
                    return Err(Error::corrupt(path, "odd data chunk size for 16-bit PCM"));
                }
                return Ok(bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / PCM_SCALE)
                    .collect());
            }
            _ => {}
        }
        // chunks are padded to even size
        pos = body + size + (size & 1);
    }
    if fmt_seen {
        Err(Error::corrupt(path, "missing data chunk"))
    } else {
        Err(Error::corrupt(path, "missing fmt chunk"))
    }
}

/// Writes 16-bit PCM mono 16 kHz. Samples outside [-1, 1] are rejected, not clipped.
pub fn write_wav(signal: &AudioSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some((index, &value)) = signal
        .samples()
        .iter()
        .enumerate()
        .find(|(_, v)| v.abs() > 1.0)
    {
        return Err(Error::Range { index, value });
    }
    let data_len = signal.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in signal.samples() {
        let q = (s * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, channels: u16, rate: u32, frames: &[i16]) {
        let data_len = frames.len() * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for f in frames {
            out.extend_from_slice(&f.to_le_bytes());
        }
        fs::write(path, out).unwrap();
    }

    #[test]
    fn silence_reads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_raw(&p, 1, 16000, &vec![0; 16000]);
        let s = read_wav(&p).unwrap();
        assert_eq!(s.len(), 16000);
        assert!(s.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stereo_is_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        write_raw(&p, 2, 16000, &[0; 64]);
        let err = read_wav(&p).unwrap_err().to_string();
        assert!(err.contains("channels=2"), "{err}");
    }

    #[test]
    fn wrong_rate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        write_raw(&p, 1, 8000, &[0; 64]);
        assert!(read_wav(&p).unwrap_err().to_string().contains("sample_rate=8000"));
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_raw(&p, 1, 16000, &[1; 100]);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn out_of_range_sample_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = AudioSignal::new(vec![0.0, 1.5, 0.0]).unwrap();
        match write_wav(&s, dir.path().join("x.wav")) {
            Err(Error::Range { index, value }) => {
                assert_eq!(index, 1);
                assert_eq!(value, 1.5);
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_within_quantization_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let samples: Vec<f64> = (0..4000).map(|i| 0.8 * (i as f64 * 0.013).sin()).collect();
        let s = AudioSignal::new(samples).unwrap();
        write_wav(&s, &p).unwrap();
        let first = read_wav(&p).unwrap();
        write_wav(&first, &p).unwrap();
        let second = read_wav(&p).unwrap();
        let max_diff = s
            .samples()
            .iter()
            .zip(second.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff <= 2f64.powi(-15), "{max_diff}");
        assert_eq!(first, second);
    }
}
