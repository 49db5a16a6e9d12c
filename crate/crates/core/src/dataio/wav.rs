//! RIFF/WAVE reading (PCM16, float32) and float32 writing.
//!
//! Files are written with the canonical 44-byte header: `RIFF`, chunk size,
//! `WAVE`, a 16-byte `fmt ` chunk (format tag 3, IEEE float, 32 bits per
//! sample) and a single `data` chunk of interleaved little-endian `f32`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Planar audio with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Wav {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl Wav {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Average of all channels.
    pub fn mono(&self) -> Vec<f64> {
        let n = self.channels.len().max(1) as f64;
        (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplePolicy {
    /// Reject samples outside `[-1, 1]`.
    Strict,
    /// Clamp samples into `[-1, 1]`.
    Clamp,
}

pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    write_wav_with(path, channels, sample_rate, SamplePolicy::Strict)
}

pub fn write_wav_with(path: &Path, channels: &[Vec<f64>], sample_rate: u32, policy: SamplePolicy) -> Result<()> {
    let bytes = encode_wav(channels, sample_rate, policy)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_wav(channels: &[Vec<f64>], sample_rate: u32, policy: SamplePolicy) -> Result<Vec<u8>> {
    let nch = channels.len();
    if nch == 0 || nch > u16::MAX as usize {
        return Err(Error::Input(format!("cannot write {nch} channels")));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Input("channels differ in length".into()));
    }
    let data_bytes = len * nch * 4;
    if data_bytes > (u32::MAX - 36) as usize {
        return Err(Error::Input("audio too long for a WAV file".into()));
    }
    let mut out = Vec::with_capacity(44 + data_bytes);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&3u16.to_le_bytes());
    out.extend_from_slice(&(nch as u16).to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * nch as u32 * 4).to_le_bytes());
    out.extend_from_slice(&(nch as u16 * 4).to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_bytes as u32).to_le_bytes());
    for i in 0..len {
        for (ch, c) in channels.iter().enumerate() {
            let v = c[i];
            if !v.is_finite() {
                return Err(Error::Input(format!("non-finite sample {v} at {i} in channel {ch}")));
            }
            let v = match policy {
                SamplePolicy::Strict if v.abs() > 1.0 => {
                    return Err(Error::Input(format!(
                        "sample {v} at {i} in channel {ch} exceeds full scale"
                    )))
                }
                SamplePolicy::Strict => v,
                SamplePolicy::Clamp => v.clamp(-1.0, 1.0),
            };
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn codec_name(tag: u16) -> &'static str {
    match tag {
        0x0001 => "PCM",
        0x0002 => "Microsoft ADPCM",
        0x0003 => "IEEE float",
        0x0006 => "A-law",
        0x0007 => "mu-law",
        0x0011 => "IMA ADPCM",
        0x0055 => "MPEG layer 3",
        0xFFFE => "extensible",
        _ => "unknown",
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

pub fn read_wav(path: &Path) -> Result<Wav> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads a file and linearly resamples it to `sample_rate` if needed.
pub fn read_wav_resampled(path: &Path, sample_rate: u32) -> Result<Wav> {
    let wav = read_wav(path)?;
    Ok(resample(&wav, sample_rate))
}

pub fn decode_wav(b: &[u8]) -> Result<Wav> {
    if b.len() < 12 || &b[0..4] != b"RIFF" || &b[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= b.len() {
        let id = &b[pos..pos + 4];
        let size = u32_at(b, pos + 4) as usize;
        let body_end = (pos + 8 + size).min(b.len());
        let body = &b[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Format("truncated fmt chunk".into()));
                }
                let mut tag = u16_at(body, 0);
                if tag == 0xFFFE && body.len() >= 26 {
                    tag = u16_at(body, 24);
                }
                fmt = Some((tag, u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1);
    }
    let (tag, nch, sample_rate, bits) = fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if nch == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    let nch = nch as usize;
    let decode: fn(&[u8]) -> f64 = match (tag, bits) {
        (1, 16) => |s| i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
        (3, 32) => |s| f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
        _ => {
            return Err(Error::Format(format!(
                "unsupported WAV codec {} (format tag {tag:#06x}, {bits} bits); only 16-bit PCM and 32-bit float are read",
                codec_name(tag)
            )))
        }
    };
    let width = bits as usize / 8;
    let frames = data.len() / (width * nch);
    let mut channels = vec![Vec::with_capacity(frames); nch];
    for f in 0..frames {
        for (ch, c) in channels.iter_mut().enumerate() {
            let i = (f * nch + ch) * width;
            c.push(decode(&data[i..i + width]));
        }
    }
    Ok(Wav { channels, sample_rate })
}

/// Linear-interpolation resampling.
pub fn resample(wav: &Wav, sample_rate: u32) -> Wav {
    if wav.sample_rate == sample_rate || wav.is_empty() {
        return Wav {
            channels: wav.channels.clone(),
            sample_rate: if wav.is_empty() { sample_rate } else { wav.sample_rate },
        };
    }
    let ratio = wav.sample_rate as f64 / sample_rate as f64;
    let n_out = (wav.len() as f64 / ratio).round() as usize;
    let channels = wav
        .channels
        .iter()
        .map(|c| {
            (0..n_out)
                .map(|i| {
                    let x = i as f64 * ratio;
                    let i0 = (x.floor() as usize).min(c.len() - 1);
                    let i1 = (i0 + 1).min(c.len() - 1);
                    let w = x - i0 as f64;
                    c[i0] * (1.0 - w) + c[i1] * w
                })
                .collect()
        })
        .collect();
    Wav { channels, sample_rate }
}
