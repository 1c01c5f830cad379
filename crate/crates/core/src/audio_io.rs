//! PCM WAV ingestion and the in-memory clip type.
//!
//! Only little-endian RIFF/WAVE with 16-bit integer PCM is accepted. Multi-channel
//! input is downmixed by per-frame mean. Samples are normalized by 32768 on read
//! and stored as `clamp(round(s * 32767))` on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::label::KinitLabel;

/// Sample rate of the corpus.
pub const CORPUS_RATE_HZ: u32 = 16_000;

const PCM_FORMAT: u16 = 1;

/// A mono clip with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub source_id: String,
    pub label: Option<KinitLabel>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32, source_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: Option<KinitLabel>) -> Self {
        self.label = label;
        self
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Header facts of a WAV file, available without decoding the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: u16,
    pub sample_rate_hz: u32,
    pub bits_per_sample: u16,
    pub frames: usize,
    data_offset: u64,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate_hz as f64
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedContainer(format!("unexpected end of file in {what}"))
        }
        _ => Error::MalformedContainer(format!("{what}: {e}")),
    })
}

fn parse_header<R: Read + Seek>(r: &mut R) -> Result<WavInfo> {
    let file_len = r
        .seek(SeekFrom::End(0))
        .map_err(|e| Error::MalformedContainer(e.to_string()))?;
    r.seek(SeekFrom::Start(0))
        .map_err(|e| Error::MalformedContainer(e.to_string()))?;

    let mut riff = [0u8; 12];
    read_exact_or(r, &mut riff, "RIFF header")?;
    if &riff[0..4] != b"RIFF" || &riff[8..12] != b"WAVE" {
        return Err(Error::MalformedContainer(
            "missing RIFF/WAVE signature".into(),
        ));
    }

    let mut fmt: Option<(u16, u16, u32, u16, u16)> = None;
    let mut pos = 12u64;
    loop {
        let mut hdr = [0u8; 8];
        if pos + 8 > file_len {
            return Err(Error::MalformedContainer("no data chunk".into()));
        }
        read_exact_or(r, &mut hdr, "chunk header")?;
        pos += 8;
        let id = [hdr[0], hdr[1], hdr[2], hdr[3]];
        let size = u32::from_le_bytes([hdr[4], hdr[5], hdr[6], hdr[7]]) as u64;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::MalformedContainer(format!(
                        "fmt chunk too short ({size} bytes)"
                    )));
                }
                let mut body = [0u8; 16];
                read_exact_or(r, &mut body, "fmt chunk")?;
                let le16 = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
                let format = le16(0);
                let channels = le16(2);
                let rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                let block_align = le16(12);
                let bits = le16(14);
                fmt = Some((format, channels, rate, block_align, bits));
                let rest = size + (size & 1) - 16;
                r.seek(SeekFrom::Current(rest as i64))
                    .map_err(|e| Error::MalformedContainer(e.to_string()))?;
                pos += size + (size & 1);
            }
            b"data" => {
                let (format, channels, rate, block_align, bits) = fmt.ok_or_else(|| {
                    Error::MalformedContainer("data chunk precedes fmt chunk".into())
                })?;
                if format != PCM_FORMAT {
                    return Err(Error::UnsupportedEncoding(format!(
                        "audio format code {format} (only PCM=1 is supported)"
                    )));
                }
                if bits != 16 {
                    return Err(Error::UnsupportedEncoding(format!(
                        "{bits}-bit samples (only 16-bit is supported)"
                    )));
                }
                if channels == 0 || rate == 0 {
                    return Err(Error::MalformedContainer(format!(
                        "{channels} channels at {rate} Hz"
                    )));
                }
                if block_align as usize != channels as usize * 2 {
                    return Err(Error::MalformedContainer(format!(
                        "block align {block_align} does not match {channels} x 16-bit"
                    )));
                }
                // Truncated files keep whatever whole frames are present.
                let available = size.min(file_len - pos);
                let frames = (available / block_align as u64) as usize;
                return Ok(WavInfo {
                    channels,
                    sample_rate_hz: rate,
                    bits_per_sample: bits,
                    frames,
                    data_offset: pos,
                });
            }
            _ => {
                let skip = size + (size & 1);
                r.seek(SeekFrom::Current(skip as i64))
                    .map_err(|e| Error::MalformedContainer(e.to_string()))?;
                pos += skip;
            }
        }
    }
}

/// Reads the header of a WAV file without decoding samples.
pub fn read_wav_info(path: impl AsRef<Path>) -> Result<WavInfo> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_header(&mut BufReader::new(file))
}

/// Reads a 16-bit PCM WAV file into a mono clip.
///
/// The clip's `source_id` is the file stem; the label is left unset.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let info = parse_header(&mut reader)?;
    if info.frames == 0 {
        return Err(Error::EmptyAudio);
    }
    reader
        .seek(SeekFrom::Start(info.data_offset))
        .map_err(|e| Error::io(path, e))?;
    let channels = info.channels as usize;
    let mut raw = vec![0u8; info.frames * channels * 2];
    read_exact_or(&mut reader, &mut raw, "data chunk")?;

    let samples = raw
        .chunks_exact(channels * 2)
        .map(|frame| {
            let sum: i32 = frame
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]) as i32)
                .sum();
            (sum as f64 / channels as f64 / 32768.0) as f32
        })
        .collect();

    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioClip::new(samples, info.sample_rate_hz, source_id))
}

/// Quantizes one sample the way [`write_wav`] stores it.
pub fn quantize(sample: f32) -> i16 {
    (sample as f64 * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a clip as a canonical 44-byte-header mono 16-bit PCM WAV.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let rate = clip.sample_rate_hz;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

/// Writes a clip as mono 16-bit PCM.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_wav(clip))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Linear-interpolation resampler. Output sample `i` is read at input
/// position `i * src / target`, clamped to the last input sample.
pub fn resample_linear(clip: &AudioClip, target_hz: u32) -> AudioClip {
    assert!(target_hz > 0, "target rate must be positive");
    let src_hz = clip.sample_rate_hz;
    if target_hz == src_hz {
        return clip.clone();
    }
    let n = clip.samples.len();
    let out_len = ((n as f64 * target_hz as f64 / src_hz as f64).round() as usize).max(1);
    let step = src_hz as f64 / target_hz as f64;
    let last = n.saturating_sub(1);
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = (pos - lo as f64).clamp(0.0, 1.0);
            let a = clip.samples[lo] as f64;
            let b = clip.samples[hi] as f64;
            (a + (b - a) * frac) as f32
        })
        .collect();
    AudioClip {
        samples,
        sample_rate_hz: target_hz,
        source_id: clip.source_id.clone(),
        label: clip.label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_wav(channels: u16, bits: u16, format: u16, frames: &[i16]) -> Vec<u8> {
        let data_len = frames.len() * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&8000u32.to_le_bytes());
        out.extend_from_slice(&(8000 * channels as u32 * bits as u32 / 8).to_le_bytes());
        out.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in frames {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    fn load(bytes: &[u8]) -> Result<AudioClip> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        std::fs::write(&p, bytes).unwrap();
        read_wav(&p)
    }

    #[test]
    fn mono_scaling() {
        let clip = load(&raw_wav(1, 16, 1, &[16384])).unwrap();
        assert_eq!(clip.samples, vec![0.5]);
        assert_eq!(clip.sample_rate_hz, 8000);
        assert_eq!(clip.source_id, "x");
    }

    #[test]
    fn stereo_downmix_by_mean() {
        let clip = load(&raw_wav(2, 16, 1, &[16384, -16384, 100, 100])).unwrap();
        assert_eq!(clip.samples.len(), 2);
        assert_eq!(clip.samples[0], 0.0);
        // identical channels equal the single channel exactly
        assert_eq!(clip.samples[1], 100.0 / 32768.0);
    }

    #[test]
    fn full_scale_negative_maps_to_minus_one() {
        let clip = load(&raw_wav(1, 16, 1, &[-32768])).unwrap();
        assert_eq!(clip.samples, vec![-1.0]);
    }

    #[test]
    fn rejects_non_pcm_and_wrong_depth() {
        assert!(matches!(
            load(&raw_wav(1, 16, 3, &[0])),
            Err(Error::UnsupportedEncoding(_))
        ));
        let mut eight_bit = raw_wav(1, 8, 1, &[]);
        eight_bit.extend_from_slice(&[0, 0]);
        assert!(matches!(
            load(&eight_bit),
            Err(Error::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn rejects_garbage_and_empty() {
        assert!(matches!(
            load(b"RIFX\0\0\0\0WAVE"),
            Err(Error::MalformedContainer(_))
        ));
        assert!(matches!(load(b"RI"), Err(Error::MalformedContainer(_))));
        assert!(matches!(
            load(&raw_wav(1, 16, 1, &[])),
            Err(Error::EmptyAudio)
        ));
        let mut no_data = raw_wav(1, 16, 1, &[]);
        no_data.truncate(36);
        assert!(matches!(load(&no_data), Err(Error::MalformedContainer(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let base = raw_wav(1, 16, 1, &[8192]);
        let mut bytes = base[..12].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]); // odd size, padded
        bytes.extend_from_slice(&base[12..]);
        let clip = load(&bytes).unwrap();
        assert_eq!(clip.samples, vec![0.25]);
    }

    #[test]
    fn writer_header_and_rails() {
        let bytes = encode_wav(&AudioClip::new(vec![0.0, 1.0, -1.0, 2.0], 16000, "t"));
        assert_eq!(bytes.len(), 44 + 8);
        assert_eq!(&bytes[44..46], &[0, 0]);
        assert_eq!(i16::from_le_bytes([bytes[46], bytes[47]]), 32767);
        assert_eq!(i16::from_le_bytes([bytes[48], bytes[49]]), -32767);
        assert_eq!(i16::from_le_bytes([bytes[50], bytes[51]]), 32767);
    }

    #[test]
    fn resample_identity_and_hand_example() {
        let clip = AudioClip::new(vec![0.1, -0.3, 0.7], 8000, "a");
        assert_eq!(resample_linear(&clip, 8000), clip);

        let two = AudioClip::new(vec![0.0, 1.0], 1, "b");
        assert_eq!(resample_linear(&two, 2).samples, vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn resample_constant_and_single_sample() {
        let clip = AudioClip::new(vec![0.25; 7], 44100, "c");
        let out = resample_linear(&clip, 16000);
        assert_eq!(out.samples.len(), 3);
        assert!(out.samples.iter().all(|&s| s == 0.25));
        let tiny = AudioClip::new(vec![0.5], 48000, "d");
        assert_eq!(resample_linear(&tiny, 1000).samples, vec![0.5]);
    }
}
