//! RIFF/WAVE codec for 16-bit PCM, mono or stereo.
//!
//! Anything else (float WAV, 24-bit, >2 channels, rates outside 8-96 kHz) is
//! rejected with an error naming the offending header field rather than
//! guessed at.

use super::{AudioClip, AudioError, Result};

const FORMAT_PCM: u16 = 1;

fn read_u16(bytes: &[u8], at: usize) -> Result<u16> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| AudioError::Format(format!("truncated at byte {at}")))
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| AudioError::Format(format!("truncated at byte {at}")))
}

/// Decodes a RIFF/WAVE byte stream into a mono clip.
///
/// Stereo input is downmixed by averaging the two channels. Integer samples
/// are scaled to [-1, 1) by dividing by 32768. The header facts are kept in
/// `source_id`.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(AudioError::Format("missing RIFF header".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Format("missing WAVE marker".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4)? as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(AudioError::Format("fmt chunk shorter than 16 bytes".into()));
                }
                let format = read_u16(bytes, body_start)?;
                let channels = read_u16(bytes, body_start + 2)?;
                let rate = read_u32(bytes, body_start + 4)?;
                let bits = read_u16(bytes, body_start + 14)?;
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                let end = body_end
                    .ok_or_else(|| AudioError::Format("data chunk overruns file".into()))?;
                data = Some(&bytes[body_start..end]);
            }
            _ => {}
        }
        // chunks are word-aligned
        pos = body_start + size + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| AudioError::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Format("no data chunk".into()))?;

    if format != FORMAT_PCM {
        return Err(AudioError::Unsupported {
            field: "audio_format",
            value: format.to_string(),
            detail: "only integer PCM (format 1) is accepted",
        });
    }
    if bits != 16 {
        return Err(AudioError::Unsupported {
            field: "bits_per_sample",
            value: bits.to_string(),
            detail: "only 16-bit PCM is accepted",
        });
    }
    if !(1..=2).contains(&channels) {
        return Err(AudioError::Unsupported {
            field: "channels",
            value: channels.to_string(),
            detail: "only mono or stereo is accepted",
        });
    }
    if !(8_000..=96_000).contains(&rate) {
        return Err(AudioError::Unsupported {
            field: "sample_rate",
            value: rate.to_string(),
            detail: "rate must be within 8-96 kHz",
        });
    }

    let n_ch = channels as usize;
    let frame_bytes = 2 * n_ch;
    let n_frames = data.len() / frame_bytes;
    if n_frames == 0 {
        return Err(AudioError::Format("empty data chunk".into()));
    }
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0f64;
        for c in 0..n_ch {
            let at = f * frame_bytes + 2 * c;
            let v = i16::from_le_bytes([data[at], data[at + 1]]);
            acc += f64::from(v) / 32768.0;
        }
        samples.push(acc / n_ch as f64);
    }

    let source_id = format!("wav:pcm16:{}ch:{}Hz", channels, rate);
    AudioClip::new(samples, rate, source_id)
}

/// Encodes a clip as mono 16-bit PCM RIFF/WAVE.
///
/// Samples are quantized by `round(x * 32768)` clamped to the i16 range, the
/// exact inverse of the decoder's scaling, so decode -> encode -> decode round
/// trips 16-bit material bit-exactly.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let n = clip.samples.len();
    let data_len = (2 * n) as u32;
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(channels: u16, rate: u32, interleaved: &[i16]) -> Vec<u8> {
        let data_len = (2 * interleaved.len()) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * u32::from(channels) * 2).to_le_bytes());
        out.extend_from_slice(&(channels * 2).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for v in interleaved {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    #[test]
    fn one_second_of_zeros_at_50k() {
        let raw = vec![0i16; 50_000];
        let clip = decode_wav(&wav_bytes(1, 50_000, &raw)).unwrap();
        assert_eq!(clip.samples.len(), 50_000);
        assert_eq!(clip.sample_rate, 50_000);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn symmetric_stereo_downmixes_to_zero() {
        let mut raw = Vec::new();
        for _ in 0..100 {
            raw.push(16384i16); // +0.5
            raw.push(-16384i16); // -0.5
        }
        let clip = decode_wav(&wav_bytes(2, 16_000, &raw)).unwrap();
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn integer_scaling_extremes() {
        let clip = decode_wav(&wav_bytes(1, 16_000, &[-32768, 32767])).unwrap();
        assert_eq!(clip.samples[0], -1.0);
        assert!((clip.samples[1] - 0.999_969_482_421_875).abs() < 1e-12);
    }

    #[test]
    fn rejects_float_wav_naming_the_field() {
        let mut bytes = wav_bytes(1, 16_000, &[0, 0]);
        // patch audio format to 3 (IEEE float)
        bytes[20] = 3;
        let err = decode_wav(&bytes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("audio_format"), "got: {msg}");
    }

    #[test]
    fn rejects_out_of_range_rate() {
        let err = decode_wav(&wav_bytes(1, 4_000, &[0, 0])).unwrap_err();
        assert!(err.to_string().contains("sample_rate"));
    }

    #[test]
    fn rejects_malformed_header() {
        assert!(decode_wav(b"RIFX....WAVE").is_err());
        assert!(decode_wav(b"").is_err());
    }

    #[test]
    fn decode_encode_decode_round_trips_bit_exactly() {
        let raw: Vec<i16> = (0..2000).map(|i| ((i * 37) % 65536 - 32768) as i16).collect();
        let first = decode_wav(&wav_bytes(1, 16_000, &raw)).unwrap();
        let second = decode_wav(&encode_wav(&first)).unwrap();
        assert_eq!(first.samples, second.samples);
        assert_eq!(first.sample_rate, second.sample_rate);
    }
}
