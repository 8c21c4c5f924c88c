//! PCM WAV ingestion and band-limited resampling.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    NotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed RIFF/WAVE data: {0}")]
    Malformed(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("sample rate must be positive")]
    InvalidRate,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
}

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite { index });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Silence of `len` samples.
    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power (mean of squared samples), accumulated in f64.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64
}

const PCM_SCALE: f32 = 32768.0;

/// Reads a 16-bit PCM RIFF/WAVE file. Multi-channel frames are averaged to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            AudioError::NotFound(path.to_path_buf())
        } else {
            AudioError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    decode_wav(&bytes)
}

/// Decodes an in-memory WAV image; see [`load_wav`].
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::Malformed("file shorter than RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(AudioError::Malformed("missing RIFF magic".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Malformed("missing WAVE form type".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                AudioError::Malformed(format!(
                    "chunk '{}' overruns file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(AudioError::Malformed("fmt chunk too short".into()));
                }
                let mut format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([body[14], body[15]]);
                // WAVE_FORMAT_EXTENSIBLE carries the real format code in the sub-format GUID.
                if format == 0xFFFE && body.len() >= 26 {
                    format = u16::from_le_bytes([body[24], body[25]]);
                }
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| AudioError::Malformed("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Malformed("missing data chunk".into()))?;
    if format != 1 {
        return Err(AudioError::Unsupported(format!(
            "format code {format} (only integer PCM is supported)"
        )));
    }
    if bits != 16 {
        return Err(AudioError::Unsupported(format!(
            "{bits}-bit samples (only 16-bit is supported)"
        )));
    }
    if channels == 0 {
        return Err(AudioError::Malformed("zero channels".into()));
    }
    if rate == 0 {
        return Err(AudioError::InvalidRate);
    }

    let channels = channels as usize;
    let frame_bytes = 2 * channels;
    let samples = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f32 = frame
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / PCM_SCALE)
                .sum();
            sum / channels as f32
        })
        .collect();
    Waveform::new(samples, rate)
}

/// Writes a mono 16-bit PCM file. Samples are clamped to [-1, 1) before quantization.
pub fn save_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), AudioError> {
    let path = path.as_ref();
    let bytes = encode_wav(w);
    let io_err = |source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&bytes).map_err(io_err)?;
    Ok(())
}

/// Encodes a mono 16-bit PCM WAV image.
pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let data_len = (w.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

fn quantize(s: f32) -> i16 {
    let code = (s * PCM_SCALE).round();
    code.clamp(i16::MIN as f32, i16::MAX as f32) as i16
}

/// Resamples to `target_rate` with a Kaiser-windowed sinc kernel.
///
/// Output length is `round(len * target_rate / source_rate)`.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate);
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let ratio = target_rate as f64 / w.sample_rate as f64;
    let samples = SincResampler::new(ratio).process(&w.samples);
    Waveform::new(samples, target_rate)
}

/// Polyphase windowed-sinc interpolator for an arbitrary rate ratio (output rate / input rate).
///
/// The lowpass cutoff sits at 0.95 of the lower Nyquist frequency. Each output sample is a
/// 32-tap dot product (measured at the lower rate); kernel phases are tabulated on a fine grid
/// and linearly interpolated between neighbours.
#[derive(Debug, Clone)]
pub struct SincResampler {
    ratio: f64,
    half_width: usize,
    table: Vec<f32>,
}

const TAPS_PER_PHASE: usize = 32;
const PHASES: usize = 512;
const KAISER_BETA: f64 = 8.0;
const CUTOFF: f64 = 0.95;

impl SincResampler {
    pub fn new(ratio: f64) -> Self {
        assert!(ratio > 0.0 && ratio.is_finite(), "ratio must be positive");
        let scale = ratio.min(1.0);
        // cutoff in cycles per input sample
        let fc = 0.5 * CUTOFF * scale;
        let half_width = ((TAPS_PER_PHASE / 2) as f64 / scale).ceil() as usize;
        let taps = 2 * half_width;
        let norm = bessel_i0(KAISER_BETA);
        let mut table = vec![0.0f32; (PHASES + 1) * taps];
        for phase in 0..=PHASES {
            let frac = phase as f64 / PHASES as f64;
            for j in 0..taps {
                // distance from the output instant to input tap j
                let d = frac + half_width as f64 - 1.0 - j as f64;
                let x = d / half_width as f64;
                let window = if x.abs() <= 1.0 {
                    bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / norm
                } else {
                    0.0
                };
                table[phase * taps + j] = (2.0 * fc * sinc(2.0 * fc * d) * window) as f32;
            }
        }
        Self {
            ratio,
            half_width,
            table,
        }
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len as f64 * self.ratio).round() as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        let out_len = self.output_len(input.len());
        let taps = 2 * self.half_width;
        let n_in = input.len() as isize;
        let mut out = Vec::with_capacity(out_len);
        let mut coef = vec![0.0f32; taps];
        for n in 0..out_len {
            let t = n as f64 / self.ratio;
            let base = t.floor();
            let frac = t - base;
            let p = frac * PHASES as f64;
            let i0 = (p.floor() as usize).min(PHASES - 1);
            let w = (p - i0 as f64) as f32;
            let row0 = &self.table[i0 * taps..(i0 + 1) * taps];
            let row1 = &self.table[(i0 + 1) * taps..(i0 + 2) * taps];
            for ((c, &a), &b) in coef.iter_mut().zip(row0).zip(row1) {
                *c = a + w * (b - a);
            }
            let first = base as isize - self.half_width as isize + 1;
            let mut acc = 0.0f32;
            if first >= 0 && first + taps as isize <= n_in {
                let seg = &input[first as usize..first as usize + taps];
                acc = seg.iter().zip(&coef).map(|(x, c)| x * c).sum();
            } else {
                for (j, c) in coef.iter().enumerate() {
                    let k = first + j as isize;
                    if (0..n_in).contains(&k) {
                        acc += input[k as usize] * c;
                    }
                }
            }
            out.push(acc);
        }
        out
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(channels: u16, bits: u16, format: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&22050u32.to_le_bytes());
        out.extend_from_slice(&(22050 * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn max_code_scales_by_inverse_32768() {
        let w = decode_wav(&wav_bytes(1, 16, 1, &32767i16.to_le_bytes())).unwrap();
        assert_eq!(w.samples(), &[32767.0 / 32768.0]);
        assert_eq!(w.sample_rate(), 22050);
    }

    #[test]
    fn stereo_is_averaged() {
        let mut data = Vec::new();
        data.extend_from_slice(&16384i16.to_le_bytes());
        data.extend_from_slice(&(-16384i16).to_le_bytes());
        let w = decode_wav(&wav_bytes(2, 16, 1, &data)).unwrap();
        assert_eq!(w.samples(), &[0.0]);
    }

    #[test]
    fn rejects_bad_magic_and_encodings() {
        let mut bytes = wav_bytes(1, 16, 1, &[0, 0]);
        bytes[0..4].copy_from_slice(b"RIFX");
        assert!(matches!(decode_wav(&bytes), Err(AudioError::Malformed(_))));
        assert!(matches!(
            decode_wav(&wav_bytes(1, 24, 1, &[0, 0, 0])),
            Err(AudioError::Unsupported(_))
        ));
        assert!(matches!(
            decode_wav(&wav_bytes(1, 16, 3, &[0, 0])),
            Err(AudioError::Unsupported(_))
        ));
    }

    #[test]
    fn missing_file_is_not_found() {
        let err = load_wav("/nonexistent/definitely/missing.wav").unwrap_err();
        assert!(matches!(err, AudioError::NotFound(_)));
    }

    #[test]
    fn save_clamps_overrange_samples() {
        let w = Waveform::new(vec![1.5, -3.0], 16000).unwrap();
        let back = decode_wav(&encode_wav(&w)).unwrap();
        assert_eq!(back.samples()[0], 32767.0 / 32768.0);
        assert_eq!(back.samples()[1], -1.0);
    }

    #[test]
    fn empty_waveform_roundtrips() {
        let w = Waveform::new(vec![], 16000).unwrap();
        let bytes = encode_wav(&w);
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), 0);
        assert!(decode_wav(&bytes).unwrap().is_empty());
    }

    #[test]
    fn unwritable_path_errors() {
        let w = Waveform::new(vec![0.0], 16000).unwrap();
        assert!(matches!(
            save_wav("/nonexistent-dir/x.wav", &w),
            Err(AudioError::Io { .. })
        ));
    }

    #[test]
    fn waveform_invariants() {
        assert!(matches!(Waveform::new(vec![0.0], 0), Err(AudioError::InvalidRate)));
        assert!(matches!(
            Waveform::new(vec![0.0, f32::NAN], 8000),
            Err(AudioError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn resample_identity_and_lengths() {
        let w = Waveform::new((0..1000).map(|i| (i as f32 * 0.01).sin()).collect(), 16000).unwrap();
        assert_eq!(resample(&w, 16000).unwrap(), w);
        let w32 = Waveform::zeros(2 * 777, 32000).unwrap();
        assert_eq!(resample(&w32, 16000).unwrap().len(), 777);
        assert_eq!(resample(&Waveform::zeros(1001, 44100).unwrap(), 16000).unwrap().len(), 363);
        assert!(matches!(resample(&w, 0), Err(AudioError::InvalidRate)));
    }

    #[test]
    fn resample_preserves_dc_level() {
        let w = Waveform::new(vec![0.25; 4800], 48000).unwrap();
        let out = resample(&w, 16000).unwrap();
        for &s in &out.samples()[100..1500] {
            assert!((s - 0.25).abs() < 1e-3, "{s}");
        }
    }
}
