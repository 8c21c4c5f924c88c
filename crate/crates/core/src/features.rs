//! Log-mel spectrograms and dataset-level normalization statistics.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio_io::Waveform;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("waveform too short: {len} samples, need at least one hop ({hop})")]
    TooShort { len: usize, hop: usize },
    #[error("sample rate {got} does not match feature config rate {expected}; resample first")]
    RateMismatch { got: u32, expected: u32 },
    #[error("invalid mel config: {0}")]
    InvalidConfig(String),
    #[error("cannot compute statistics over an empty corpus")]
    EmptyCorpus,
    #[error("malformed statistics file: {0}")]
    MalformedStats(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Feature extraction settings. Defaults: 16 kHz, 64 mel bins, 64 ms window, 10 ms hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_mels: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            n_mels: 64,
            window_ms: 64.0,
            hop_ms: 10.0,
            fft_size: 1024,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    /// Frames per second of audio.
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_samples() as f64
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1");
        }
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.window_ms) {
            return bad("need 0 < hop_ms <= window_ms");
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0)
        {
            return bad("need 0 <= fmin < fmax <= sample_rate/2");
        }
        if self.fft_size < self.window_samples() {
            return bad("fft_size smaller than the analysis window");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }
}

/// A `frames x bins` matrix stored time-major (`data[t * bins + f]`).
///
/// Raw extractor output holds natural-log mel energies (every cell >= ln(log_floor)); after
/// normalization and augmentation the same container carries standardized values.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<f32>,
}

impl LogMelSpectrogram {
    pub fn new(frames: usize, bins: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), frames * bins, "data length must equal frames * bins");
        Self { frames, bins, data }
    }

    pub fn filled(frames: usize, bins: usize, value: f32) -> Self {
        Self::new(frames, bins, vec![value; frames * bins])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, t: usize, f: usize) -> f32 {
        self.data[t * self.bins + f]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    /// Copies frames `[start, start + len)`; frames past the end are filled with `pad`.
    pub fn slice_frames(&self, start: usize, len: usize, pad: f32) -> Self {
        let mut data = vec![pad; len * self.bins];
        let avail = self.frames.saturating_sub(start).min(len);
        if avail > 0 {
            data[..avail * self.bins]
                .copy_from_slice(&self.data[start * self.bins..(start + avail) * self.bins]);
        }
        Self::new(len, self.bins, data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self::new(self.frames, self.bins, self.data.iter().map(|&x| f(x)).collect())
    }
}

/// Reusable extractor: caches the FFT plan, window, and mel filterbank for one config.
pub struct MelExtractor {
    cfg: MelConfig,
    fft: Arc<dyn Fft<f32>>,
    window: Vec<f32>,
    filters: Vec<MelFilter>,
}

struct MelFilter {
    first_bin: usize,
    weights: Vec<f32>,
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl MelExtractor {
    pub fn new(cfg: MelConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        let win = cfg.window_samples();
        let window = (0..win)
            .map(|i| {
                (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos()) as f32
            })
            .collect();
        Ok(Self {
            cfg,
            fft,
            window,
            filters: build_filterbank(&cfg),
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    /// Centre frequency (Hz) of each triangular filter.
    pub fn filter_centers(&self) -> Vec<f64> {
        mel_points(&self.cfg)[1..=self.cfg.n_mels].to_vec()
    }

    pub fn extract(&self, w: &Waveform) -> Result<LogMelSpectrogram, FeatureError> {
        let cfg = &self.cfg;
        if w.sample_rate() != cfg.sample_rate {
            return Err(FeatureError::RateMismatch {
                got: w.sample_rate(),
                expected: cfg.sample_rate,
            });
        }
        let hop = cfg.hop_samples();
        let x = w.samples();
        if x.len() < hop || x.len() < 2 {
            return Err(FeatureError::TooShort { len: x.len(), hop });
        }
        let win = self.window.len();
        let n_frames = x.len().div_ceil(hop);
        let n_bins = cfg.fft_size / 2 + 1;
        let floor = cfg.log_floor;
        let mut out = Vec::with_capacity(n_frames * cfg.n_mels);
        let mut buf = vec![Complex::new(0.0f32, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex::new(0.0f32, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0f32; n_bins];
        let half = (win / 2) as isize;
        for t in 0..n_frames {
            let start = (t * hop) as isize - half;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = if i < win {
                    let s = x[reflect_index(start + i as isize, x.len())];
                    Complex::new(s * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for filt in &self.filters {
                let e: f64 = filt
                    .weights
                    .iter()
                    .zip(&power[filt.first_bin..])
                    .map(|(&w, &p)| w as f64 * p as f64)
                    .sum();
                out.push(e.max(floor).ln() as f32);
            }
        }
        Ok(LogMelSpectrogram::new(n_frames, cfg.n_mels, out))
    }
}

/// Reflect (mirror without repeating the edge sample) an index into `[0, len)`.
fn reflect_index(i: isize, len: usize) -> usize {
    let len = len as isize;
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let mut m = i.rem_euclid(period);
    if m >= len {
        m = period - m;
    }
    m as usize
}

fn mel_points(cfg: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

fn build_filterbank(cfg: &MelConfig) -> Vec<MelFilter> {
    let pts = mel_points(cfg);
    let n_bins = cfg.fft_size / 2 + 1;
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (left, center, right) = (pts[m], pts[m + 1], pts[m + 2]);
            let weights: Vec<(usize, f32)> = (0..n_bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = ((f - left) / (center - left)).min((right - f) / (right - center));
                    (w > 0.0).then_some((k, w as f32))
                })
                .collect();
            match (weights.first(), weights.last()) {
                (Some(&(first, _)), Some(&(last, _))) => {
                    let mut dense = vec![0.0; last - first + 1];
                    for (k, w) in weights {
                        dense[k - first] = w;
                    }
                    MelFilter {
                        first_bin: first,
                        weights: dense,
                    }
                }
                // filter narrower than one FFT bin
                _ => MelFilter {
                    first_bin: 0,
                    weights: Vec::new(),
                },
            }
        })
        .collect()
}

/// One-shot log-mel extraction. Prefer a shared [`MelExtractor`] in loops.
pub fn log_mel(w: &Waveform, cfg: &MelConfig) -> Result<LogMelSpectrogram, FeatureError> {
    MelExtractor::new(*cfg)?.extract(w)
}

pub const SIGMA_FLOOR: f64 = 1e-5;

/// Global (scalar) mean and standard deviation over all time-frequency cells of a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

const NORM_STATS_MAGIC: &[u8; 4] = b"NST1";

impl NormStats {
    pub fn new(mean: f64, std: f64) -> Self {
        Self {
            mean,
            std: std.max(SIGMA_FLOOR),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 1.0)
    }

    /// 20-byte record: magic "NST1", then mean and std as little-endian f64.
    pub fn to_bytes(&self) -> [u8; 20] {
        let mut out = [0u8; 20];
        out[..4].copy_from_slice(NORM_STATS_MAGIC);
        out[4..12].copy_from_slice(&self.mean.to_le_bytes());
        out[12..20].copy_from_slice(&self.std.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatureError> {
        if bytes.len() != 20 {
            return Err(FeatureError::MalformedStats(format!(
                "expected 20 bytes, got {}",
                bytes.len()
            )));
        }
        if &bytes[..4] != NORM_STATS_MAGIC {
            return Err(FeatureError::MalformedStats("bad magic".into()));
        }
        let mean = f64::from_le_bytes(bytes[4..12].try_into().unwrap());
        let std = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if !mean.is_finite() || !std.is_finite() || std < SIGMA_FLOOR {
            return Err(FeatureError::MalformedStats("non-finite or sub-floor values".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Streaming mean/variance accumulator (Welford), mergeable across shards.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn extend(&mut self, xs: impl IntoIterator<Item = f64>) {
        for x in xs {
            self.push(x);
        }
    }

    /// Combines two partial accumulators (Chan et al. parallel update).
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn population_std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }

    pub fn finish(&self) -> Result<NormStats, FeatureError> {
        if self.count == 0 {
            return Err(FeatureError::EmptyCorpus);
        }
        Ok(NormStats::new(self.mean, self.population_std()))
    }
}

/// Single streaming pass over every cell of every spectrogram.
pub fn compute_norm_stats<'a, I>(corpus: I) -> Result<NormStats, FeatureError>
where
    I: IntoIterator<Item = &'a LogMelSpectrogram>,
{
    let mut acc = Welford::new();
    for x in corpus {
        acc.extend(x.data().iter().map(|&v| v as f64));
    }
    acc.finish()
}

/// Elementwise `(x - mean) / std`.
pub fn apply_norm(x: &LogMelSpectrogram, s: &NormStats) -> LogMelSpectrogram {
    let (mean, std) = (s.mean, s.std);
    x.map(|v| ((v as f64 - mean) / std) as f32)
}

pub fn invert_norm(x: &LogMelSpectrogram, s: &NormStats) -> LogMelSpectrogram {
    let (mean, std) = (s.mean, s.std);
    x.map(|v| (v as f64 * std + mean) as f32)
}
