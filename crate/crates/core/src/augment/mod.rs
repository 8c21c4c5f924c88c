//! The augmentation distribution used to build the two views of each training example.
//!
//! Waveform-domain augmentations (pitch shift, duration scaling, external noise) run first;
//! spectrogram-domain augmentations (mixup, random resize crop, Gaussian interpolation) run on
//! the dataset-normalized log-mel segment; batch post-normalization is done by the trainer.

mod noise;
mod prosody;
mod spectral;
mod views;

use thiserror::Error;

use crate::audio_io::AudioError;
use crate::features::FeatureError;

pub use noise::{mix_noise_at_snr, mix_noise_with_offset, noise_gain, NoiseCorpus};
pub use prosody::{pitch_shift, time_stretch, time_stretch_to_len};
pub use spectral::{
    apply_crop, gaussian_mix, gaussian_mix_with, mixup, mixup_with, post_normalize,
    random_resize_crop, resize_bilinear, sample_crop, CropSpec, MixupBank,
};
pub use views::{
    make_view_pair, segment_start_frames, PairInfo, ViewInfo, ViewMaker, ViewPair,
};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("degenerate power: {0} is silent")]
    DegeneratePower(&'static str),
    #[error("sample rate mismatch: signal {signal} Hz, noise {noise} Hz")]
    RateMismatch { signal: u32, noise: u32 },
    #[error("utterance too short: {available} samples available, {required} required for one segment")]
    TooShort { available: usize, required: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Hyperparameters and per-view application probabilities of every augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPolicy {
    pub mixup_alpha: f64,
    pub mixup_bank_size: usize,
    pub rrc_freq_range: [f64; 2],
    pub rrc_time_range: [f64; 2],
    /// Standard deviation of the Gaussian noise field (variance 0.04 by default).
    pub gaussian_std: f64,
    pub gaussian_alpha: f64,
    pub pitch_semitones: Vec<f64>,
    pub stretch_factors: Vec<f64>,
    pub snr_db_choices: Vec<f64>,
    pub p_prosodic: f64,
    pub p_noise: f64,
    pub p_gaussian: f64,
    pub enable_mixup: bool,
    pub enable_rrc: bool,
    pub enable_gaussian: bool,
    pub enable_prosodic: bool,
    pub enable_noise: bool,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            mixup_alpha: 0.4,
            mixup_bank_size: 256,
            rrc_freq_range: [0.6, 1.5],
            rrc_time_range: [0.6, 1.5],
            gaussian_std: 0.2,
            gaussian_alpha: 0.4,
            pitch_semitones: vec![-1.0, 1.0],
            stretch_factors: vec![0.95, 1.05],
            snr_db_choices: vec![5.0, 10.0, 25.0],
            p_prosodic: 0.5,
            p_noise: 0.5,
            p_gaussian: 0.5,
            enable_mixup: true,
            enable_rrc: true,
            enable_gaussian: true,
            enable_prosodic: true,
            enable_noise: true,
        }
    }
}

impl AugmentationPolicy {
    /// Every augmentation disabled; views are plain normalized segments.
    pub fn none() -> Self {
        Self {
            enable_mixup: false,
            enable_rrc: false,
            enable_gaussian: false,
            enable_prosodic: false,
            enable_noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidPolicy(m));
        for (name, p) in [
            ("p_prosodic", self.p_prosodic),
            ("p_noise", self.p_noise),
            ("p_gaussian", self.p_gaussian),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        for (name, [lo, hi]) in [("rrc_freq_range", self.rrc_freq_range), ("rrc_time_range", self.rrc_time_range)] {
            if !(lo > 0.0 && lo <= hi) {
                return bad(format!("{name} = [{lo}, {hi}] needs 0 < lo <= hi"));
            }
        }
        if !(self.mixup_alpha >= 0.0 && self.gaussian_alpha >= 0.0 && self.gaussian_std >= 0.0) {
            return bad("mixup_alpha, gaussian_alpha and gaussian_std must be non-negative".into());
        }
        if self.mixup_bank_size == 0 {
            return bad("mixup_bank_size must be at least 1".into());
        }
        if self.pitch_semitones.iter().any(|s| s.abs() > 12.0) {
            return bad("pitch shifts are limited to +-12 semitones".into());
        }
        if self.stretch_factors.iter().any(|f| !(0.5..=2.0).contains(f)) {
            return bad("stretch factors must lie in [0.5, 2.0]".into());
        }
        if self.enable_prosodic && (self.pitch_semitones.is_empty() || self.stretch_factors.is_empty()) {
            return bad("prosodic augmentation enabled with an empty choice set".into());
        }
        if self.enable_noise && self.snr_db_choices.is_empty() {
            return bad("noise augmentation enabled with no SNR choices".into());
        }
        Ok(())
    }
}

/// Uniform draw on `[lo, hi)`; a collapsed range returns `lo` without consuming randomness.
pub(crate) fn uniform<R: rand::Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_policy_is_valid() {
        AugmentationPolicy::default().validate().unwrap();
        AugmentationPolicy::none().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_values() {
        let p = AugmentationPolicy {
            p_noise: 1.5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = AugmentationPolicy {
            rrc_freq_range: [1.2, 0.6],
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = AugmentationPolicy {
            mixup_bank_size: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
