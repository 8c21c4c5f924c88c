//! Browser bindings: render a synthetic voice as a log-mel spectrogram, augment it, and align
//! two voices with DTW.

use byola::audio_io::Waveform;
use byola::augment::{gaussian_mix, mixup_with, pitch_shift, random_resize_crop, time_stretch, AugmentationPolicy};
use byola::evaluation::{cepstra, dtw_align, mcd_along_path, DEFAULT_CEPSTRA};
use byola::features::{apply_norm, log_mel, LogMelSpectrogram, MelConfig, Welford};
use byola::synth::{default_speakers, synth_utterance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

pub const SPEAKERS: usize = 4;
const DURATION_S: f64 = 1.5;

/// Time-major log-mel values, standardized per utterance.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    data: Vec<f32>,
}

#[wasm_bindgen]
impl Spectrogram {
    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[wasm_bindgen(getter)]
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Copy of the values, `frames * bins` long.
    pub fn data(&self) -> Vec<f32> {
        self.data.clone()
    }
}

impl Spectrogram {
    fn to_log_mel(&self) -> LogMelSpectrogram {
        LogMelSpectrogram::new(self.frames, self.bins, self.data.clone())
    }

    fn from_log_mel(x: LogMelSpectrogram) -> Self {
        Self {
            frames: x.frames(),
            bins: x.bins(),
            data: x.into_data(),
        }
    }
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentView {
    mcd: f64,
    path_a: Vec<u32>,
    path_b: Vec<u32>,
}

#[wasm_bindgen]
impl AlignmentView {
    #[wasm_bindgen(getter)]
    pub fn mcd(&self) -> f64 {
        self.mcd
    }

    pub fn path_a(&self) -> Vec<u32> {
        self.path_a.clone()
    }

    pub fn path_b(&self) -> Vec<u32> {
        self.path_b.clone()
    }
}

fn standardize(x: &LogMelSpectrogram) -> Result<LogMelSpectrogram, String> {
    let mut acc = Welford::new();
    acc.extend(x.data().iter().map(|&v| v as f64));
    let stats = acc.finish().map_err(|e| e.to_string())?;
    Ok(apply_norm(x, &stats))
}

pub fn voice(speaker: usize, pitch: f64, stretch: f64, seed: u32) -> Result<Spectrogram, String> {
    if speaker >= SPEAKERS {
        return Err(format!("speaker must be below {SPEAKERS}"));
    }
    if !(-12.0..=12.0).contains(&pitch) || !(0.5..=2.0).contains(&stretch) {
        return Err("pitch must lie in [-12, 12] semitones and stretch in [0.5, 2]".into());
    }
    let spec = &default_speakers(SPEAKERS, 0)[speaker];
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut w: Waveform = synth_utterance(spec, DURATION_S, &mut rng).map_err(|e| e.to_string())?;
    if pitch != 0.0 {
        w = pitch_shift(&w, pitch);
    }
    if stretch != 1.0 {
        w = time_stretch(&w, stretch);
    }
    let x = log_mel(&w, &MelConfig::default()).map_err(|e| e.to_string())?;
    Ok(Spectrogram::from_log_mel(standardize(&x)?))
}

/// `kind` is `rrc` (random resize crop) or `gaussian`.
pub fn augment(x: &Spectrogram, kind: &str, seed: u32) -> Result<Spectrogram, String> {
    let policy = AugmentationPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let y = match kind {
        "rrc" => random_resize_crop(&x.to_log_mel(), &policy, &mut rng),
        "gaussian" => gaussian_mix(&x.to_log_mel(), policy.gaussian_std, policy.gaussian_alpha, &mut rng),
        _ => return Err(format!("unknown augmentation {kind:?}")),
    };
    Ok(Spectrogram::from_log_mel(y))
}

/// Mixes `other` into `x` at ratio `lambda` in the linear domain, cropping to the shorter one.
pub fn mix(x: &Spectrogram, other: &Spectrogram, lambda: f64) -> Result<Spectrogram, String> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err("lambda must lie in [0, 1]".into());
    }
    if x.bins != other.bins {
        return Err("spectrograms differ in bin count".into());
    }
    let t = x.frames.min(other.frames);
    let a = x.to_log_mel().slice_frames(0, t, 0.0);
    let b = other.to_log_mel().slice_frames(0, t, 0.0).map(f32::exp);
    Ok(Spectrogram::from_log_mel(mixup_with(&a, &b, lambda)))
}

pub fn align(a: &Spectrogram, b: &Spectrogram) -> Result<AlignmentView, String> {
    let ca = cepstra(&a.to_log_mel(), DEFAULT_CEPSTRA);
    let cb = cepstra(&b.to_log_mel(), DEFAULT_CEPSTRA);
    let al = dtw_align(&ca, &cb).map_err(|e| e.to_string())?;
    Ok(AlignmentView {
        mcd: mcd_along_path(&ca, &cb, &al.path),
        path_a: al.path.iter().map(|p| p.0 as u32).collect(),
        path_b: al.path.iter().map(|p| p.1 as u32).collect(),
    })
}

#[wasm_bindgen(js_name = voice)]
pub fn voice_js(speaker: usize, pitch: f64, stretch: f64, seed: u32) -> Result<Spectrogram, JsError> {
    voice(speaker, pitch, stretch, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = augment)]
pub fn augment_js(x: &Spectrogram, kind: &str, seed: u32) -> Result<Spectrogram, JsError> {
    augment(x, kind, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = mix)]
pub fn mix_js(x: &Spectrogram, other: &Spectrogram, lambda: f64) -> Result<Spectrogram, JsError> {
    mix(x, other, lambda).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = align)]
pub fn align_js(a: &Spectrogram, b: &Spectrogram) -> Result<AlignmentView, JsError> {
    align(a, b).map_err(|e| JsError::new(&e))
}
