//! Seeded toy speakers: a harmonic source with per-speaker pitch range and formant envelope.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::audio_io::{save_wav, AudioError, Waveform};
use crate::evaluation::SpeakerManifest;

pub const SYNTH_RATE: u32 = 16000;
pub const MIN_DURATION_S: f64 = 1.2;
/// Partials stop below this frequency.
const MAX_PARTIAL_HZ: f64 = 7000.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid speaker spec: {0}")]
    InvalidSpec(String),
    #[error("duration {0} s is below the {MIN_DURATION_S} s minimum")]
    TooShort(f64),
    #[error("need at least one utterance per speaker")]
    NoUtterances,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeakerSpec {
    /// Per-utterance f0 is drawn uniformly from this interval (Hz).
    pub f0_range: [f64; 2],
    /// Resonance centres (Hz) shaping the harmonic amplitudes.
    pub formant_centers: Vec<f64>,
    /// Gaussian resonance width (Hz).
    pub formant_bandwidth: f64,
    /// Relative depth of the slow f0 wobble.
    pub jitter: f64,
    pub seed: u64,
}

impl SyntheticSpeakerSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let nyq = SYNTH_RATE as f64 / 2.0;
        let [lo, hi] = self.f0_range;
        if !(lo > 0.0 && lo <= hi && hi * (1.0 + self.jitter) < nyq) {
            return Err(SynthError::InvalidSpec(format!("f0 range [{lo}, {hi}]")));
        }
        if self.formant_centers.iter().any(|&f| !(f > 0.0 && f < nyq)) {
            return Err(SynthError::InvalidSpec("formant centres must lie in (0, Nyquist)".into()));
        }
        if !(self.formant_bandwidth > 0.0) || !(0.0..0.5).contains(&self.jitter) {
            return Err(SynthError::InvalidSpec("bandwidth must be > 0 and jitter in [0, 0.5)".into()));
        }
        Ok(())
    }

    fn envelope(&self, f: f64) -> f64 {
        0.15 + self
            .formant_centers
            .iter()
            .map(|&c| (-0.5 * ((f - c) / self.formant_bandwidth).powi(2)).exp())
            .sum::<f64>()
    }
}

/// `n` speakers with disjoint f0 bands and distinct formant sets.
pub fn default_speakers(n: usize, seed: u64) -> Vec<SyntheticSpeakerSpec> {
    (0..n)
        .map(|i| {
            let lo = 85.0 + 45.0 * i as f64;
            SyntheticSpeakerSpec {
                f0_range: [lo, lo + 20.0],
                formant_centers: vec![
                    350.0 + 110.0 * ((i * 3) % 5) as f64,
                    1100.0 + 280.0 * ((i * 2) % 5) as f64,
                    2300.0 + 250.0 * (i % 3) as f64,
                ],
                formant_bandwidth: 120.0,
                jitter: 0.02,
                seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
            }
        })
        .collect()
}

/// One utterance at [`SYNTH_RATE`], peak-normalized to 0.5.
///
/// Draws f0, a vibrato rate and phase, a syllable-rate amplitude envelope, and per-partial
/// phases from `rng`, then adds partials `k * f0(t)` weighted `envelope(k * f0) / k`.
pub fn synth_utterance<R: Rng + ?Sized>(
    spec: &SyntheticSpeakerSpec,
    duration_s: f64,
    rng: &mut R,
) -> Result<Waveform, SynthError> {
    spec.validate()?;
    if !(duration_s >= MIN_DURATION_S) {
        return Err(SynthError::TooShort(duration_s));
    }
    let sr = SYNTH_RATE as f64;
    let n = (duration_s * sr).round() as usize;
    let [lo, hi] = spec.f0_range;
    let f0 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let vib_rate = rng.random_range(4.0..6.0);
    let vib_phase = rng.random_range(0.0..2.0 * PI);
    let syl_rate = rng.random_range(2.5..5.0);
    let syl_phase = rng.random_range(0.0..2.0 * PI);
    let partials = ((MAX_PARTIAL_HZ / (f0 * (1.0 + spec.jitter))).floor() as usize).clamp(1, 80);
    let amps: Vec<f64> = (1..=partials).map(|k| spec.envelope(k as f64 * f0) / k as f64).collect();
    let phases: Vec<f64> = (0..partials).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let ramp = (0.02 * sr) as usize;

    let mut out = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    for i in 0..n {
        let t = i as f64 / sr;
        let f = f0 * (1.0 + spec.jitter * (2.0 * PI * vib_rate * t + vib_phase).sin());
        let mut v = 0.0;
        for (k, (&a, &p)) in amps.iter().zip(&phases).enumerate() {
            v += a * ((k + 1) as f64 * phase + p).sin();
        }
        let mut env = 0.55 + 0.45 * (2.0 * PI * syl_rate * t + syl_phase).sin();
        let edge = i.min(n - 1 - i);
        if edge < ramp {
            env *= edge as f64 / ramp as f64;
        }
        let noise: f64 = StandardNormal.sample(rng);
        out.push(env * v + 1e-3 * noise);
        phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.5 / peak } else { 0.0 };
    Ok(Waveform::new(out.into_iter().map(|v| (v * scale) as f32).collect(), SYNTH_RATE)?)
}

/// Speaker id used for the `i`-th spec.
pub fn speaker_id(i: usize) -> String {
    format!("spk{i:02}")
}

/// `utts` utterances per speaker with durations uniform in `duration_s`, each speaker driven by
/// its own seed.
pub fn synth_corpus(
    specs: &[SyntheticSpeakerSpec],
    utts: usize,
    duration_s: [f64; 2],
) -> Result<Vec<(String, Vec<Waveform>)>, SynthError> {
    if utts == 0 {
        return Err(SynthError::NoUtterances);
    }
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let waves = (0..utts)
                .map(|_| {
                    let d = if duration_s[1] > duration_s[0] {
                        rng.random_range(duration_s[0]..duration_s[1])
                    } else {
                        duration_s[0]
                    };
                    synth_utterance(spec, d, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((speaker_id(i), waves))
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `<out>/<speaker>/uttNNN.wav` plus `<out>/manifest.tsv` (paths relative to `out`).
/// Returns the manifest with paths joined onto `out`.
pub fn build_corpus(
    specs: &[SyntheticSpeakerSpec],
    utts: usize,
    duration_s: [f64; 2],
    out: &Path,
) -> Result<SpeakerManifest, SynthError> {
    let corpus = synth_corpus(specs, utts, duration_s)?;
    let mut relative = SpeakerManifest::default();
    let mut full = SpeakerManifest::default();
    for (spk, waves) in corpus {
        let dir = out.join(&spk);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (j, w) in waves.iter().enumerate() {
            let rel = PathBuf::from(&spk).join(format!("utt{j:03}.wav"));
            save_wav(&out.join(&rel), w)?;
            full.speakers.entry(spk.clone()).or_default().push(out.join(&rel));
            relative.speakers.entry(spk.clone()).or_default().push(rel);
        }
    }
    let mpath = out.join("manifest.tsv");
    fs::write(&mpath, relative.to_text()).map_err(io_err(&mpath))?;
    Ok(full)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    /// One-pole low-passed white noise.
    Rumble,
    /// Mains hum harmonics over a little white noise.
    Hum,
    /// Several overlapping harmonic talkers with random pitch.
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::White, NoiseKind::Rumble, NoiseKind::Hum, NoiseKind::Babble];

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Rumble => "rumble",
            NoiseKind::Hum => "hum",
            NoiseKind::Babble => "babble",
        }
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// A noise clip at [`SYNTH_RATE`], peak 0.5.
pub fn synth_noise<R: Rng + ?Sized>(kind: NoiseKind, duration_s: f64, rng: &mut R) -> Waveform {
    let sr = SYNTH_RATE as f64;
    let n = ((duration_s * sr).round() as usize).max(1);
    let mut v: Vec<f64> = match kind {
        NoiseKind::White => (0..n).map(|_| gauss(rng)).collect(),
        NoiseKind::Rumble => {
            let a = 0.97;
            let mut y = 0.0;
            (0..n)
                .map(|_| {
                    y = a * y + (1.0 - a) * gauss(rng);
                    y
                })
                .collect()
        }
        NoiseKind::Hum => {
            let mains = if rng.random_bool(0.5) { 50.0 } else { 60.0 };
            let ph: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let h: f64 = (1..=6)
                        .map(|k| (2.0 * PI * mains * k as f64 * t + ph[k - 1]).sin() / k as f64)
                        .sum();
                    h + 0.05 * gauss(rng)
                })
                .collect()
        }
        NoiseKind::Babble => {
            let mut acc = vec![0.0; n];
            for _ in 0..6 {
                let spec = SyntheticSpeakerSpec {
                    f0_range: [90.0, 260.0],
                    formant_centers: vec![
                        rng.random_range(300.0..900.0),
                        rng.random_range(900.0..2200.0),
                        rng.random_range(2200.0..3200.0),
                    ],
                    formant_bandwidth: 150.0,
                    jitter: 0.05,
                    seed: 0,
                };
                let talker = synth_utterance(&spec, (n as f64 / sr).max(MIN_DURATION_S), rng)
                    .expect("valid babble talker");
                for (a, &s) in acc.iter_mut().zip(talker.samples()) {
                    *a += s as f64;
                }
            }
            acc
        }
    };
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        v.iter_mut().for_each(|x| *x *= 0.5 / peak);
    }
    Waveform::new(v.into_iter().map(|x| x as f32).collect(), SYNTH_RATE).expect("finite noise")
}

/// Writes `count` noise clips cycling through every [`NoiseKind`] as `<out>/noiseNN_<kind>.wav`.
pub fn build_noise_dir(count: usize, duration_s: f64, out: &Path, seed: u64) -> Result<Vec<PathBuf>, SynthError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = NoiseKind::ALL[i % NoiseKind::ALL.len()];
            let p = out.join(format!("noise{i:02}_{}.wav", kind.name()));
            save_wav(&p, &synth_noise(kind, duration_s, &mut rng))?;
            Ok(p)
        })
        .collect()
}
