use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::AugmentError;
use crate::audio_io::{self, mean_power, Waveform};

/// Gain that brings noise of power `p_noise` to `snr_db` below a signal of power `p_signal`.
pub fn noise_gain(p_signal: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Adds the noise slice starting at `offset` (tiled if the noise is shorter than the signal),
/// scaled to the requested SNR.
pub fn mix_noise_with_offset(
    w: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    offset: usize,
) -> Result<Waveform, AugmentError> {
    if w.sample_rate() != noise.sample_rate() {
        return Err(AugmentError::RateMismatch {
            signal: w.sample_rate(),
            noise: noise.sample_rate(),
        });
    }
    if noise.is_empty() {
        return Err(AugmentError::DegeneratePower("noise"));
    }
    let n = noise.samples();
    let slice: Vec<f32> = (0..w.len()).map(|i| n[(offset + i) % n.len()]).collect();
    let p_signal = w.mean_power();
    let p_noise = mean_power(&slice);
    if p_signal <= 0.0 {
        return Err(AugmentError::DegeneratePower("signal"));
    }
    if p_noise <= 0.0 {
        return Err(AugmentError::DegeneratePower("noise slice"));
    }
    let g = noise_gain(p_signal, p_noise, snr_db);
    let mixed = w
        .samples()
        .iter()
        .zip(&slice)
        .map(|(&s, &v)| (s as f64 + g * v as f64) as f32)
        .collect();
    Ok(Waveform::new(mixed, w.sample_rate())?)
}

/// Adds a randomly placed noise slice at `snr_db`. The offset is uniform over positions that
/// keep the slice inside the noise, or over the whole noise when it has to be tiled.
pub fn mix_noise_at_snr<R: Rng + ?Sized>(
    w: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    rng: &mut R,
) -> Result<Waveform, AugmentError> {
    let offset = if noise.is_empty() {
        0
    } else if noise.len() >= w.len() {
        rng.random_range(0..=noise.len() - w.len())
    } else {
        rng.random_range(0..noise.len())
    };
    mix_noise_with_offset(w, noise, snr_db, offset)
}

/// Background noise recordings, all at one sample rate.
#[derive(Debug, Clone, Default)]
pub struct NoiseCorpus {
    clips: Vec<Waveform>,
}

impl NoiseCorpus {
    pub fn new(clips: Vec<Waveform>) -> Self {
        Self { clips }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Loads every `.wav` under `dir` (recursively, in sorted path order), resampled to `rate`.
    pub fn from_dir(dir: impl AsRef<Path>, rate: u32) -> Result<Self, AugmentError> {
        let mut paths = Vec::new();
        collect_wavs(dir.as_ref(), &mut paths)?;
        paths.sort();
        let clips = paths
            .iter()
            .map(|p| Ok(audio_io::resample(&audio_io::load_wav(p)?, rate)?))
            .collect::<Result<Vec<_>, AugmentError>>()?;
        Ok(Self { clips })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn get(&self, i: usize) -> &Waveform {
        &self.clips[i]
    }

    pub fn clips(&self) -> &[Waveform] {
        &self.clips
    }
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), AugmentError> {
    let io = |source| audio_io::AudioError::Io {
        path: dir.to_path_buf(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_wave(rng: &mut ChaCha8Rng, len: usize, amp: f32) -> Waveform {
        Waveform::new((0..len).map(|_| rng.random_range(-amp..amp)).collect(), 16000).unwrap()
    }

    #[test]
    fn gain_cases() {
        assert!((noise_gain(0.3, 0.3, 0.0) - 1.0).abs() < 1e-12);
        let ratio = noise_gain(1.0, 1.0, 20.0) / noise_gain(1.0, 1.0, 0.0);
        assert!((ratio - 0.1).abs() < 1e-12);
    }

    #[test]
    fn achieved_snr_matches_request() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let amp = rng.random_range(0.01..0.8);
            let w = random_wave(&mut rng, 4000, amp);
            let noise_len = rng.random_range(1000..9000);
            let noise = random_wave(&mut rng, noise_len, 0.3);
            let snr = rng.random_range(-5.0..30.0);
            let mixed = mix_noise_at_snr(&w, &noise, snr, &mut rng).unwrap();
            let added: Vec<f32> = mixed.samples().iter().zip(w.samples()).map(|(m, s)| m - s).collect();
            let measured = 10.0 * (w.mean_power() / mean_power(&added)).log10();
            assert!((measured - snr).abs() < 0.1, "{measured} vs {snr}");
        }
    }

    #[test]
    fn silent_inputs_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_wave(&mut rng, 100, 0.5);
        let silent = Waveform::zeros(100, 16000).unwrap();
        assert!(matches!(
            mix_noise_at_snr(&silent, &w, 5.0, &mut rng),
            Err(AugmentError::DegeneratePower(_))
        ));
        assert!(matches!(
            mix_noise_at_snr(&w, &silent, 5.0, &mut rng),
            Err(AugmentError::DegeneratePower(_))
        ));
    }

    #[test]
    fn short_noise_is_tiled() {
        let w = Waveform::new(vec![0.5; 10], 16000).unwrap();
        let noise = Waveform::new(vec![1.0, -1.0, 1.0], 16000).unwrap();
        let mixed = mix_noise_with_offset(&w, &noise, 0.0, 1).unwrap();
        let g = (0.25f64 / (10.0 / 10.0 * 1.0)).sqrt() as f32;
        assert!((mixed.samples()[0] - (0.5 - g)).abs() < 1e-6);
        assert!((mixed.samples()[9] - (0.5 - g)).abs() < 1e-6);
    }
}
