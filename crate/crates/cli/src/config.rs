//! Run configuration: `key = value` lines with dotted section prefixes.
//!
//! ```text
//! seed = 7
//! paths.manifest = corpus/manifest.tsv
//! paths.stats = stats.nst
//! paths.checkpoint_dir = run1
//! mel.n_mels = 64
//! augment.mixup_alpha = 0.4
//! augment.pitch_semitones = -1, 1
//! train.steps = 2000
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use byola::augment::AugmentationPolicy;
use byola::byol::TrainConfig;
use byola::features::MelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub manifest: PathBuf,
    pub noise_dir: Option<PathBuf>,
    pub stats: PathBuf,
    pub checkpoint_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mel: MelConfig,
    pub policy: AugmentationPolicy,
    pub train: TrainConfig,
    pub paths: Paths,
    pub seed: u64,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow!("{key}: cannot parse {v:?}: {e}"))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_range(key: &str, v: &str) -> Result<[f64; 2]> {
    match parse_list::<f64>(key, v)?[..] {
        [lo, hi] => Ok([lo, hi]),
        _ => bail!("{key}: expected two comma-separated numbers, got {v:?}"),
    }
}

/// Splits config text into `(line number, key, value)` triples.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
        out.push((n + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
            .with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut mel = MelConfig::default();
        let mut policy = AugmentationPolicy::default();
        let mut train = TrainConfig::default();
        let (mut manifest, mut noise_dir, mut stats, mut checkpoint_dir) = (None, None, None, None);
        let mut seed = None;
        let resolve = |v: &str| base.join(v);

        for (line, key, v) in parse_lines(text)? {
            let v = v.as_str();
            let k = key.as_str();
            match k {
                "seed" => seed = Some(parse(k, v)?),
                "paths.manifest" => manifest = Some(resolve(v)),
                "paths.noise_dir" => noise_dir = Some(resolve(v)),
                "paths.stats" => stats = Some(resolve(v)),
                "paths.checkpoint_dir" => checkpoint_dir = Some(resolve(v)),

                "mel.sample_rate" => mel.sample_rate = parse(k, v)?,
                "mel.n_mels" => mel.n_mels = parse(k, v)?,
                "mel.window_ms" => mel.window_ms = parse(k, v)?,
                "mel.hop_ms" => mel.hop_ms = parse(k, v)?,
                "mel.fft_size" => mel.fft_size = parse(k, v)?,
                "mel.fmin" => mel.fmin = parse(k, v)?,
                "mel.fmax" => mel.fmax = parse(k, v)?,
                "mel.log_floor" => mel.log_floor = parse(k, v)?,

                "augment.mixup_alpha" => policy.mixup_alpha = parse(k, v)?,
                "augment.mixup_bank_size" => policy.mixup_bank_size = parse(k, v)?,
                "augment.rrc_freq_range" => policy.rrc_freq_range = parse_range(k, v)?,
                "augment.rrc_time_range" => policy.rrc_time_range = parse_range(k, v)?,
                "augment.gaussian_std" => policy.gaussian_std = parse(k, v)?,
                "augment.gaussian_alpha" => policy.gaussian_alpha = parse(k, v)?,
                "augment.pitch_semitones" => policy.pitch_semitones = parse_list(k, v)?,
                "augment.stretch_factors" => policy.stretch_factors = parse_list(k, v)?,
                "augment.snr_db_choices" => policy.snr_db_choices = parse_list(k, v)?,
                "augment.p_prosodic" => policy.p_prosodic = parse(k, v)?,
                "augment.p_noise" => policy.p_noise = parse(k, v)?,
                "augment.p_gaussian" => policy.p_gaussian = parse(k, v)?,
                "augment.enable_mixup" => policy.enable_mixup = parse(k, v)?,
                "augment.enable_rrc" => policy.enable_rrc = parse(k, v)?,
                "augment.enable_gaussian" => policy.enable_gaussian = parse(k, v)?,
                "augment.enable_prosodic" => policy.enable_prosodic = parse(k, v)?,
                "augment.enable_noise" => policy.enable_noise = parse(k, v)?,

                "train.tau" => train.tau = parse(k, v)?,
                "train.batch_size" => train.batch_size = parse(k, v)?,
                "train.steps" => train.steps = parse(k, v)?,
                "train.lr" => train.adam.lr = parse(k, v)?,
                "train.beta1" => train.adam.beta1 = parse(k, v)?,
                "train.beta2" => train.adam.beta2 = parse(k, v)?,
                "train.eps" => train.adam.eps = parse(k, v)?,
                "train.checkpoint_every" => train.checkpoint_every = parse(k, v)?,
                "train.segment_frames" => train.segment_frames = parse(k, v)?,
                "train.embedding_dim" => train.embedding_dim = parse(k, v)?,
                "train.encoder_channels" => train.encoder_channels = parse_list(k, v)?,
                "train.projector_hidden" => train.projector_hidden = parse(k, v)?,
                "train.projection_dim" => train.projection_dim = parse(k, v)?,
                "train.predictor_hidden" => train.predictor_hidden = parse(k, v)?,
                "train.skip_unreadable" => train.skip_unreadable = parse(k, v)?,
                _ => bail!("line {line}: unknown key {k:?}"),
            }
        }

        let need = |p: Option<PathBuf>, key: &str| p.ok_or_else(|| anyhow!("missing {key}"));
        let seed = seed.ok_or_else(|| anyhow!("missing seed"))?;
        train.seed = seed;
        Ok(Self {
            mel,
            policy,
            train,
            paths: Paths {
                manifest: need(manifest, "paths.manifest")?,
                noise_dir,
                stats: need(stats, "paths.stats")?,
                checkpoint_dir: need(checkpoint_dir, "paths.checkpoint_dir")?,
            },
            seed,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Checks value ranges and that every input path exists. The checkpoint directory is
    /// created by training if missing.
    pub fn validate(&self) -> Result<()> {
        self.mel.validate()?;
        self.policy.validate()?;
        self.train.validate()?;
        for (key, p) in [("paths.manifest", &self.paths.manifest), ("paths.stats", &self.paths.stats)] {
            if !p.is_file() {
                bail!("{key}: {} does not exist", p.display());
            }
        }
        if let Some(d) = &self.paths.noise_dir {
            if !d.is_dir() {
                bail!("paths.noise_dir: {} is not a directory", d.display());
            }
        }
        if self.policy.enable_noise && self.policy.p_noise > 0.0 && self.paths.noise_dir.is_none() {
            bail!("noise augmentation enabled but paths.noise_dir is not set");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "seed = 3\npaths.manifest = m.tsv\npaths.stats = s.nst\npaths.checkpoint_dir = out\n";

    #[test]
    fn sections_and_lists() {
        let text = format!(
            "{BASE}# comment\n\nmel.n_mels = 40\naugment.pitch_semitones = -2, 2\naugment.rrc_time_range = 0.8,1.2\n\
             train.encoder_channels = 4,8\ntrain.lr = 0.001\naugment.enable_noise = false\n"
        );
        let c = RunConfig::parse(&text, Path::new("/cfg")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.train.seed, 3);
        assert_eq!(c.mel.n_mels, 40);
        assert_eq!(c.policy.pitch_semitones, vec![-2.0, 2.0]);
        assert_eq!(c.policy.rrc_time_range, [0.8, 1.2]);
        assert_eq!(c.train.encoder_channels, vec![4, 8]);
        assert_eq!(c.train.adam.lr, 0.001);
        assert!(!c.policy.enable_noise);
        assert_eq!(c.paths.manifest, Path::new("/cfg/m.tsv"));
        assert_eq!(c.with_seed(9).train.seed, 9);
    }

    #[test]
    fn absolute_paths_are_kept() {
        let c = RunConfig::parse(&BASE.replace("m.tsv", "/data/m.tsv"), Path::new("/cfg")).unwrap();
        assert_eq!(c.paths.manifest, Path::new("/data/m.tsv"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("paths.manifest = m\npaths.stats = s\npaths.checkpoint_dir = o\n", Path::new(".")).is_err());
        assert!(RunConfig::parse(&format!("{BASE}train.bogus = 1\n"), Path::new(".")).is_err());
        assert!(RunConfig::parse(&format!("{BASE}train.steps = many\n"), Path::new(".")).is_err());
        assert!(RunConfig::parse(&format!("{BASE}no equals sign\n"), Path::new(".")).is_err());
        assert!(RunConfig::parse(&format!("{BASE}augment.rrc_freq_range = 1\n"), Path::new(".")).is_err());
    }

    #[test]
    fn validation_requires_existing_inputs() {
        let c = RunConfig::parse(BASE, Path::new("/nonexistent")).unwrap();
        assert!(c.validate().is_err());
    }
}
