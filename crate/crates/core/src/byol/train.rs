use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{load_wav, resample, Waveform};
use crate::augment::{post_normalize, AugmentationPolicy, MixupBank, NoiseCorpus, ViewMaker, ViewPair};
use crate::features::{LogMelSpectrogram, MelConfig, NormStats};
use crate::nn::{AdamConfig, Scalar, Tensor};

use super::checkpoint::Checkpoint;
use super::loss::ema_update;
use super::model::{byol_objective, Architecture, Online, OnlineAdam, Target};
use super::ByolError;

/// Below this the collapse monitor warns.
pub const COLLAPSE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub adam: AdamConfig,
    /// Zero disables periodic checkpoints; the final one is always written.
    pub checkpoint_every: u64,
    pub seed: u64,
    pub segment_frames: usize,
    pub embedding_dim: usize,
    pub encoder_channels: Vec<usize>,
    pub projector_hidden: usize,
    pub projection_dim: usize,
    pub predictor_hidden: usize,
    /// Skip unreadable audio with a warning instead of aborting.
    pub skip_unreadable: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.99,
            batch_size: 64,
            steps: 1000,
            adam: AdamConfig::default(),
            checkpoint_every: 500,
            seed: 0,
            segment_frames: 100,
            embedding_dim: 512,
            encoder_channels: vec![32, 64, 64],
            projector_hidden: 1024,
            projection_dim: 128,
            predictor_hidden: 1024,
            skip_unreadable: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ByolError> {
        let bad = |m: String| Err(ByolError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0, 1]", self.tau));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.segment_frames < 8 {
            return bad("segment_frames must be at least 8".into());
        }
        if self.encoder_channels.is_empty() {
            return bad("encoder needs at least one conv block".into());
        }
        if !(self.adam.lr >= 0.0 && self.adam.eps > 0.0) {
            return bad("adam lr must be >= 0 and eps > 0".into());
        }
        Ok(())
    }

    pub fn architecture(&self, n_mels: usize) -> Result<Architecture, ByolError> {
        Architecture::new(
            self.segment_frames,
            n_mels,
            &self.encoder_channels,
            self.embedding_dim,
            self.projector_hidden,
            self.projection_dim,
            self.predictor_hidden,
        )
    }
}

/// Everything the optimization loop mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState<T> {
    pub arch: Architecture,
    pub online: Online<T>,
    pub target: Target<T>,
    pub adam: OnlineAdam<T>,
    pub tau: f64,
    /// Completed steps.
    pub step: u64,
}

impl<T: Scalar> TrainerState<T> {
    /// Fresh state; the target starts as an exact copy of the online encoder and projector.
    pub fn new(arch: Architecture, online: Online<T>, adam: AdamConfig, tau: f64) -> Result<Self, ByolError> {
        arch.validate()?;
        online.check(&arch)?;
        Ok(Self {
            target: online.to_target(),
            adam: OnlineAdam::new(&online, adam),
            arch,
            online,
            tau,
            step: 0,
        })
    }

    pub fn init(arch: Architecture, adam: AdamConfig, tau: f64, seed: u64) -> Result<Self, ByolError> {
        let online = Online::init(&arch, &mut ChaCha8Rng::seed_from_u64(seed));
        Self::new(arch, online, adam, tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStepReport {
    /// 1-based index of the step that produced this report.
    pub step: u64,
    pub loss_forward: f64,
    pub loss_reverse: f64,
    pub loss_total: f64,
    pub embedding_std: f64,
}

impl TrainStepReport {
    /// `step<TAB>loss_fwd<TAB>loss_rev<TAB>loss_total<TAB>emb_std`.
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6e}",
            self.step, self.loss_forward, self.loss_reverse, self.loss_total, self.embedding_std
        )
    }
}

/// Stacks the `u` and `u'` views of a batch into two `[N, 1, T, F]` tensors.
pub fn views_to_tensors<T: Scalar>(batch: &[ViewPair]) -> Result<(Tensor<T>, Tensor<T>), ByolError> {
    let first = batch.first().ok_or(ByolError::EmptyBatch)?;
    let (t, f) = (first.u.frames(), first.u.bins());
    let stack = |pick: fn(&ViewPair) -> &LogMelSpectrogram| -> Result<Tensor<T>, ByolError> {
        let mut data = Vec::with_capacity(batch.len() * t * f);
        for pair in batch {
            let x = pick(pair);
            if x.frames() != t || x.bins() != f {
                return Err(ByolError::BatchShape(format!(
                    "view of {}x{} in a batch of {t}x{f}",
                    x.frames(),
                    x.bins()
                )));
            }
            data.extend(x.data().iter().map(|&v| T::of(v as f64)));
        }
        Ok(Tensor::new(vec![batch.len(), 1, t, f], data))
    };
    Ok((stack(|p| &p.u)?, stack(|p| &p.u_prime)?))
}

/// One optimization step: symmetrized loss, Adam on θ, then `ξ <- τξ + (1-τ)θ`.
///
/// The batch should already be post-normalized. Nothing is modified if the loss or any
/// gradient is non-finite.
pub fn train_step<T: Scalar>(state: &mut TrainerState<T>, batch: &[ViewPair]) -> Result<TrainStepReport, ByolError> {
    let (u, u_prime) = views_to_tensors::<T>(batch)?;
    let (t, f) = state.arch.segment_shape();
    if u.shape()[2..] != [t, f] {
        return Err(ByolError::BatchShape(format!(
            "views are {:?}, network expects {t}x{f}",
            &u.shape()[2..]
        )));
    }
    let obj = byol_objective(&state.arch, &state.online, &state.target, &u, &u_prime)?;
    let step = state.step + 1;
    if !(obj.loss_total.is_finite() && obj.embedding_std.is_finite()) {
        return Err(ByolError::NonFiniteLoss {
            step,
            loss_forward: obj.loss_forward,
            loss_reverse: obj.loss_reverse,
        });
    }
    state.adam.step(&mut state.online, &obj.grads)?;
    ema_update(&state.online.f, &mut state.target.f, state.tau)?;
    ema_update(&state.online.g, &mut state.target.g, state.tau)?;
    state.step = step;
    Ok(TrainStepReport {
        step,
        loss_forward: obj.loss_forward,
        loss_reverse: obj.loss_reverse,
        loss_total: obj.loss_total,
        embedding_std: obj.embedding_std,
    })
}

/// Inputs to [`fit`] besides the audio itself.
#[derive(Debug, Clone)]
pub struct FitSetup {
    pub train: TrainConfig,
    pub mel: MelConfig,
    pub policy: AugmentationPolicy,
    pub stats: NormStats,
}

#[derive(Debug)]
pub struct FitOutcome {
    pub checkpoint: Checkpoint,
    pub reports: Vec<TrainStepReport>,
    pub checkpoint_paths: Vec<PathBuf>,
}

/// Loads, resamples, and length-filters the training audio, then trains.
pub fn fit(
    manifest: &[PathBuf],
    setup: &FitSetup,
    noise: NoiseCorpus,
    out_dir: Option<&Path>,
) -> Result<FitOutcome, ByolError> {
    if manifest.is_empty() {
        return Err(ByolError::EmptyCorpus);
    }
    let mut waves = Vec::with_capacity(manifest.len());
    for path in manifest {
        match load_wav(path) {
            Ok(w) => waves.push(resample(&w, setup.mel.sample_rate)?),
            Err(e) if setup.train.skip_unreadable => warn!("skipping {}: {e}", path.display()),
            Err(e) => return Err(e.into()),
        }
    }
    fit_waveforms(&waves, setup, noise, out_dir)
}

/// Trains on in-memory waveforms already at the feature sample rate.
///
/// One seeded generator drives initialization, shuffling, and augmentation, so identical
/// inputs give identical checkpoints. With `out_dir` set, writes `train_log.tsv`,
/// `step_NNNNNN.bylc` every `checkpoint_every` steps, and `final.bylc`.
pub fn fit_waveforms(
    waves: &[Waveform],
    setup: &FitSetup,
    noise: NoiseCorpus,
    out_dir: Option<&Path>,
) -> Result<FitOutcome, ByolError> {
    let cfg = &setup.train;
    cfg.validate()?;
    let maker = ViewMaker::new(
        setup.mel.clone(),
        setup.stats,
        setup.policy.clone(),
        noise,
        cfg.segment_frames,
    )?;
    let min_len = min_train_len(&setup.mel, &setup.policy, cfg.segment_frames);
    let usable: Vec<&Waveform> = waves.iter().filter(|w| w.len() >= min_len).collect();
    if usable.len() < waves.len() {
        warn!(
            "{} of {} utterances shorter than {min_len} samples are not used for training",
            waves.len() - usable.len(),
            waves.len()
        );
    }
    if usable.is_empty() {
        return Err(ByolError::EmptyCorpus);
    }
    if let Some(w) = usable.iter().find(|w| w.sample_rate() != setup.mel.sample_rate) {
        return Err(ByolError::InvalidConfig(format!(
            "waveform at {} Hz, features expect {} Hz",
            w.sample_rate(),
            setup.mel.sample_rate
        )));
    }

    let arch = cfg.architecture(setup.mel.n_mels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let online = Online::init(&arch, &mut rng);
    let mut state = TrainerState::new(arch, online, cfg.adam, cfg.tau)?;
    let mut bank = MixupBank::new(setup.policy.mixup_bank_size);

    let mut log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| ByolError::io(dir, e))?;
            let p = dir.join("train_log.tsv");
            Some((fs::File::create(&p).map_err(|e| ByolError::io(&p, e))?, p))
        }
        None => None,
    };
    let mut ckpt_paths = Vec::new();
    let snapshot = |state: &TrainerState<f32>| Checkpoint {
        mel: setup.mel.clone(),
        stats: setup.stats,
        seed: cfg.seed,
        state: state.clone(),
    };

    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut cursor = order.len();
    let mut reports = Vec::with_capacity(cfg.steps as usize);
    let mut warned = false;
    for _ in 0..cfg.steps {
        let mut views = Vec::with_capacity(2 * cfg.batch_size);
        let mut pairs = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let pair = maker.make_pair(usable[order[cursor]], &mut bank, &mut rng)?;
            cursor += 1;
            views.push(pair.u.clone());
            views.push(pair.u_prime.clone());
            pairs.push(pair);
        }
        let normed = post_normalize(&views)?;
        for (pair, v) in pairs.iter_mut().zip(normed.chunks(2)) {
            pair.u = v[0].clone();
            pair.u_prime = v[1].clone();
        }
        let report = train_step(&mut state, &pairs)?;
        if report.embedding_std < COLLAPSE_THRESHOLD && !warned {
            warn!(
                "step {}: embedding std {:.3e} below {COLLAPSE_THRESHOLD:e}, representations may be collapsing",
                report.step, report.embedding_std
            );
            warned = true;
        }
        if report.step % 100 == 0 {
            info!("{}", report.log_line());
        }
        if let Some((file, p)) = log.as_mut() {
            writeln!(file, "{}", report.log_line()).map_err(|e| ByolError::io(p, e))?;
        }
        reports.push(report);
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && report.step % cfg.checkpoint_every == 0 {
                let p = dir.join(format!("step_{:06}.bylc", report.step));
                snapshot(&state).save(&p)?;
                ckpt_paths.push(p);
            }
        }
    }
    let checkpoint = snapshot(&state);
    if let Some(dir) = out_dir {
        let p = dir.join("final.bylc");
        checkpoint.save(&p)?;
        ckpt_paths.push(p);
    }
    Ok(FitOutcome {
        checkpoint,
        reports,
        checkpoint_paths: ckpt_paths,
    })
}

/// Shortest utterance that yields a full segment under every stretch factor of the policy.
pub fn min_train_len(mel: &MelConfig, policy: &AugmentationPolicy, segment_frames: usize) -> usize {
    let seg = (segment_frames * mel.hop_samples()) as f64;
    let smallest = if policy.enable_prosodic {
        policy.stretch_factors.iter().copied().fold(1.0, f64::min)
    } else {
        1.0
    };
    (seg / smallest).ceil() as usize + 1
}
