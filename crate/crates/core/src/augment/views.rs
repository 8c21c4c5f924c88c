use rand::Rng;

use super::{
    gaussian_mix, mix_noise_at_snr, mixup, pitch_shift, random_resize_crop, time_stretch,
    AugmentError, AugmentationPolicy, MixupBank, NoiseCorpus,
};
use crate::audio_io::Waveform;
use crate::features::{apply_norm, LogMelSpectrogram, MelConfig, MelExtractor, NormStats};

/// Two augmented views of the same utterance segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub u: LogMelSpectrogram,
    pub u_prime: LogMelSpectrogram,
    pub info: PairInfo,
}

impl ViewPair {
    pub fn swapped(&self) -> Self {
        Self {
            u: self.u_prime.clone(),
            u_prime: self.u.clone(),
            info: PairInfo {
                segment_start: self.info.segment_start,
                views: [self.info.views[1].clone(), self.info.views[0].clone()],
            },
        }
    }
}

/// What was applied to each view; used for inspection and tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairInfo {
    /// Segment start in samples of the un-stretched utterance.
    pub segment_start: usize,
    pub views: [ViewInfo; 2],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewInfo {
    pub semitones: Option<f64>,
    pub stretch: Option<f64>,
    pub noise: Option<(usize, f64)>,
    pub start_frame: usize,
    pub gaussian: bool,
}

/// Start frame of each view's segment for an un-stretched start sample `s`: the view with
/// stretch `f` starts at sample `round(f * s)`, i.e. frame `round(f * s / hop)`.
pub fn segment_start_frames(s: usize, factors: [f64; 2], hop: usize) -> [usize; 2] {
    factors.map(|f| ((f * s as f64).round() / hop as f64).round() as usize)
}

/// Builds view pairs for one feature configuration, normalization, and augmentation policy.
pub struct ViewMaker {
    extractor: MelExtractor,
    stats: NormStats,
    policy: AugmentationPolicy,
    noise: NoiseCorpus,
    segment_frames: usize,
}

impl ViewMaker {
    pub fn new(
        mel: MelConfig,
        stats: NormStats,
        policy: AugmentationPolicy,
        noise: NoiseCorpus,
        segment_frames: usize,
    ) -> Result<Self, AugmentError> {
        policy.validate()?;
        Ok(Self {
            extractor: MelExtractor::new(mel)?,
            stats,
            policy,
            noise,
            segment_frames,
        })
    }

    pub fn policy(&self) -> &AugmentationPolicy {
        &self.policy
    }

    pub fn extractor(&self) -> &MelExtractor {
        &self.extractor
    }

    pub fn segment_frames(&self) -> usize {
        self.segment_frames
    }

    /// Runs the per-view pipeline for both views:
    ///
    /// 1. prosodic (pitch + stretch) with probability `p_prosodic`
    /// 2. external noise at a drawn SNR with probability `p_noise`
    /// 3. log-mel, then dataset normalization
    /// 4. segment extraction at a start shared in un-stretched time
    /// 5. mixup, random resize crop, then Gaussian interpolation with probability `p_gaussian`
    ///
    /// Post-normalization across the batch is left to the caller.
    pub fn make_pair<R: Rng + ?Sized>(
        &self,
        w: &Waveform,
        bank: &mut MixupBank,
        rng: &mut R,
    ) -> Result<ViewPair, AugmentError> {
        let cfg = self.extractor.config();
        if w.sample_rate() != cfg.sample_rate {
            return Err(crate::features::FeatureError::RateMismatch {
                got: w.sample_rate(),
                expected: cfg.sample_rate,
            }
            .into());
        }
        let p = &self.policy;
        let mut infos = [ViewInfo::default(), ViewInfo::default()];
        for info in infos.iter_mut() {
            if p.enable_prosodic && rng.random_bool(p.p_prosodic) {
                info.semitones = Some(choose(&p.pitch_semitones, rng));
                info.stretch = Some(choose(&p.stretch_factors, rng));
            }
        }

        let hop = cfg.hop_samples();
        let seg_samples = self.segment_frames * hop;
        let factors = [0, 1].map(|v| infos[v].stretch.unwrap_or(1.0));
        let len = w.len() as f64;
        // largest un-stretched start that keeps a full segment inside every view
        let max_start = factors
            .iter()
            .map(|&f| ((f * len).round() - seg_samples as f64) / f)
            .fold(f64::INFINITY, f64::min)
            .floor();
        if max_start < 0.0 {
            return Err(AugmentError::TooShort {
                available: w.len(),
                required: seg_samples,
            });
        }
        let segment_start = rng.random_range(0..=max_start as usize);
        let starts = segment_start_frames(segment_start, factors, hop);

        let mut views = Vec::with_capacity(2);
        for (info, start) in infos.iter_mut().zip(starts) {
            let mut wave = w.clone();
            if let (Some(semitones), Some(stretch)) = (info.semitones, info.stretch) {
                wave = time_stretch(&pitch_shift(&wave, semitones), stretch);
            }
            if p.enable_noise && !self.noise.is_empty() && rng.random_bool(p.p_noise) {
                let idx = rng.random_range(0..self.noise.len());
                let snr = choose(&p.snr_db_choices, rng);
                wave = mix_noise_at_snr(&wave, self.noise.get(idx), snr, rng)?;
                info.noise = Some((idx, snr));
            }
            let spec = apply_norm(&self.extractor.extract(&wave)?, &self.stats);
            let start = start.min(spec.frames().saturating_sub(self.segment_frames));
            info.start_frame = start;
            let mut x = spec.slice_frames(start, self.segment_frames, 0.0);
            if p.enable_mixup {
                x = mixup(&x, bank, p.mixup_alpha, rng);
            }
            if p.enable_rrc {
                x = random_resize_crop(&x, p, rng);
            }
            if p.enable_gaussian && rng.random_bool(p.p_gaussian) {
                x = gaussian_mix(&x, p.gaussian_std, p.gaussian_alpha, rng);
                info.gaussian = true;
            }
            views.push(x);
        }
        let u_prime = views.pop().unwrap();
        let u = views.pop().unwrap();
        Ok(ViewPair {
            u,
            u_prime,
            info: PairInfo {
                segment_start,
                views: infos,
            },
        })
    }
}

fn choose<R: Rng + ?Sized>(choices: &[f64], rng: &mut R) -> f64 {
    choices[rng.random_range(0..choices.len())]
}

/// One-off pair construction without an external noise corpus and with 100-frame segments.
pub fn make_view_pair<R: Rng + ?Sized>(
    w: &Waveform,
    stats: &NormStats,
    policy: &AugmentationPolicy,
    bank: &mut MixupBank,
    rng: &mut R,
) -> Result<ViewPair, AugmentError> {
    ViewMaker::new(
        MelConfig::default(),
        *stats,
        policy.clone(),
        NoiseCorpus::empty(),
        100,
    )?
    .make_pair(w, bank, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::log_mel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn utterance(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f0 = rng.random_range(100.0..200.0);
        let s = (0..len)
            .map(|i| {
                let t = i as f64 / 16000.0;
                let v: f64 = (1..20)
                    .map(|k| (2.0 * std::f64::consts::PI * f0 * k as f64 * t).sin() / (k * k) as f64)
                    .sum();
                (0.3 * v) as f32
            })
            .collect();
        Waveform::new(s, 16000).unwrap()
    }

    #[test]
    fn identity_pipeline_gives_equal_normalized_segments() {
        let w = utterance(20000, 1);
        let stats = NormStats::new(-5.0, 4.0);
        let policy = AugmentationPolicy {
            enable_prosodic: false,
            enable_noise: false,
            enable_gaussian: false,
            rrc_freq_range: [1.0, 1.0],
            rrc_time_range: [1.0, 1.0],
            ..Default::default()
        };
        let mut bank = MixupBank::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = make_view_pair(&w, &stats, &policy, &mut bank, &mut rng).unwrap();
        let full = apply_norm(&log_mel(&w, &MelConfig::default()).unwrap(), &stats);
        let start = segment_start_frames(pair.info.segment_start, [1.0, 1.0], 160)[0];
        assert_eq!(pair.info.views[0].start_frame, start);
        let expected = full.slice_frames(start, 100, 0.0);
        assert_eq!(pair.u, expected);
        // second view mixed with the first view's entry at some ratio; with an empty bank only
        // the first view is guaranteed to be untouched, so rerun with mixup disabled
        let policy = AugmentationPolicy {
            enable_mixup: false,
            ..policy
        };
        let pair = make_view_pair(&w, &stats, &policy, &mut MixupBank::new(8), &mut rng).unwrap();
        assert_eq!(pair.u, pair.u_prime);
        assert_eq!((pair.u.frames(), pair.u.bins()), (100, 64));
    }

    #[test]
    fn same_seed_same_pair() {
        let w = utterance(24000, 2);
        let stats = NormStats::new(-5.0, 4.0);
        let policy = AugmentationPolicy::default();
        let run = || {
            let mut bank = MixupBank::new(4);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let a = make_view_pair(&w, &stats, &policy, &mut bank, &mut rng).unwrap();
            let b = make_view_pair(&w, &stats, &policy, &mut bank, &mut rng).unwrap();
            (a, b)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn stretched_views_start_at_the_same_waveform_point() {
        assert_eq!(segment_start_frames(4000, [1.05, 0.95], 160), [26, 24]);
        assert_eq!(segment_start_frames(0, [1.05, 0.95], 160), [0, 0]);
        let s = 3200;
        let [a, b] = segment_start_frames(s, [1.05, 0.95], 1);
        assert_eq!((a, b), (3360, 3040));
    }

    #[test]
    fn stretched_pair_fits_inside_each_view() {
        let w = utterance(17000, 4);
        let policy = AugmentationPolicy {
            p_prosodic: 1.0,
            enable_noise: false,
            ..Default::default()
        };
        let stats = NormStats::new(-5.0, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bank = MixupBank::new(4);
        for _ in 0..10 {
            let pair = make_view_pair(&w, &stats, &policy, &mut bank, &mut rng).unwrap();
            for (v, info) in pair.info.views.iter().enumerate() {
                let f = info.stretch.unwrap();
                let expected = segment_start_frames(pair.info.segment_start, [f, f], 160)[0];
                assert_eq!(info.start_frame, expected, "view {v}");
            }
        }
    }

    #[test]
    fn too_short_utterance_is_rejected() {
        let w = utterance(15000, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let err = make_view_pair(
            &w,
            &NormStats::identity(),
            &AugmentationPolicy::none(),
            &mut MixupBank::new(2),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, AugmentError::TooShort { .. }));
    }
}
