use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{uniform, AugmentError, AugmentationPolicy};
use crate::features::{LogMelSpectrogram, SIGMA_FLOOR};

/// Run-global FIFO of past inputs in linear (exp) scale, oldest evicted first.
#[derive(Debug, Clone)]
pub struct MixupBank {
    capacity: usize,
    entries: VecDeque<LogMelSpectrogram>,
}

impl MixupBank {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "mixup bank capacity must be at least 1");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, linear: LogMelSpectrogram) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(linear);
    }

    pub fn get(&self, i: usize) -> Option<&LogMelSpectrogram> {
        self.entries.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogMelSpectrogram> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// `ln((1 - lambda) * exp(x) + lambda * q)` cellwise, with `q` already in linear scale.
pub fn mixup_with(x: &LogMelSpectrogram, q: &LogMelSpectrogram, lambda: f64) -> LogMelSpectrogram {
    assert_eq!(
        (x.frames(), x.bins()),
        (q.frames(), q.bins()),
        "mixup operands must share a shape"
    );
    let data = x
        .data()
        .iter()
        .zip(q.data())
        .map(|(&v, &qv)| ((1.0 - lambda) * (v as f64).exp() + lambda * qv as f64).ln() as f32)
        .collect();
    LogMelSpectrogram::new(x.frames(), x.bins(), data)
}

/// Mixes `x` with a uniformly chosen past input at ratio `lambda ~ U(0, alpha)`, then pushes
/// `exp(x)` into the bank. With an empty bank the output is `x` unchanged.
///
/// Draw order: bank index, then ratio.
pub fn mixup<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    bank: &mut MixupBank,
    alpha: f64,
    rng: &mut R,
) -> LogMelSpectrogram {
    let out = if bank.is_empty() {
        x.clone()
    } else {
        let idx = rng.random_range(0..bank.len());
        let lambda = uniform(rng, 0.0, alpha);
        mixup_with(x, &bank.entries[idx], lambda)
    };
    bank.push(x.map(|v| v.exp()));
    out
}

/// Sampled crop geometry. `t_offset` may be negative when the crop is wider than the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpec {
    pub freq_bins: usize,
    pub frames: usize,
    pub f_offset: usize,
    pub t_offset: isize,
}

/// Draws crop size and placement for an input of `bins x frames`.
///
/// `F_C = floor(min(U(h1,h2), 1) * F)`, `T_C = floor(U(w1,w2) * T)`, both at least 1. A crop
/// no wider than the input is placed uniformly; a wider one centres the input on its canvas.
pub fn sample_crop<R: Rng + ?Sized>(
    bins: usize,
    frames: usize,
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> CropSpec {
    let [h1, h2] = policy.rrc_freq_range;
    let [w1, w2] = policy.rrc_time_range;
    let h = uniform(rng, h1, h2).min(1.0);
    let w = uniform(rng, w1, w2);
    let freq_bins = ((h * bins as f64).floor() as usize).clamp(1, bins);
    let crop_frames = ((w * frames as f64).floor() as usize).max(1);
    let f_offset = rng.random_range(0..=bins - freq_bins);
    let t_offset = if crop_frames <= frames {
        rng.random_range(0..=frames - crop_frames) as isize
    } else {
        -(((crop_frames - frames) / 2) as isize)
    };
    CropSpec {
        freq_bins,
        frames: crop_frames,
        f_offset,
        t_offset,
    }
}

/// Cuts `crop` out of `x` (cells outside the input read as `fill`) and resizes it back to the
/// input shape with bilinear interpolation.
pub fn apply_crop(x: &LogMelSpectrogram, crop: &CropSpec, fill: f32) -> LogMelSpectrogram {
    let (frames, bins) = (x.frames(), x.bins());
    let mut canvas = vec![fill; crop.frames * crop.freq_bins];
    for ct in 0..crop.frames {
        let t = ct as isize + crop.t_offset;
        if t < 0 || t >= frames as isize {
            continue;
        }
        let src = x.frame(t as usize);
        let f0 = crop.f_offset;
        canvas[ct * crop.freq_bins..(ct + 1) * crop.freq_bins]
            .copy_from_slice(&src[f0..f0 + crop.freq_bins]);
    }
    let canvas = LogMelSpectrogram::new(crop.frames, crop.freq_bins, canvas);
    resize_bilinear(&canvas, frames, bins)
}

/// Random resize crop with zero fill in the normalized log domain.
pub fn random_resize_crop<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> LogMelSpectrogram {
    let crop = sample_crop(x.bins(), x.frames(), policy, rng);
    apply_crop(x, &crop, 0.0)
}

/// Half-pixel-centred bilinear resize; equal sizes are an exact copy.
pub fn resize_bilinear(x: &LogMelSpectrogram, frames: usize, bins: usize) -> LogMelSpectrogram {
    if (x.frames(), x.bins()) == (frames, bins) {
        return x.clone();
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, (src - i0 as f64) as f32)
            })
            .collect()
    };
    let tt = taps(frames, x.frames());
    let ft = taps(bins, x.bins());
    let mut data = Vec::with_capacity(frames * bins);
    for &(t0, t1, wt) in &tt {
        let (r0, r1) = (x.frame(t0), x.frame(t1));
        for &(f0, f1, wf) in &ft {
            let a = r0[f0] + wf * (r0[f1] - r0[f0]);
            let b = r1[f0] + wf * (r1[f1] - r1[f0]);
            data.push(a + wt * (b - a));
        }
    }
    LogMelSpectrogram::new(frames, bins, data)
}

/// `ln((1 - lambda) * exp(x) + lambda * exp(n))` cellwise for a given noise field `n`.
pub fn gaussian_mix_with(
    x: &LogMelSpectrogram,
    noise: &[f32],
    lambda: f64,
) -> LogMelSpectrogram {
    assert_eq!(noise.len(), x.data().len());
    let data = x
        .data()
        .iter()
        .zip(noise)
        .map(|(&v, &n)| ((1.0 - lambda) * (v as f64).exp() + lambda * (n as f64).exp()).ln() as f32)
        .collect();
    LogMelSpectrogram::new(x.frames(), x.bins(), data)
}

/// Interpolates toward i.i.d. `N(0, std^2)` noise at ratio `lambda ~ U(0, alpha)`.
///
/// Draw order: ratio, then one normal sample per cell in storage order.
pub fn gaussian_mix<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    std: f64,
    alpha: f64,
    rng: &mut R,
) -> LogMelSpectrogram {
    let lambda = uniform(rng, 0.0, alpha);
    let normal = Normal::new(0.0, std).expect("finite non-negative std");
    let noise: Vec<f32> = (0..x.data().len()).map(|_| normal.sample(rng) as f32).collect();
    gaussian_mix_with(x, &noise, lambda)
}

/// Standardizes a batch with one mean/std over every cell of every member (std floored).
pub fn post_normalize(batch: &[LogMelSpectrogram]) -> Result<Vec<LogMelSpectrogram>, AugmentError> {
    let count: usize = batch.iter().map(|x| x.data().len()).sum();
    if count == 0 {
        return Err(AugmentError::EmptyBatch);
    }
    let n = count as f64;
    let mean = batch.iter().flat_map(|x| x.data()).map(|&v| v as f64).sum::<f64>() / n;
    let var = batch
        .iter()
        .flat_map(|x| x.data())
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(SIGMA_FLOOR);
    Ok(batch
        .iter()
        .map(|x| x.map(|v| ((v as f64 - mean) / std) as f32))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng, frames: usize, bins: usize) -> LogMelSpectrogram {
        let data = (0..frames * bins).map(|_| rng.random_range(-3.0f32..3.0)).collect();
        LogMelSpectrogram::new(frames, bins, data)
    }

    #[test]
    fn mixup_zero_ratio_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_spec(&mut rng, 100, 64);
        let q = random_spec(&mut rng, 100, 64).map(f32::exp);
        let y = mixup_with(&x, &q, 0.0);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn mixup_formula_cases() {
        let x = LogMelSpectrogram::filled(2, 3, 0.0);
        let ones = LogMelSpectrogram::filled(2, 3, 1.0);
        for lambda in [0.0, 0.17, 0.4] {
            assert!(mixup_with(&x, &ones, lambda).data().iter().all(|&v| v.abs() < 1e-7));
        }
        let x = LogMelSpectrogram::filled(1, 1, 4f32.ln());
        let y = mixup_with(&x, &LogMelSpectrogram::filled(1, 1, 1.0), 0.4);
        assert!((y.data()[0] as f64 - 2.8f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn mixup_with_empty_bank_returns_input_and_fills_bank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_spec(&mut rng, 10, 4);
        let mut bank = MixupBank::new(4);
        let y = mixup(&x, &mut bank, 0.4, &mut rng);
        assert_eq!(y, x);
        assert_eq!(bank.len(), 1);
        let stored = bank.get(0).unwrap();
        for (s, v) in stored.data().iter().zip(x.data()) {
            assert_eq!(*s, v.exp());
        }
    }

    proptest! {
        #[test]
        fn bank_keeps_most_recent_entries(cap in 1usize..8, pushes in 0usize..30) {
            let mut bank = MixupBank::new(cap);
            for k in 0..pushes {
                bank.push(LogMelSpectrogram::filled(1, 1, k as f32));
                prop_assert!(bank.len() <= cap);
            }
            let kept: Vec<f32> = bank.iter().map(|e| e.data()[0]).collect();
            let expected: Vec<f32> = (pushes.saturating_sub(cap)..pushes).map(|k| k as f32).collect();
            prop_assert_eq!(kept, expected);
        }

        #[test]
        fn spectral_augmentations_preserve_shape(seed in any::<u64>(), frames in 1usize..40, bins in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_spec(&mut rng, frames, bins);
            let policy = AugmentationPolicy::default();
            let mut bank = MixupBank::new(3);
            for _ in 0..3 {
                let y = mixup(&x, &mut bank, 0.4, &mut rng);
                prop_assert_eq!((y.frames(), y.bins()), (frames, bins));
            }
            let y = random_resize_crop(&x, &policy, &mut rng);
            prop_assert_eq!((y.frames(), y.bins()), (frames, bins));
            let y = gaussian_mix(&x, 0.2, 0.4, &mut rng);
            prop_assert_eq!((y.frames(), y.bins()), (frames, bins));
            prop_assert!(y.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn collapsed_rrc_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_spec(&mut rng, 100, 64);
        let policy = AugmentationPolicy {
            rrc_freq_range: [1.0, 1.0],
            rrc_time_range: [1.0, 1.0],
            ..Default::default()
        };
        let crop = sample_crop(64, 100, &policy, &mut rng);
        assert_eq!(crop, CropSpec { freq_bins: 64, frames: 100, f_offset: 0, t_offset: 0 });
        let y = random_resize_crop(&x, &policy, &mut rng);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn frequency_draw_above_one_is_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = AugmentationPolicy {
            rrc_freq_range: [1.4, 1.4],
            ..Default::default()
        };
        let crop = sample_crop(64, 100, &policy, &mut rng);
        assert_eq!((crop.freq_bins, crop.f_offset), (64, 0));
    }

    #[test]
    fn wide_time_crop_centres_input_with_fill() {
        let x = LogMelSpectrogram::filled(100, 2, 1.0);
        let policy = AugmentationPolicy {
            rrc_freq_range: [1.0, 1.0],
            rrc_time_range: [1.5, 1.5],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let crop = sample_crop(2, 100, &policy, &mut rng);
        assert_eq!((crop.frames, crop.t_offset), (150, -25));
        // 50 fill columns, 25 on each side, then squeezed back to 100 frames
        let y = apply_crop(&x, &crop, 0.0);
        let col: Vec<f32> = (0..100).map(|t| y.get(t, 0)).collect();
        assert!(col[..16].iter().all(|&v| v == 0.0));
        assert!(col[84..].iter().all(|&v| v == 0.0));
        assert!(col[18..82].iter().all(|&v| v == 1.0));
        let total: f32 = col.iter().sum();
        assert!((total - 100.0 / 1.5).abs() < 1.0, "{total}");
    }

    #[test]
    fn gaussian_zero_ratio_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_spec(&mut rng, 20, 8);
        let noise: Vec<f32> = (0..160).map(|_| rng.random_range(-0.5f32..0.5)).collect();
        let y = gaussian_mix_with(&x, &noise, 0.0);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        let a = gaussian_mix(&x, 0.2, 0.4, &mut ChaCha8Rng::seed_from_u64(9));
        let b = gaussian_mix(&x, 0.2, 0.4, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_noise_field_has_requested_spread() {
        // Invert the interpolation cell by cell to recover the noise actually mixed in.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_spec(&mut rng, 100, 100);
        let lambda = 0.3;
        let normal = Normal::new(0.0, 0.2).unwrap();
        let noise: Vec<f32> = (0..10_000).map(|_| normal.sample(&mut rng) as f32).collect();
        let y = gaussian_mix_with(&x, &noise, lambda);
        let mut deviation = 0.0;
        let recovered: Vec<f64> = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&xv, &yv)| {
                deviation += (yv - xv).abs() as f64;
                (((yv as f64).exp() - (1.0 - lambda) * (xv as f64).exp()) / lambda).ln()
            })
            .collect();
        assert!(deviation > 0.0);
        let n = recovered.len() as f64;
        let mean = recovered.iter().sum::<f64>() / n;
        let std = (recovered.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.2).abs() < 0.02, "recovered std {std}");
    }

    #[test]
    fn post_normalize_contract() {
        let out = post_normalize(&[LogMelSpectrogram::filled(3, 3, 2.5)]).unwrap();
        assert!(out[0].data().iter().all(|&v| v == 0.0));
        let out = post_normalize(&[
            LogMelSpectrogram::new(1, 1, vec![0.0]),
            LogMelSpectrogram::new(1, 1, vec![2.0]),
        ])
        .unwrap();
        assert_eq!((out[0].data()[0], out[1].data()[0]), (-1.0, 1.0));
        assert!(matches!(post_normalize(&[]), Err(AugmentError::EmptyBatch)));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch: Vec<_> = (0..6).map(|_| random_spec(&mut rng, 30, 16).map(|v| 3.0 * v - 7.0)).collect();
        let out = post_normalize(&batch).unwrap();
        let all: Vec<f64> = out.iter().flat_map(|x| x.data()).map(|&v| v as f64).collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let std = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-6 && (std - 1.0).abs() < 1e-5, "{mean} {std}");
    }
}
