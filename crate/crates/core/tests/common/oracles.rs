//! Independent reference computations used to freeze expected values in tests.
//!
//! Nothing here calls into the crate's implementation paths.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Frequency (Hz) of the largest Hann-windowed DFT magnitude in `[fmin, fmax]`.
///
/// Direct DFT evaluation: a 0.5 Hz coarse grid followed by a 0.005 Hz refinement around the best
/// coarse candidate.
pub fn peak_frequency(samples: &[f32], rate: f64, fmin: f64, fmax: f64) -> f64 {
    let n = samples.len();
    let windowed: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, &s)| s as f64 * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()))
        .collect();
    let power = |f: f64| {
        let w = 2.0 * PI * f / rate;
        let (mut re, mut im) = (0.0, 0.0);
        // recurrence for cos/sin of k*w keeps this O(n) without per-sample trig calls
        let (cw, sw) = (w.cos(), w.sin());
        let (mut c, mut s) = (1.0f64, 0.0f64);
        for &x in &windowed {
            re += x * c;
            im -= x * s;
            let nc = c * cw - s * sw;
            s = s * cw + c * sw;
            c = nc;
        }
        re * re + im * im
    };
    let scan = |lo: f64, hi: f64, step: f64| {
        let mut best = (lo, f64::MIN);
        let mut f = lo;
        while f <= hi {
            let p = power(f);
            if p > best.1 {
                best = (f, p);
            }
            f += step;
        }
        best.0
    };
    let coarse = scan(fmin, fmax, 0.5);
    scan((coarse - 0.5).max(fmin), (coarse + 0.5).min(fmax), 0.005)
}

/// Mean and population standard deviation in two passes.
pub fn two_pass_mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum accumulated Euclidean cost over every monotone path from (0,0) to the far corner
/// using steps (1,0), (0,1), (1,1), by exhaustive enumeration. Returns (cost, path).
pub fn brute_force_dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, Vec<(usize, usize)>) {
    fn walk(
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        i: usize,
        j: usize,
        path: &mut Vec<(usize, usize)>,
        cost: f64,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        let cost = cost + euclid(&a[i], &b[j]);
        path.push((i, j));
        if i + 1 == a.len() && j + 1 == b.len() {
            if cost < best.0 {
                *best = (cost, path.clone());
            }
        } else {
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, path, cost, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, path, cost, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, path, cost, best);
            }
        }
        path.pop();
    }
    let mut best = (f64::INFINITY, Vec::new());
    walk(a, b, 0, 0, &mut Vec::new(), 0.0, &mut best);
    best
}

/// Mel-cepstral distortion along a given alignment path, straight from the definition.
pub fn mcd_along_path(a: &[Vec<f64>], b: &[Vec<f64>], path: &[(usize, usize)]) -> f64 {
    let k = 10.0 / std::f64::consts::LN_10;
    let total: f64 = path
        .iter()
        .map(|&(i, j)| (2.0 * a[i].iter().zip(&b[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sqrt())
        .sum();
    k * total / path.len() as f64
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies of `n_mels` triangular filters evenly spaced on the mel axis.
pub fn mel_centers(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    (1..=n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Pearson correlation of two equal-length slices.
pub fn correlation(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
    let mb = b.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

pub fn sine(freq: f64, rate: u32, len: usize, amp: f64) -> Vec<f32> {
    (0..len)
        .map(|i| (amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()) as f32)
        .collect()
}
