//! Pitch shifting and duration scaling in the waveform domain.

use crate::audio_io::{SincResampler, Waveform};

const WINDOW: usize = 512;
const SYNTH_HOP: usize = WINDOW / 2;
const SEARCH_RADIUS: isize = 128;
const COARSE_STEP: isize = 4;

/// WSOLA time-scale modification. `factor` is output duration over input duration and must lie
/// in `[0.5, 2.0]`; output length is `round(factor * len)` and pitch is preserved.
pub fn time_stretch(w: &Waveform, factor: f64) -> Waveform {
    assert!(
        (0.5..=2.0).contains(&factor),
        "stretch factor {factor} outside [0.5, 2.0]"
    );
    let target = (factor * w.len() as f64).round() as usize;
    time_stretch_to_len(w, target)
}

/// WSOLA toward an exact output length.
pub fn time_stretch_to_len(w: &Waveform, target_len: usize) -> Waveform {
    let samples = wsola(w.samples(), target_len);
    Waveform::new(samples, w.sample_rate()).expect("overlap-add of finite samples is finite")
}

/// Shifts pitch by `semitones` keeping duration: resample by `2^(-s/12)` then stretch back.
pub fn pitch_shift(w: &Waveform, semitones: f64) -> Waveform {
    assert!(semitones.abs() <= 12.0, "pitch shift limited to +-12 semitones");
    if semitones == 0.0 || w.is_empty() {
        return w.clone();
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let squeezed = SincResampler::new(1.0 / ratio).process(w.samples());
    let squeezed = Waveform::new(squeezed, w.sample_rate()).expect("finite resampler output");
    time_stretch_to_len(&squeezed, w.len())
}

fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()) as f32)
        .collect()
}

fn read(x: &[f32], i: isize) -> f32 {
    if i >= 0 && (i as usize) < x.len() {
        x[i as usize]
    } else {
        0.0
    }
}

/// Normalized cross-correlation of the template with `x[pos .. pos + len]`.
fn similarity(x: &[f32], template: &[f32], pos: isize) -> f64 {
    let (mut dot, mut energy) = (0.0f64, 0.0f64);
    if pos >= 0 && pos as usize + template.len() <= x.len() {
        let seg = &x[pos as usize..pos as usize + template.len()];
        let (d, e) = seg
            .iter()
            .zip(template)
            .fold((0.0f32, 0.0f32), |(d, e), (&s, &t)| (d + s * t, e + s * s));
        dot = d as f64;
        energy = e as f64;
    } else {
        for (k, &t) in template.iter().enumerate() {
            let s = read(x, pos + k as isize);
            dot += (s * t) as f64;
            energy += (s * s) as f64;
        }
    }
    if energy <= 1e-12 {
        0.0
    } else {
        dot / energy.sqrt()
    }
}

fn wsola(x: &[f32], target_len: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; target_len];
    if target_len == 0 || x.is_empty() {
        return out;
    }
    let window = hann(WINDOW);
    let speed = x.len() as f64 / target_len as f64;
    let half = (WINDOW / 2) as isize;
    let overlap = WINDOW - SYNTH_HOP;
    let mut template = vec![0.0f32; overlap];
    let mut prev: isize = -half;
    let mut k = 0usize;
    loop {
        let synth_start = (k * SYNTH_HOP) as isize - half;
        if synth_start >= target_len as isize {
            break;
        }
        let analysis = if k == 0 {
            -half
        } else {
            let nominal = (k as f64 * SYNTH_HOP as f64 * speed).round() as isize - half;
            // natural continuation of the previously copied segment
            let natural = prev + SYNTH_HOP as isize;
            for (i, t) in template.iter_mut().enumerate() {
                *t = read(x, natural + i as isize);
            }
            best_offset(x, &template, nominal)
        };
        for (i, &wv) in window.iter().enumerate() {
            let o = synth_start + i as isize;
            if o >= 0 && (o as usize) < target_len {
                out[o as usize] += wv * read(x, analysis + i as isize);
            }
        }
        prev = analysis;
        k += 1;
    }
    out
}

/// Coarse-to-fine search over `nominal +- SEARCH_RADIUS`; ties keep the smaller offset.
fn best_offset(x: &[f32], template: &[f32], nominal: isize) -> isize {
    let mut best = (0isize, similarity(x, template, nominal));
    let consider = |delta: isize, best: &mut (isize, f64)| {
        let s = similarity(x, template, nominal + delta);
        if s > best.1 + 1e-9 {
            *best = (delta, s);
        }
    };
    let mut d = COARSE_STEP;
    while d <= SEARCH_RADIUS {
        consider(-d, &mut best);
        consider(d, &mut best);
        d += COARSE_STEP;
    }
    let centre = best.0;
    for d in 1..COARSE_STEP {
        for delta in [centre - d, centre + d] {
            if delta.abs() <= SEARCH_RADIUS {
                consider(delta, &mut best);
            }
        }
    }
    nominal + best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_oracles::{correlation, peak_frequency, sine};

    fn tone(freq: f64, len: usize) -> Waveform {
        Waveform::new(sine(freq, 16000, len, 0.5), 16000).unwrap()
    }

    fn speechlike(len: usize) -> Waveform {
        // a few inharmonic partials with a slow amplitude envelope
        let s = (0..len)
            .map(|i| {
                let t = i as f64 / 16000.0;
                let env = 0.6 + 0.4 * (2.0 * std::f64::consts::PI * 3.0 * t).sin();
                let v = [(137.0, 0.5), (411.0, 0.3), (1290.0, 0.1), (2333.0, 0.05)]
                    .iter()
                    .map(|(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                    .sum::<f64>();
                (env * v) as f32
            })
            .collect();
        Waveform::new(s, 16000).unwrap()
    }

    #[test]
    fn unit_factor_is_near_identity() {
        let w = speechlike(16000);
        let y = time_stretch(&w, 1.0);
        assert_eq!(y.len(), w.len());
        assert!(correlation(w.samples(), y.samples()) >= 0.99);
    }

    #[test]
    fn stretch_length_contract() {
        let w = speechlike(16000);
        let y = time_stretch(&w, 1.05);
        assert!((y.len() as i64 - 16800).abs() <= 256);
        assert_eq!(time_stretch(&w, 0.95).len(), 15200);
    }

    #[test]
    fn stretch_keeps_tone_frequency() {
        let y = time_stretch(&tone(220.0, 16000), 0.95);
        let f = peak_frequency(y.samples(), 16000.0, 100.0, 1000.0);
        assert!((f - 220.0).abs() <= 0.02 * 220.0, "{f}");
    }

    #[test]
    fn zero_semitones_is_identity() {
        let w = speechlike(16000);
        let y = pitch_shift(&w, 0.0);
        assert!(correlation(w.samples(), y.samples()) >= 0.99);
    }

    #[test]
    fn octave_up_doubles_tone() {
        let y = pitch_shift(&tone(220.0, 16000), 12.0);
        assert_eq!(y.len(), 16000);
        let f = peak_frequency(y.samples(), 16000.0, 100.0, 2000.0);
        assert!((f - 440.0).abs() <= 0.02 * 440.0, "{f}");
    }

    #[test]
    fn one_semitone_down() {
        let y = pitch_shift(&tone(220.0, 16000), -1.0);
        let expected = 220.0 * 2f64.powf(-1.0 / 12.0);
        let f = peak_frequency(y.samples(), 16000.0, 100.0, 1000.0);
        assert!((f - expected).abs() <= 0.02 * expected, "{f} vs {expected}");
    }

    #[test]
    fn up_then_down_restores_fundamental() {
        for s in [1.0, 2.0, 5.0] {
            let y = pitch_shift(&pitch_shift(&tone(300.0, 16000), s), -s);
            let f = peak_frequency(y.samples(), 16000.0, 100.0, 1000.0);
            assert!((f - 300.0).abs() <= 0.02 * 300.0, "s={s}: {f}");
        }
    }
}
