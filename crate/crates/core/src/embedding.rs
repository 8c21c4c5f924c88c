//! Utterance-level speaker embeddings from the trained online encoder.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::audio_io::{resample, AudioError, Waveform};
use crate::byol::Checkpoint;
use crate::features::{apply_norm, FeatureError, LogMelSpectrogram, MelExtractor, NormStats};
use crate::nn::{infer, NetworkSpec, NnError, ParameterSet, Tensor};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("utterance yields no segments")]
    NoSegments,
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One utterance's embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f32>,
}

/// Splits frames into non-overlapping windows of `segment_frames`.
///
/// A trailing remainder of at least half a segment is zero-padded and kept; a shorter one is
/// dropped unless it is the only segment.
pub fn segment_utterance(x: &LogMelSpectrogram, segment_frames: usize) -> Vec<LogMelSpectrogram> {
    assert!(segment_frames > 0, "segment_frames must be positive");
    let t = x.frames();
    let full = t / segment_frames;
    let rem = t % segment_frames;
    let mut out: Vec<_> = (0..full)
        .map(|k| x.slice_frames(k * segment_frames, segment_frames, 0.0))
        .collect();
    if rem > 0 && (2 * rem >= segment_frames || full == 0) {
        out.push(x.slice_frames(full * segment_frames, segment_frames, 0.0));
    }
    out
}

/// Feature extraction, normalization, and encoder weights for inference.
pub struct Embedder {
    extractor: MelExtractor,
    stats: NormStats,
    spec: NetworkSpec,
    params: ParameterSet<f32>,
}

impl Embedder {
    /// `stats` should be the training-corpus statistics, whatever corpus is being embedded.
    pub fn new(ck: &Checkpoint, stats: NormStats) -> Result<Self, EmbeddingError> {
        let (spec, params) = ck.encoder();
        Ok(Self {
            extractor: MelExtractor::new(ck.mel)?,
            stats,
            spec: spec.clone(),
            params: params.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.output_len()
    }

    pub fn segment_frames(&self) -> usize {
        self.spec.input_shape[1]
    }

    /// Mean of the encoder outputs over the utterance's segments.
    pub fn embed(&self, w: &Waveform) -> Result<Vec<f32>, EmbeddingError> {
        let rate = self.extractor.config().sample_rate;
        let w = if w.sample_rate() == rate {
            w.clone()
        } else {
            resample(w, rate)?
        };
        let x = apply_norm(&self.extractor.extract(&w)?, &self.stats);
        self.embed_features(&x)
    }

    /// Embeds already-normalized log-mel features.
    pub fn embed_features(&self, x: &LogMelSpectrogram) -> Result<Vec<f32>, EmbeddingError> {
        let segments = segment_utterance(x, self.segment_frames());
        if segments.is_empty() {
            return Err(EmbeddingError::NoSegments);
        }
        let items: Vec<&[f32]> = segments.iter().map(|s| s.data()).collect();
        let input = Tensor::stack(&items, &self.spec.input_shape);
        let y = infer(&self.spec, &self.params, &input)?;
        let dim = y.item_len();
        let mut mean = vec![0.0f64; dim];
        for n in 0..y.batch() {
            for (m, &v) in mean.iter_mut().zip(y.item(n)) {
                *m += v as f64;
            }
        }
        let k = y.batch() as f64;
        Ok(mean.into_iter().map(|v| (v / k) as f32).collect())
    }
}

/// One-shot embedding with the checkpoint's encoder.
pub fn embed_utterance(w: &Waveform, ck: &Checkpoint, stats: NormStats) -> Result<Vec<f32>, EmbeddingError> {
    Embedder::new(ck, stats)?.embed(w)
}

/// Raw little-endian f32 values, one embedding after another, no header.
pub fn write_embeddings_bin(out: &mut impl Write, embs: &[EmbeddingVector]) -> io::Result<()> {
    for e in embs {
        for v in &e.values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// One line per utterance: `id<TAB>v1 v2 ...`.
pub fn write_embeddings_txt(out: &mut impl Write, embs: &[EmbeddingVector]) -> io::Result<()> {
    for e in embs {
        let vals: Vec<String> = e.values.iter().map(|v| format!("{v:.8e}")).collect();
        writeln!(out, "{}\t{}", e.id, vals.join(" "))?;
    }
    Ok(())
}

pub fn read_embeddings_txt(input: impl BufRead) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, vals) = line
            .split_once('\t')
            .ok_or_else(|| EmbeddingError::Format(format!("line {}: missing tab", n + 1)))?;
        let values = vals
            .split_whitespace()
            .map(|v| v.parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EmbeddingError::Format(format!("line {}: {e}", n + 1)))?;
        out.push(EmbeddingVector {
            id: id.to_string(),
            values,
        });
    }
    Ok(out)
}

pub fn read_embeddings_bin(bytes: &[u8], dim: usize) -> Result<Vec<Vec<f32>>, EmbeddingError> {
    if dim == 0 || bytes.len() % (4 * dim) != 0 {
        return Err(EmbeddingError::Format(format!(
            "{} bytes is not a whole number of {dim}-d f32 vectors",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4 * dim)
        .map(|c| c.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::byol::{Architecture, TrainerState};
    use crate::features::MelConfig;
    use crate::nn::{AdamConfig, LayerSpec, Param};

    fn spec(frames: usize) -> LogMelSpectrogram {
        LogMelSpectrogram::new(frames, 4, (0..frames * 4).map(|i| i as f32 + 1.0).collect())
    }

    #[test]
    fn segmentation_rules() {
        let s = segment_utterance(&spec(250), 100);
        assert_eq!(s.len(), 3);
        assert_eq!(s[2].frames(), 100);
        assert_eq!(s[2].get(49, 0), spec(250).get(249, 0));
        assert_eq!(s[2].get(50, 0), 0.0);
        assert_eq!(segment_utterance(&spec(100), 100).len(), 1);
        assert_eq!(segment_utterance(&spec(249), 100).len(), 2);
        assert_eq!(segment_utterance(&spec(150), 100).len(), 2);
        let only = segment_utterance(&spec(30), 100);
        assert_eq!(only.len(), 1);
        assert_eq!(only[0].get(29, 3), spec(30).get(29, 3));
        assert_eq!(only[0].get(30, 3), 0.0);
    }

    fn checkpoint(arch: Architecture, seed: u64) -> Checkpoint {
        Checkpoint {
            mel: MelConfig::default(),
            stats: NormStats::new(-6.0, 4.0),
            seed,
            state: TrainerState::init(arch, AdamConfig::default(), 0.99, seed).unwrap(),
        }
    }

    /// Encoder whose output is its bias, regardless of input.
    fn constant_checkpoint(c: &[f32]) -> Checkpoint {
        let mut ck = checkpoint(Architecture::new(100, 64, &[2], c.len(), 4, 3, 4).unwrap(), 0);
        let enc = &mut ck.state.online.f;
        let last = ck.state.arch.encoder.layers.len() - 1;
        assert!(matches!(ck.state.arch.encoder.layers[last], LayerSpec::Linear { .. }));
        let (w, b): (&mut Param<f32>, &mut Param<f32>) = enc.layer_mut(last).unwrap();
        w.data.iter_mut().for_each(|v| *v = 0.0);
        b.data.copy_from_slice(c);
        ck
    }

    fn burst(len: usize, silence: usize) -> Waveform {
        let s = (0..len)
            .map(|i| {
                if i < silence || i >= len - silence {
                    0.0
                } else {
                    let t = i as f64 / 16000.0;
                    (0.4 * (2.0 * std::f64::consts::PI * 180.0 * t).sin()
                        + 0.2 * (2.0 * std::f64::consts::PI * 730.0 * t).sin()) as f32
                }
            })
            .collect();
        Waveform::new(s, 16000).unwrap()
    }

    #[test]
    fn constant_encoder_gives_constant_embedding() {
        let c = [0.5f32, -1.25, 3.0];
        let ck = constant_checkpoint(&c);
        for len in [3000, 16000, 41234] {
            let e = embed_utterance(&burst(len, 0), &ck, ck.stats).unwrap();
            assert_eq!(e, c.to_vec());
        }
    }

    #[test]
    fn one_second_is_one_segment() {
        let ck = checkpoint(Architecture::new(100, 64, &[3], 8, 4, 3, 4).unwrap(), 2);
        let w = burst(16000, 0);
        let emb = Embedder::new(&ck, ck.stats).unwrap();
        let x = apply_norm(&emb.extractor.extract(&w).unwrap(), &ck.stats);
        assert_eq!(x.frames(), 100);
        let (spec, params) = ck.encoder();
        let direct = infer(spec, params, &Tensor::new(vec![1, 1, 100, 64], x.data().to_vec())).unwrap();
        assert_eq!(emb.embed(&w).unwrap(), direct.into_data());
    }

    #[test]
    fn self_concatenation_keeps_embedding() {
        let ck = checkpoint(Architecture::new(100, 64, &[3], 8, 4, 3, 4).unwrap(), 3);
        let w = burst(16000, 600);
        let mut twice = w.samples().to_vec();
        twice.extend_from_slice(w.samples());
        let twice = Waveform::new(twice, 16000).unwrap();
        let a = embed_utterance(&w, &ck, ck.stats).unwrap();
        let b = embed_utterance(&twice, &ck, ck.stats).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn resamples_foreign_rates() {
        let ck = checkpoint(Architecture::new(100, 64, &[2], 5, 4, 3, 4).unwrap(), 4);
        let w8k = Waveform::new(burst(16000, 0).samples().iter().step_by(2).copied().collect(), 8000).unwrap();
        assert_eq!(embed_utterance(&w8k, &ck, ck.stats).unwrap().len(), 5);
    }

    #[test]
    fn text_and_binary_formats() {
        let embs = vec![
            EmbeddingVector {
                id: "a".into(),
                values: vec![1.5, -2.0, 3.25e-7],
            },
            EmbeddingVector {
                id: "b c".into(),
                values: vec![0.0, 1.0, f32::MIN_POSITIVE],
            },
        ];
        let mut txt = Vec::new();
        write_embeddings_txt(&mut txt, &embs).unwrap();
        assert_eq!(read_embeddings_txt(&txt[..]).unwrap(), embs);
        let mut bin = Vec::new();
        write_embeddings_bin(&mut bin, &embs).unwrap();
        assert_eq!(bin.len(), 24);
        let back = read_embeddings_bin(&bin, 3).unwrap();
        assert_eq!(back[1], embs[1].values);
        assert!(read_embeddings_bin(&bin, 5).is_err());
    }
}
