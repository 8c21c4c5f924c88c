//! Objective speaker-similarity and spectral-distortion metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::audio_io::{load_wav, AudioError};
use crate::embedding::{Embedder, EmbeddingError};
use crate::features::LogMelSpectrogram;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,
    #[error("vectors differ in length ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("no embeddings to average")]
    Empty,
    #[error("empty sequence")]
    EmptySequence,
    #[error("speaker sets differ: only in probe {only_probe:?}, only in reference {only_reference:?}")]
    SpeakerMismatch {
        only_probe: Vec<String>,
        only_reference: Vec<String>,
    },
    #[error("speaker {0} has no utterances")]
    EmptySpeaker(String),
    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// `1 - cos(u1, u2)`, in `[0, 2]`.
pub fn cosine_distance(u1: &[f32], u2: &[f32]) -> Result<f64, EvalError> {
    cosine_distance_f64(
        &u1.iter().map(|&v| v as f64).collect::<Vec<_>>(),
        &u2.iter().map(|&v| v as f64).collect::<Vec<_>>(),
    )
}

pub fn cosine_distance_f64(u1: &[f64], u2: &[f64]) -> Result<f64, EvalError> {
    if u1.len() != u2.len() {
        return Err(EvalError::DimMismatch(u1.len(), u2.len()));
    }
    let n1 = u1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = u2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    let cos = u1.iter().zip(u2).map(|(a, b)| a * b).sum::<f64>() / (n1 * n2);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Elementwise mean, accumulated in f64.
pub fn speaker_centroid<V: AsRef<[f32]>>(embs: &[V]) -> Result<Vec<f64>, EvalError> {
    let first = embs.first().ok_or(EvalError::Empty)?.as_ref();
    let mut sum = vec![0.0f64; first.len()];
    for e in embs {
        let e = e.as_ref();
        if e.len() != sum.len() {
            return Err(EvalError::DimMismatch(sum.len(), e.len()));
        }
        for (s, &v) in sum.iter_mut().zip(e) {
            *s += v as f64;
        }
    }
    let n = embs.len() as f64;
    Ok(sum.into_iter().map(|v| v / n).collect())
}

/// Median; the mean of the two middle values for an even count. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 { (v[m - 1] + v[m]) / 2.0 } else { v[m] })
}

/// Speaker id to utterance paths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeakerManifest {
    pub speakers: BTreeMap<String, Vec<PathBuf>>,
}

impl SpeakerManifest {
    /// Parses `speaker<TAB>path` lines. Blank lines and `#` comments are skipped; relative
    /// paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>, origin: &Path) -> Result<Self, EvalError> {
        let err = |msg: String| EvalError::Manifest {
            path: origin.to_path_buf(),
            msg,
        };
        let mut speakers: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (spk, path) = line
                .split_once('\t')
                .ok_or_else(|| err(format!("line {}: expected speaker<TAB>path", n + 1)))?;
            if spk.is_empty() || path.is_empty() {
                return Err(err(format!("line {}: empty field", n + 1)));
            }
            let mut p = PathBuf::from(path);
            if let (Some(b), true) = (base, p.is_relative()) {
                p = b.join(p);
            }
            let list = speakers.entry(spk.to_string()).or_default();
            if list.contains(&p) {
                return Err(err(format!("line {}: {} listed twice for {spk}", n + 1, p.display())));
            }
            list.push(p);
        }
        Ok(Self { speakers })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent(), path)
    }

    /// Serializes with paths as given.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (spk, paths) in &self.speakers {
            for p in paths {
                s.push_str(&format!("{spk}\t{}\n", p.display()));
            }
        }
        s
    }

    pub fn all_paths(&self) -> Vec<PathBuf> {
        self.speakers.values().flatten().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.speakers.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct S2tResult {
    pub median: f64,
    pub per_speaker: BTreeMap<String, f64>,
}

/// Median over speakers of the cosine distance between probe and reference centroids.
pub fn s2t_same_embeddings(
    probe: &BTreeMap<String, Vec<Vec<f32>>>,
    reference: &BTreeMap<String, Vec<Vec<f32>>>,
) -> Result<S2tResult, EvalError> {
    let a: BTreeSet<&String> = probe.keys().collect();
    let b: BTreeSet<&String> = reference.keys().collect();
    if a != b {
        return Err(EvalError::SpeakerMismatch {
            only_probe: a.difference(&b).map(|s| s.to_string()).collect(),
            only_reference: b.difference(&a).map(|s| s.to_string()).collect(),
        });
    }
    if probe.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut per_speaker = BTreeMap::new();
    for (spk, p) in probe {
        let r = &reference[spk];
        if p.is_empty() || r.is_empty() {
            return Err(EvalError::EmptySpeaker(spk.clone()));
        }
        let d = cosine_distance_f64(&speaker_centroid(p)?, &speaker_centroid(r)?)?;
        per_speaker.insert(spk.clone(), d);
    }
    let values: Vec<f64> = per_speaker.values().copied().collect();
    Ok(S2tResult {
        median: median(&values).expect("non-empty"),
        per_speaker,
    })
}

/// Embeds every utterance of a manifest.
pub fn embed_manifest(
    manifest: &SpeakerManifest,
    embedder: &Embedder,
) -> Result<BTreeMap<String, Vec<Vec<f32>>>, EvalError> {
    let mut out = BTreeMap::new();
    for (spk, paths) in &manifest.speakers {
        if paths.is_empty() {
            return Err(EvalError::EmptySpeaker(spk.clone()));
        }
        let mut embs = Vec::with_capacity(paths.len());
        for p in paths {
            embs.push(embedder.embed(&load_wav(p)?)?);
        }
        out.insert(spk.clone(), embs);
    }
    Ok(out)
}

/// s2t-same between two manifests with a shared speaker set.
pub fn s2t_same(
    probe: &SpeakerManifest,
    reference: &SpeakerManifest,
    embedder: &Embedder,
) -> Result<S2tResult, EvalError> {
    let a: BTreeSet<&String> = probe.speakers.keys().collect();
    let b: BTreeSet<&String> = reference.speakers.keys().collect();
    if a != b {
        return Err(EvalError::SpeakerMismatch {
            only_probe: a.difference(&b).map(|s| s.to_string()).collect(),
            only_reference: b.difference(&a).map(|s| s.to_string()).collect(),
        });
    }
    s2t_same_embeddings(&embed_manifest(probe, embedder)?, &embed_manifest(reference, embedder)?)
}

/// `metric<TAB>speaker<TAB>value`.
pub fn report_line(metric: &str, speaker: &str, value: f64) -> String {
    format!("{metric}\t{speaker}\t{value:.6}")
}

/// Default number of kept cepstral coefficients.
pub const DEFAULT_CEPSTRA: usize = 13;

/// Frames of cepstral coefficients `c_1 ..= c_K`, row-major `T x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstraSequence {
    frames: usize,
    k: usize,
    data: Vec<f64>,
}

impl CepstraSequence {
    pub fn new(frames: usize, k: usize, data: Vec<f64>) -> Self {
        assert_eq!(frames * k, data.len(), "cepstra data must be frames x k");
        assert!(k >= 1, "at least one coefficient");
        Self { frames, k, data }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn coeffs(&self) -> usize {
        self.k
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.k..(t + 1) * self.k]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Orthonormal DCT-II matrix, row `k` holds basis `k` over `n` inputs.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = Vec::with_capacity(n * n);
    for k in 0..n {
        let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m.push(s * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos());
        }
    }
    m
}

/// Per-frame orthonormal DCT-II of the log-mel values, keeping coefficients `1..=k`.
pub fn cepstra(x: &LogMelSpectrogram, k: usize) -> CepstraSequence {
    let f = x.bins();
    assert!(k >= 1 && k < f, "need 1 <= K < bins (K = {k}, bins = {f})");
    let m = dct_matrix(f);
    let mut data = Vec::with_capacity(x.frames() * k);
    for t in 0..x.frames() {
        let frame = x.frame(t);
        for c in 1..=k {
            let row = &m[c * f..(c + 1) * f];
            data.push(row.iter().zip(frame).map(|(a, &b)| a * b as f64).sum());
        }
    }
    CepstraSequence::new(x.frames(), k, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub path: Vec<(usize, usize)>,
    pub total_cost: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Full-matrix DTW with steps (1,0), (0,1), (1,1) and Euclidean local cost. Among equal-cost
/// predecessors the diagonal wins, then the step in `a`, then the step in `b`.
pub fn dtw_align(a: &CepstraSequence, b: &CepstraSequence) -> Result<Alignment, EvalError> {
    let (n, m) = (a.frames(), b.frames());
    if n == 0 || m == 0 {
        return Err(EvalError::EmptySequence);
    }
    if a.coeffs() != b.coeffs() {
        return Err(EvalError::DimMismatch(a.coeffs(), b.coeffs()));
    }
    let idx = |i: usize, j: usize| i * m + j;
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let local = euclid(a.frame(i), b.frame(j));
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[idx(i - 1, j - 1)] } else { f64::INFINITY };
                let up = if i > 0 { acc[idx(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { acc[idx(i, j - 1)] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[idx(i, j)] = prev + local;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let mut best: Option<((usize, usize), f64)> = None;
        let cands = [
            (i > 0 && j > 0).then(|| (i - 1, j - 1)),
            (i > 0).then(|| (i - 1, j)),
            (j > 0).then(|| (i, j - 1)),
        ];
        for c in cands.into_iter().flatten() {
            let v = acc[idx(c.0, c.1)];
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((c, v));
            }
        }
        (i, j) = best.expect("some predecessor exists").0;
        path.push((i, j));
    }
    path.reverse();
    Ok(Alignment {
        path,
        total_cost: acc[idx(n - 1, m - 1)],
    })
}

/// `10 / ln 10`.
pub const MCD_SCALE: f64 = 10.0 / std::f64::consts::LN_10;

/// `(10/ln 10) * mean over path of sqrt(2 * sum_k (a_k - b_k)^2)`.
pub fn mcd_along_path(a: &CepstraSequence, b: &CepstraSequence, path: &[(usize, usize)]) -> f64 {
    let total: f64 = path
        .iter()
        .map(|&(i, j)| (2.0 * euclid(a.frame(i), b.frame(j)).powi(2)).sqrt())
        .sum();
    MCD_SCALE * total / path.len() as f64
}

/// Mel cepstral distortion in dB over the DTW alignment.
pub fn mcd(a: &CepstraSequence, b: &CepstraSequence) -> Result<f64, EvalError> {
    let al = dtw_align(a, b)?;
    Ok(mcd_along_path(a, b, &al.path))
}
