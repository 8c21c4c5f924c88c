//! Binary checkpoint container.
//!
//! Layout (little-endian): `"BYLC"`, `u32` version, `u32` chunk count, then per chunk a `u16`
//! name length, the UTF-8 name, a `u8` dtype (0 = f32, 1 = f64), a `u8` rank, `rank` `u32`
//! dims, and the payload. A CRC32 of every preceding byte closes the file.
//!
//! Scalars and specs travel as small f64 chunks under `meta.*` and `spec.*`; parameter arrays
//! as f32 chunks under `online.*`, `target.*`, `adam.m.*` and `adam.v.*`.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::features::{MelConfig, NormStats};
use crate::nn::{AdamConfig, AdamState, LayerSpec, NetworkSpec, Param, ParameterSet};

use super::model::{Architecture, Online, OnlineAdam, Target};
use super::train::TrainerState;

pub const MAGIC: &[u8; 4] = b"BYLC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Trainer state plus the feature settings needed to embed new audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mel: MelConfig,
    pub stats: NormStats,
    pub seed: u64,
    pub state: TrainerState<f32>,
}

/// A decoded chunk.
#[derive(Debug, Clone, PartialEq)]
pub enum ChunkData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: ChunkData,
}

/// Serializes chunks into the container format.
pub fn encode_chunks(chunks: &[Chunk]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(chunks.len() as u32).to_le_bytes());
    for c in chunks {
        out.extend_from_slice(&(c.name.len() as u16).to_le_bytes());
        out.extend_from_slice(c.name.as_bytes());
        out.push(match c.data {
            ChunkData::F32(_) => 0,
            ChunkData::F64(_) => 1,
        });
        out.push(c.dims.len() as u8);
        for d in &c.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &c.data {
            ChunkData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ChunkData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(format!("ends inside {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses and verifies a container. Structure is checked before the checksum so a short file
/// reports truncation.
pub fn decode_chunks(bytes: &[u8]) -> Result<Vec<Chunk>, CheckpointError> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated("shorter than the magic".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let count = r.u32("chunk count")?;
    let mut chunks = Vec::new();
    for _ in 0..count {
        let nlen = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(nlen, "name")?)
            .map_err(|_| CheckpointError::Malformed("chunk name is not UTF-8".into()))?
            .to_string();
        let head = r.take(2, "chunk header")?;
        let (dtype, rank) = (head[0], head[1] as usize);
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dims")?);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d as usize))
            .ok_or_else(|| CheckpointError::Malformed(format!("{name}: dims overflow")))?;
        let data = match dtype {
            0 => {
                let raw = r.take(n.checked_mul(4).unwrap_or(usize::MAX), &name)?;
                ChunkData::F32(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
            }
            1 => {
                let raw = r.take(n.checked_mul(8).unwrap_or(usize::MAX), &name)?;
                ChunkData::F64(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
            }
            d => return Err(CheckpointError::Malformed(format!("{name}: unknown dtype {d}"))),
        };
        chunks.push(Chunk { name, dims, data });
    }
    let body = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    Ok(chunks)
}

fn f64_chunk(name: &str, v: Vec<f64>) -> Chunk {
    Chunk {
        name: name.into(),
        dims: vec![v.len() as u32],
        data: ChunkData::F64(v),
    }
}

fn split_u64(v: u64) -> [f64; 2] {
    [(v >> 32) as f64, (v & 0xffff_ffff) as f64]
}

fn join_u64(hi: f64, lo: f64) -> u64 {
    ((hi as u64) << 32) | lo as u64
}

fn spec_to_f64(spec: &NetworkSpec) -> Vec<f64> {
    let mut v = vec![spec.input_shape.len() as f64];
    v.extend(spec.input_shape.iter().map(|&d| d as f64));
    v.push(spec.layers.len() as f64);
    for l in &spec.layers {
        let (k, a) = l.code();
        v.push(k as f64);
        v.push(a as f64);
    }
    v
}

fn spec_from_f64(name: &str, v: &[f64]) -> Result<NetworkSpec, CheckpointError> {
    let bad = || CheckpointError::Malformed(format!("{name}: bad network spec"));
    let get = |i: usize| v.get(i).copied().ok_or_else(bad);
    let rank = get(0)? as usize;
    let input_shape = (0..rank).map(|i| get(1 + i).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let n = get(1 + rank)? as usize;
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let k = get(2 + rank + 2 * i)? as u32;
        let a = get(3 + rank + 2 * i)? as u32;
        layers.push(LayerSpec::from_code(k, a).ok_or_else(bad)?);
    }
    NetworkSpec::new(input_shape, layers).map_err(|e| CheckpointError::Malformed(format!("{name}: {e}")))
}

fn push_set(out: &mut Vec<Chunk>, prefix: &str, set: &ParameterSet<f32>) {
    for p in set.params() {
        out.push(Chunk {
            name: format!("{prefix}.{}", p.name),
            dims: p.shape.iter().map(|&d| d as u32).collect(),
            data: ChunkData::F32(p.data.clone()),
        });
    }
}

impl Checkpoint {
    pub fn to_chunks(&self) -> Vec<Chunk> {
        let m = &self.mel;
        let s = &self.state;
        let a = s.adam.f.config;
        let mut out = vec![
            f64_chunk(
                "meta.mel",
                vec![
                    m.sample_rate as f64,
                    m.n_mels as f64,
                    m.window_ms,
                    m.hop_ms,
                    m.fft_size as f64,
                    m.fmin,
                    m.fmax,
                    m.log_floor,
                ],
            ),
            f64_chunk("meta.stats", vec![self.stats.mean, self.stats.std]),
        ];
        let mut train = Vec::new();
        train.extend(split_u64(s.step));
        train.extend(split_u64(self.seed));
        train.push(s.tau);
        out.push(f64_chunk("meta.train", train));
        let mut adam = vec![a.lr, a.beta1, a.beta2, a.eps];
        for st in [&s.adam.f, &s.adam.g, &s.adam.q] {
            adam.extend(split_u64(st.t));
        }
        out.push(f64_chunk("meta.adam", adam));
        out.push(f64_chunk("spec.f", spec_to_f64(&s.arch.encoder)));
        out.push(f64_chunk("spec.g", spec_to_f64(&s.arch.projector)));
        out.push(f64_chunk("spec.q", spec_to_f64(&s.arch.predictor)));
        for (net, set) in [("f", &s.online.f), ("g", &s.online.g), ("q", &s.online.q)] {
            push_set(&mut out, &format!("online.{net}"), set);
        }
        for (net, set) in [("f", &s.target.f), ("g", &s.target.g)] {
            push_set(&mut out, &format!("target.{net}"), set);
        }
        for (net, st) in [("f", &s.adam.f), ("g", &s.adam.g), ("q", &s.adam.q)] {
            push_set(&mut out, &format!("adam.m.{net}"), &st.m);
            push_set(&mut out, &format!("adam.v.{net}"), &st.v);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_chunks(&self.to_chunks())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        Self::from_chunks(decode_chunks(bytes)?)
    }

    pub fn from_chunks(chunks: Vec<Chunk>) -> Result<Self, CheckpointError> {
        let find = |name: &str| {
            chunks
                .iter()
                .find(|c| c.name == name)
                .ok_or_else(|| CheckpointError::Malformed(format!("missing chunk {name}")))
        };
        let meta = |name: &str, len: usize| -> Result<Vec<f64>, CheckpointError> {
            match &find(name)?.data {
                ChunkData::F64(v) if v.len() == len => Ok(v.clone()),
                _ => Err(CheckpointError::Malformed(format!("{name}: expected {len} f64 values"))),
            }
        };
        let spec = |name: &str| -> Result<NetworkSpec, CheckpointError> {
            match &find(name)?.data {
                ChunkData::F64(v) => spec_from_f64(name, v),
                _ => Err(CheckpointError::Malformed(format!("{name}: expected f64"))),
            }
        };
        let set = |prefix: &str, spec: &NetworkSpec| -> Result<ParameterSet<f32>, CheckpointError> {
            let mut params = Vec::new();
            for (layer, w, b) in spec.param_shapes() {
                for (kind, shape) in [("weight", w), ("bias", b)] {
                    let name = format!("{prefix}.{layer}.{kind}");
                    let c = find(&name)?;
                    let dims: Vec<usize> = c.dims.iter().map(|&d| d as usize).collect();
                    match &c.data {
                        ChunkData::F32(v) if dims == shape => params.push(Param {
                            name: format!("{layer}.{kind}"),
                            shape,
                            data: v.clone(),
                        }),
                        _ => {
                            return Err(CheckpointError::Malformed(format!(
                                "{name}: expected f32 {shape:?}, found {dims:?}"
                            )))
                        }
                    }
                }
            }
            ParameterSet::from_params(params).map_err(|e| CheckpointError::Malformed(e.to_string()))
        };

        let m = meta("meta.mel", 8)?;
        let mel = MelConfig {
            sample_rate: m[0] as u32,
            n_mels: m[1] as usize,
            window_ms: m[2],
            hop_ms: m[3],
            fft_size: m[4] as usize,
            fmin: m[5],
            fmax: m[6],
            log_floor: m[7],
        };
        let st = meta("meta.stats", 2)?;
        let tr = meta("meta.train", 5)?;
        let ad = meta("meta.adam", 10)?;
        let arch = Architecture {
            encoder: spec("spec.f")?,
            projector: spec("spec.g")?,
            predictor: spec("spec.q")?,
        };
        arch.validate()
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let online = Online {
            f: set("online.f", &arch.encoder)?,
            g: set("online.g", &arch.projector)?,
            q: set("online.q", &arch.predictor)?,
        };
        let target = Target {
            f: set("target.f", &arch.encoder)?,
            g: set("target.g", &arch.projector)?,
        };
        let cfg = AdamConfig {
            lr: ad[0],
            beta1: ad[1],
            beta2: ad[2],
            eps: ad[3],
        };
        let adam_for = |net: &str, spec: &NetworkSpec, t: u64| -> Result<AdamState<f32>, CheckpointError> {
            Ok(AdamState {
                config: cfg,
                m: set(&format!("adam.m.{net}"), spec)?,
                v: set(&format!("adam.v.{net}"), spec)?,
                t,
            })
        };
        let adam = OnlineAdam {
            f: adam_for("f", &arch.encoder, join_u64(ad[4], ad[5]))?,
            g: adam_for("g", &arch.projector, join_u64(ad[6], ad[7]))?,
            q: adam_for("q", &arch.predictor, join_u64(ad[8], ad[9]))?,
        };
        Ok(Self {
            mel,
            // stored std is already floored; keep it bit-exact
            stats: NormStats {
                mean: st[0],
                std: st[1],
            },
            seed: join_u64(tr[2], tr[3]),
            state: TrainerState {
                arch,
                online,
                target,
                adam,
                tau: tr[4],
                step: join_u64(tr[0], tr[1]),
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.state.arch
    }

    pub fn encoder(&self) -> (&NetworkSpec, &ParameterSet<f32>) {
        (&self.state.arch.encoder, &self.state.online.f)
    }
}
