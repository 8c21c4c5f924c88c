//! `byola` command-line entry point.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use byola::audio_io::{load_wav, resample, save_wav, Waveform};
use byola::augment::{mix_noise_at_snr, pitch_shift, time_stretch, NoiseCorpus};
use byola::byol::{fit, Checkpoint, FitSetup};
use byola::embedding::{write_embeddings_bin, write_embeddings_txt, Embedder, EmbeddingVector};
use byola::evaluation::{cepstra, mcd, report_line, s2t_same, SpeakerManifest, DEFAULT_CEPSTRA};
use byola::features::{log_mel, MelConfig, MelExtractor, NormStats, Welford};
use byola::synth::{build_corpus, build_noise_dir, default_speakers};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "byola", about = "Self-supervised speaker embeddings from augmented views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic multi-speaker corpus and its manifest
    SynthCorpus(SynthArgs),
    /// Global log-mel mean and std over a file list
    Featstats(FeatstatsArgs),
    /// Train from a run config
    Train(TrainArgs),
    /// Embed one file or every file of a manifest
    Embed(EmbedArgs),
    /// Median same-speaker centroid distance between two manifests
    EvalS2t(EvalS2tArgs),
    /// Mel cepstral distortion between two recordings
    EvalMcd(EvalMcdArgs),
    /// Apply pitch, stretch and noise to one file
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    speakers: usize,
    #[arg(long)]
    utts: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Shortest and longest utterance, seconds
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [1.5, 3.0])]
    duration: Vec<f64>,
    /// Also write this many background-noise clips to <out>/noise
    #[arg(long, default_value_t = 0)]
    noise_clips: usize,
}

#[derive(Debug, Args)]
struct FeatstatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Bin,
    Txt,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    wav: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Txt)]
    format: Format,
}

#[derive(Debug, Args)]
struct EvalS2tArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    probe: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
}

#[derive(Debug, Args)]
struct EvalMcdArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CEPSTRA)]
    coeffs: usize,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    wav: PathBuf,
    /// Semitones
    #[arg(long, allow_negative_numbers = true)]
    pitch: Option<f64>,
    /// Duration factor
    #[arg(long)]
    stretch: Option<f64>,
    #[arg(long, requires = "snr")]
    noise: Option<PathBuf>,
    #[arg(long, requires = "noise", allow_negative_numbers = true)]
    snr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

/// Parses `argv` (without the program name) and runs one subcommand, writing results to `out`.
/// Returns 0 on success, 1 on a usage error, 2 on a data error.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = std::iter::once(OsString::from("byola")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock())
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::SynthCorpus(a) => synth_corpus(a, out),
        Command::Featstats(a) => featstats(a, out),
        Command::Train(a) => train(a, out),
        Command::Embed(a) => embed(a, out),
        Command::EvalS2t(a) => eval_s2t(a, out),
        Command::EvalMcd(a) => eval_mcd(a, out),
        Command::Augment(a) => augment(a, out),
    }
}

/// Reads a file list: one path per line, or `speaker<TAB>path`. Relative paths resolve
/// against the list's directory.
pub fn read_file_list(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let files: Vec<PathBuf> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l.rsplit('\t').next().unwrap_or(l).trim()))
        .collect();
    if files.is_empty() {
        bail!("{} lists no files", path.display());
    }
    Ok(files)
}

fn load_at(path: &Path, rate: u32) -> Result<Waveform> {
    let w = load_wav(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(resample(&w, rate)?)
}

fn synth_corpus(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = build_corpus(&default_speakers(a.speakers, a.seed), a.utts, [a.duration[0], a.duration[1]], &a.out)?;
    writeln!(out, "wrote {} utterances from {} speakers", manifest.len(), manifest.speakers.len())?;
    writeln!(out, "manifest {}", a.out.join("manifest.tsv").display())?;
    if a.noise_clips > 0 {
        let dir = a.out.join("noise");
        let files = build_noise_dir(a.noise_clips, 4.0, &dir, a.seed.wrapping_add(1))?;
        writeln!(out, "wrote {} noise clips to {}", files.len(), dir.display())?;
    }
    Ok(())
}

fn featstats(a: FeatstatsArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = MelConfig::default();
    let ex = MelExtractor::new(cfg)?;
    let mut acc = Welford::new();
    for p in read_file_list(&a.manifest)? {
        let x = ex.extract(&load_at(&p, cfg.sample_rate)?)?;
        acc.extend(x.data().iter().map(|&v| v as f64));
    }
    let stats = acc.finish()?;
    stats.save(&a.out)?;
    writeln!(out, "mean {:.6}", stats.mean)?;
    writeln!(out, "std {:.6}", stats.std)?;
    Ok(())
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    let stats = NormStats::load(&cfg.paths.stats)?;
    let files = read_file_list(&cfg.paths.manifest)?;
    let noise = match &cfg.paths.noise_dir {
        Some(d) if cfg.policy.enable_noise => NoiseCorpus::from_dir(d, cfg.mel.sample_rate)?,
        _ => NoiseCorpus::empty(),
    };
    let setup = FitSetup {
        train: cfg.train.clone(),
        mel: cfg.mel,
        policy: cfg.policy.clone(),
        stats,
    };
    let outcome = fit(&files, &setup, noise, Some(&cfg.paths.checkpoint_dir))?;
    if let Some(last) = outcome.reports.last() {
        writeln!(out, "{}", last.log_line())?;
    }
    for p in &outcome.checkpoint_paths {
        writeln!(out, "checkpoint {}", p.display())?;
    }
    Ok(())
}

fn embedder(ckpt: &Path, stats: &Path) -> Result<Embedder> {
    let ck = Checkpoint::load(ckpt)?;
    let stats = NormStats::load(stats)?;
    Ok(Embedder::new(&ck, stats)?)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn embed(a: EmbedArgs, out: &mut dyn Write) -> Result<()> {
    let emb = embedder(&a.ckpt, &a.stats)?;
    let mut items: Vec<(String, PathBuf)> = Vec::new();
    if let Some(w) = &a.wav {
        items.push((stem(w), w.clone()));
    }
    if let Some(m) = &a.manifest {
        let m = SpeakerManifest::load(m)?;
        for (spk, paths) in &m.speakers {
            items.extend(paths.iter().map(|p| (format!("{spk}/{}", stem(p)), p.clone())));
        }
    }
    let mut embs = Vec::with_capacity(items.len());
    for (id, p) in items {
        let w = load_wav(&p).with_context(|| format!("loading {}", p.display()))?;
        let values = emb.embed(&w).with_context(|| format!("embedding {}", p.display()))?;
        embs.push(EmbeddingVector { id, values });
    }
    let file = fs::File::create(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let mut f = BufWriter::new(file);
    match a.format {
        Format::Bin => write_embeddings_bin(&mut f, &embs)?,
        Format::Txt => write_embeddings_txt(&mut f, &embs)?,
    }
    f.flush()?;
    writeln!(out, "embedded {} utterances ({} dims) to {}", embs.len(), emb.dim(), a.out.display())?;
    Ok(())
}

fn eval_s2t(a: EvalS2tArgs, out: &mut dyn Write) -> Result<()> {
    let emb = embedder(&a.ckpt, &a.stats)?;
    let probe = SpeakerManifest::load(&a.probe)?;
    let reference = SpeakerManifest::load(&a.reference)?;
    let r = s2t_same(&probe, &reference, &emb)?;
    for (spk, d) in &r.per_speaker {
        writeln!(out, "{}", report_line("s2t_same", spk, *d))?;
    }
    writeln!(out, "{}", report_line("s2t_same", "median", r.median))?;
    Ok(())
}

fn eval_mcd(a: EvalMcdArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = MelConfig::default();
    if a.coeffs == 0 || a.coeffs >= cfg.n_mels {
        bail!("--coeffs must lie in 1..{}", cfg.n_mels);
    }
    let ca = cepstra(&log_mel(&load_at(&a.a, cfg.sample_rate)?, &cfg)?, a.coeffs);
    let cb = cepstra(&log_mel(&load_at(&a.b, cfg.sample_rate)?, &cfg)?, a.coeffs);
    writeln!(out, "mcd {:.3}", mcd(&ca, &cb)?)?;
    Ok(())
}

/// Prosodic changes first, then noise.
fn augment(a: AugmentArgs, out: &mut dyn Write) -> Result<()> {
    let mut w = load_wav(&a.wav).with_context(|| format!("loading {}", a.wav.display()))?;
    if let Some(s) = a.pitch {
        if s.abs() > 12.0 {
            bail!("--pitch is limited to +-12 semitones");
        }
        w = pitch_shift(&w, s);
    }
    if let Some(f) = a.stretch {
        if !(0.5..=2.0).contains(&f) {
            bail!("--stretch must lie in [0.5, 2.0]");
        }
        w = time_stretch(&w, f);
    }
    if let (Some(n), Some(snr)) = (&a.noise, a.snr) {
        let noise = load_at(n, w.sample_rate())?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        w = mix_noise_at_snr(&w, &noise, snr, &mut rng)?;
    }
    save_wav(&a.out, &w)?;
    writeln!(out, "wrote {} ({} samples)", a.out.display(), w.len())?;
    Ok(())
}
