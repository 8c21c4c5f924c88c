use std::fs;
use std::path::Path;

use byola_cli::{run_with, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use tempfile::TempDir;

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run_with(args.iter().copied(), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &Path, noise: usize) {
    let (code, out) = run(&[
        "synth-corpus",
        "--speakers",
        "2",
        "--utts",
        "3",
        "--out",
        s(dir),
        "--seed",
        "5",
        "--noise-clips",
        &noise.to_string(),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
}

const TINY: &str = "\
paths.manifest = corpus/manifest.tsv
paths.stats = stats.nst
paths.noise_dir = corpus/noise
paths.checkpoint_dir = run
seed = 11
train.steps = 3
train.batch_size = 4
train.checkpoint_every = 2
train.encoder_channels = 2
train.embedding_dim = 8
train.projector_hidden = 8
train.projection_dim = 4
train.predictor_hidden = 8
augment.mixup_bank_size = 8
";

/// Corpus, statistics and a trained checkpoint in a fresh directory.
fn trained(extra: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    corpus(&dir.path().join("corpus"), 2);
    let (code, out) = run(&[
        "featstats",
        "--manifest",
        s(&dir.path().join("corpus/manifest.tsv")),
        "--out",
        s(&dir.path().join("stats.nst")),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("{TINY}{extra}")).unwrap();
    let (code, out) = run(&["train", "--config", s(&cfg)]);
    assert_eq!(code, EXIT_OK, "{out}");
    dir
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).0, EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(run(&["eval-mcd", "--a", "x.wav"]).0, EXIT_USAGE);
    assert_eq!(run(&["eval-mcd", "--a", "x", "--b", "y", "--bogus"]).0, EXIT_USAGE);
    assert_eq!(run(&["augment", "--wav", "a", "--out", "b", "--seed", "1", "--noise", "n"]).0, EXIT_USAGE);
    assert_eq!(run(&["embed", "--ckpt", "c", "--stats", "s", "--out", "o"]).0, EXIT_USAGE);
    let both = ["embed", "--ckpt", "c", "--stats", "s", "--out", "o", "--wav", "w", "--manifest", "m"];
    assert_eq!(run(&both).0, EXIT_USAGE);
    assert_eq!(run(&both[..9]).0, EXIT_DATA);
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.wav");
    assert_eq!(run(&["eval-mcd", "--a", s(&missing), "--b", s(&missing)]).0, EXIT_DATA);
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "seed = 1\n").unwrap();
    assert_eq!(run(&["train", "--config", s(&bad)]).0, EXIT_DATA);
}

#[test]
fn identical_files_have_zero_mcd() {
    let dir = TempDir::new().unwrap();
    corpus(dir.path(), 0);
    let wav = dir.path().join("spk00/utt000.wav");
    let (code, out) = run(&["eval-mcd", "--a", s(&wav), "--b", s(&wav)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "mcd 0.000\n");
    let other = dir.path().join("spk01/utt000.wav");
    let (_, out) = run(&["eval-mcd", "--a", s(&wav), "--b", s(&other), "--coeffs", "20"]);
    let v: f64 = out.trim().strip_prefix("mcd ").unwrap().parse().unwrap();
    assert!(v > 0.0);
    assert_eq!(run(&["eval-mcd", "--a", s(&wav), "--b", s(&wav), "--coeffs", "64"]).0, EXIT_DATA);
}

#[test]
fn featstats_writes_stats_file() {
    let dir = TempDir::new().unwrap();
    corpus(dir.path(), 0);
    let out_path = dir.path().join("stats.nst");
    let (code, out) = run(&["featstats", "--manifest", s(&dir.path().join("manifest.tsv")), "--out", s(&out_path)]);
    assert_eq!(code, EXIT_OK);
    let bytes = fs::read(&out_path).unwrap();
    assert_eq!(&bytes[..4], b"NST1");
    let stats = byola::features::NormStats::load(&out_path).unwrap();
    assert_eq!(out, format!("mean {:.6}\nstd {:.6}\n", stats.mean, stats.std));
    assert!(stats.std > 0.0);
}

#[test]
fn augment_is_reproducible_per_seed() {
    let dir = TempDir::new().unwrap();
    corpus(dir.path(), 1);
    let wav = dir.path().join("spk00/utt001.wav");
    let noise = fs::read_dir(dir.path().join("noise")).unwrap().next().unwrap().unwrap().path();
    let go = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let (code, msg) = run(&[
            "augment", "--wav", s(&wav), "--pitch", "1", "--stretch", "1.05", "--noise", s(&noise), "--snr", "5",
            "--out", s(&out), "--seed", seed,
        ]);
        assert_eq!(code, EXIT_OK, "{msg}");
        fs::read(out).unwrap()
    };
    let a = go("a.wav", "7");
    assert_eq!(a, go("b.wav", "7"));
    assert_ne!(a, go("c.wav", "8"));
    let src = byola::audio_io::load_wav(&wav).unwrap();
    let got = byola::audio_io::decode_wav(&a).unwrap();
    let ratio = got.len() as f64 / src.len() as f64;
    assert!((ratio - 1.05).abs() < 0.01, "{ratio}");

    let (code, _) = run(&["augment", "--wav", s(&wav), "--pitch", "-1", "--out", s(&dir.path().join("d.wav")), "--seed", "1"]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn training_is_reproducible_and_feeds_embed_and_eval() {
    let a = trained("");
    let b = trained("");
    let final_a = fs::read(a.path().join("run/final.bylc")).unwrap();
    assert_eq!(final_a, fs::read(b.path().join("run/final.bylc")).unwrap());
    assert!(a.path().join("run/step_000002.bylc").exists());
    assert_eq!(fs::read_to_string(a.path().join("run/train_log.tsv")).unwrap().lines().count(), 3);

    let c = trained("seed = 12\n");
    assert_ne!(final_a, fs::read(c.path().join("run/final.bylc")).unwrap());

    let dir = a.path();
    let ckpt = dir.join("run/final.bylc");
    let stats = dir.join("stats.nst");
    let manifest = dir.join("corpus/manifest.tsv");

    let txt = dir.join("e.txt");
    let (code, out) = run(&[
        "embed", "--ckpt", s(&ckpt), "--stats", s(&stats), "--manifest", s(&manifest), "--out", s(&txt), "--format", "txt",
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let embs = byola::embedding::read_embeddings_txt(&fs::read(&txt).unwrap()[..]).unwrap();
    assert_eq!(embs.len(), 6);
    assert_eq!(embs[0].id, "spk00/utt000");
    assert!(embs.iter().all(|e| e.values.len() == 8));

    let bin = dir.join("e.bin");
    let wav = dir.join("corpus/spk00/utt000.wav");
    let (code, _) = run(&[
        "embed", "--ckpt", s(&ckpt), "--stats", s(&stats), "--wav", s(&wav), "--out", s(&bin), "--format", "bin",
    ]);
    assert_eq!(code, EXIT_OK);
    let v = byola::embedding::read_embeddings_bin(&fs::read(&bin).unwrap(), 8).unwrap();
    assert_eq!(v, vec![embs[0].values.clone()]);

    let eval = || run(&["eval-s2t", "--ckpt", s(&ckpt), "--stats", s(&stats), "--probe", s(&manifest), "--ref", s(&manifest)]);
    let (code, out) = eval();
    assert_eq!(code, EXIT_OK, "{out}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("s2t_same\tmedian\t"));
    let median: f64 = lines[2].rsplit('\t').next().unwrap().parse().unwrap();
    assert!(median.abs() < 1e-6);
    assert_eq!(eval().1, out);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = trained("");
    let cfg = dir.path().join("run.cfg");
    let first = fs::read(dir.path().join("run/final.bylc")).unwrap();
    let (code, _) = run(&["train", "--config", s(&cfg), "--seed", "99"]);
    assert_eq!(code, EXIT_OK);
    let ck = byola::byol::Checkpoint::load(dir.path().join("run/final.bylc")).unwrap();
    assert_eq!(ck.seed, 99);
    assert_ne!(first, fs::read(dir.path().join("run/final.bylc")).unwrap());
}
