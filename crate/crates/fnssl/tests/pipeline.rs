use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use fnssl::checkpoint::Checkpoint;
use fnssl::config::{Mode, RunConfig};
use fnssl::evaluate::{evaluate, write_metrics_csv, Predictor};
use fnssl::infer::infer_trajectory;
use fnssl::labels::LabelFile;
use fnssl::manifest::Manifest;
use fnssl::simulate::{simulate, MANIFEST_NAME};
use fnssl::train::{checkpoint_name, train, LOSS_LOG};
use fnssl::wav::{read_wav, write_wav};
use fnssl::Error;
use fnssl_core::dsp::AudioClip;

const SCENES: usize = 8;

fn base_config() -> RunConfig {
    RunConfig::load(
        None,
        &[
            "seed=11".into(),
            "network.blocks=1".into(),
            "network.hidden=8".into(),
            "train.epochs=2".into(),
            "train.batch_size=3".into(),
            "train.crop_frames=24".into(),
        ],
    )
    .unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
}

/// Eight simulated scenes shared by the tests of this file.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        simulate(&base_config(), SCENES, 11, &data, "s").unwrap();
        Fixture { _dir: dir, data }
    })
}

fn manifest() -> Manifest {
    Manifest::load(&fixture().data.join(MANIFEST_NAME)).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "config.toml")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_every_scene_with_fixed_duration() {
    let m = manifest();
    assert_eq!(m.entries.len(), SCENES);
    let text = std::fs::read_to_string(fixture().data.join(MANIFEST_NAME)).unwrap();
    assert_eq!(text.lines().count(), SCENES);
    for e in &m.entries {
        let clip = read_wav(&m.resolve(&e.wav_path)).unwrap();
        assert_eq!(clip.num_channels(), 2);
        assert_eq!(clip.len(), 76_640);
        assert!((clip.duration() - 4.79).abs() < 1e-9);
        let labels = LabelFile::load(&m.resolve(&e.label_path)).unwrap();
        assert_eq!((labels.num_frames(), labels.num_freqs), (298, 256));
        assert_eq!(read_wav(&m.resolve(&e.direct_path)).unwrap().num_channels(), 1);
    }
}

#[test]
fn simulate_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = base_config();
    simulate(&cfg, 3, 4, &a, "s").unwrap();
    simulate(&cfg, 3, 4, &b, "s").unwrap();
    let first = files(&a);
    assert_eq!(first.len(), 3 * 3 + 1);
    assert_eq!(first, files(&b));
    // Remove one scene and let a rerun fill the gap.
    std::fs::remove_file(a.join("s00001.wav")).unwrap();
    std::fs::remove_file(a.join("s00001.dpip")).unwrap();
    simulate(&cfg, 3, 4, &a, "s").unwrap();
    assert_eq!(first, files(&a));
}

#[test]
fn ground_truth_predictions_score_perfectly() {
    let cfg = base_config();
    let report = evaluate(&cfg, &manifest(), &Predictor::Labels).unwrap();
    assert!(report.all.frames > 0);
    assert!(report.all.mae_deg <= 2.5, "{}", report.all.mae_deg);
    assert_eq!(report.all.acc5, 100.0);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    write_metrics_csv(&csv, &report).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "recording_id,frames,mae_deg,acc5,acc10,acc15");
    assert_eq!(lines.len(), SCENES + 2);
    assert!(lines[SCENES + 1].starts_with("ALL,"));
}

#[test]
fn accuracies_are_monotone_in_tolerance() {
    let cfg = base_config();
    for p in [Predictor::Fixed(90.0), Predictor::Baseline, Predictor::Fixed(3.0)] {
        let a = evaluate(&cfg, &manifest(), &p).unwrap().all;
        assert!(a.acc5 <= a.acc10 && a.acc10 <= a.acc15, "{a:?}");
    }
}

#[test]
fn empty_manifest_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let m = Manifest::load(&path).unwrap();
    let err = evaluate(&base_config(), &m, &Predictor::Labels).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(train(&base_config(), &m, dir.path(), None).is_err());
}

#[test]
fn training_logs_every_batch_and_resumes_exactly() {
    let cfg = base_config();
    let m = manifest();
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let summary = train(&cfg, &m, &full, None).unwrap();
    let batches = SCENES.div_ceil(cfg.train.batch_size);
    assert_eq!(summary.rows.len(), 2 * batches);
    let log = std::fs::read_to_string(full.join(LOSS_LOG)).unwrap();
    assert_eq!(log.lines().count(), 1 + 2 * batches);
    assert!(full.join(checkpoint_name(1)).is_file() && full.join(checkpoint_name(2)).is_file());

    // Stop after one epoch, then resume from its checkpoint.
    let part = dir.path().join("part");
    let one = RunConfig { train: fnssl::config::TrainSection { epochs: 1, ..cfg.train.clone() }, ..cfg.clone() };
    train(&one, &m, &part, None).unwrap();
    let resumed = train(&cfg, &m, &part, Some(&part.join(checkpoint_name(1)))).unwrap();
    assert_eq!(resumed.epoch_losses, vec![summary.epoch_losses[1]]);
    assert_eq!(std::fs::read(full.join(LOSS_LOG)).unwrap(), std::fs::read(part.join(LOSS_LOG)).unwrap());
    assert_eq!(
        std::fs::read(full.join(checkpoint_name(2))).unwrap(),
        std::fs::read(part.join(checkpoint_name(2))).unwrap()
    );
}

fn trained(dir: &Path, mode: &str) -> Checkpoint {
    let mut cfg = base_config();
    cfg.train.epochs = 1;
    cfg.network.mode = if mode == "online" { Mode::Online } else { Mode::Offline };
    train(&cfg, &manifest(), dir, None).unwrap();
    Checkpoint::load(&dir.join(checkpoint_name(1))).unwrap()
}

#[test]
fn inference_emits_one_row_per_pooled_frame_and_is_causal_online() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(&dir.path().join("t"), "online");
    let m = manifest();
    let wav = m.resolve(&m.entries[0].wav_path);
    let cfg = base_config();
    let stft = cfg.stft_config();
    let run = |path: &Path, mode| infer_trajectory(&ck, path, mode, &stft, 5.0, 0.08).unwrap();
    let full = run(&wav, Mode::Online);
    assert_eq!(full.len(), 24);
    assert_eq!(run(&wav, Mode::Offline).len(), 24);
    assert!(full.windows(2).all(|w| w[1].time_s > w[0].time_s));

    // Truncate after frame (p + 1) * 12 for a few p; the prefix must not move.
    let clip = read_wav(&wav).unwrap();
    for p in [0usize, 5, 13] {
        let frames = (p + 1) * 12 + 3;
        let len = (frames - 1) * stft.hop + stft.fft_size;
        let cut = dir.path().join(format!("cut{p}.wav"));
        write_wav(&cut, &clip.truncated(len)).unwrap();
        let part = run(&cut, Mode::Online);
        assert_eq!(part.len(), p + 1);
        assert_eq!(&full[..=p], &part[..]);
    }
}

#[test]
fn inference_validates_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let offline = trained(&dir.path().join("t"), "offline");
    let m = manifest();
    let stft = base_config().stft_config();
    let wav = m.resolve(&m.entries[0].wav_path);
    assert!(infer_trajectory(&offline, &wav, Mode::Online, &stft, 5.0, 0.08).is_err());
    assert_eq!(infer_trajectory(&offline, &wav, Mode::Offline, &stft, 5.0, 0.08).unwrap().len(), 24);
    let mono = dir.path().join("mono.wav");
    write_wav(&mono, &AudioClip::mono(vec![0.1; 20_000], 16000.0).unwrap()).unwrap();
    let err = infer_trajectory(&offline, &mono, Mode::Offline, &stft, 5.0, 0.08).unwrap_err();
    assert!(err.to_string().contains("channels"));
    let slow = dir.path().join("slow.wav");
    write_wav(&slow, &AudioClip::new(vec![vec![0.1; 20_000]; 2], 8000.0).unwrap()).unwrap();
    assert!(infer_trajectory(&offline, &slow, Mode::Offline, &stft, 5.0, 0.08).is_err());
}

fn fnssl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fnssl")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(fnssl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fnssl(&["simulate"]).status.code(), Some(1));
    assert_eq!(fnssl(&["simulate", "--count", "1", "--out", out, "bogus.key=1"]).status.code(), Some(1));
    assert_eq!(fnssl(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("missing.jsonl");
    let r = fnssl(&["eval", "--predictor", "labels", "--manifest", missing.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let corrupt = dir.path().join("bad.fnss");
    std::fs::write(&corrupt, b"FNSS\x01").unwrap();
    let manifest = fixture().data.join(MANIFEST_NAME);
    let r = fnssl(&["eval", "--checkpoint", corrupt.to_str().unwrap(), "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("corrupt checkpoint"));
}

#[test]
fn cli_eval_writes_metrics_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture().data.join(MANIFEST_NAME);
    let r = fnssl(&[
        "eval",
        "--predictor",
        "labels",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--grid",
        "5",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("acc5 100.00"));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.lines().last().unwrap().starts_with("ALL,"));
    let echoed = RunConfig::load(Some(&dir.path().join("config.toml")), &[]).unwrap();
    assert_eq!(echoed.eval.grid_resolution, 5.0);
}
