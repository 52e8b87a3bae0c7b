//! Dataset generation: sample scenes, render mixtures, write WAVs, labels
//! and the manifest.

use std::path::{Path, PathBuf};

use fnssl_core::dsp::AudioClip;
use fnssl_core::features::ground_truth_labels;
use fnssl_core::features::num_freqs;
use fnssl_core::sim::{
    generate_diffuse_noise, mix_at_snr, render_direct_path, render_moving_source, sample_scene, scene_seed,
    synth_speech_like, NoiseConfig, RenderConfig, RirConfig, SceneSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::labels::LabelFile;
use crate::manifest::{Manifest, ManifestEntry};
use crate::wav::{read_wav, write_wav};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Peak level of the written mixture and direct-path files.
const PEAK: f64 = 0.9;

/// Recordings rendered for one scene.
pub struct Rendered {
    pub mixture: AudioClip,
    /// Clean direct-path signal at the first microphone.
    pub direct: AudioClip,
    pub labels: LabelFile,
}

fn sim_err(id: &str, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("scene {id}: {e}"))
}

fn peak_normalized(clip: &AudioClip) -> AudioClip {
    let peak = clip.channels().iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak == 0.0 {
        return clip.clone();
    }
    let g = PEAK / peak;
    let channels = clip.channels().iter().map(|c| c.iter().map(|v| v * g).collect()).collect();
    AudioClip::new(channels, clip.sample_rate()).expect("scaled clip stays valid")
}

/// Sorted mono WAVs of a source directory.
pub fn list_sources(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no WAV files", dir.display())));
    }
    Ok(files)
}

/// Talker signal of exactly `len` samples: a random excerpt of a source
/// file (looped when too short), or a synthetic speech-like signal.
fn source_signal(cfg: &RunConfig, sources: &[PathBuf], seed: u64, len: usize) -> Result<AudioClip> {
    let fs = cfg.stft.sample_rate;
    if sources.is_empty() {
        let clip = synth_speech_like(cfg.scene.duration, fs, seed).map_err(|e| Error::Data(e.to_string()))?;
        return Ok(clip.truncated(len));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = &sources[rng.gen_range(0..sources.len())];
    let clip = read_wav(path)?;
    if clip.num_channels() != 1 || clip.sample_rate() != fs {
        return Err(Error::corrupt(path, format!("source must be mono at {fs} Hz")));
    }
    let x = clip.channel(0);
    let start = if x.len() > len { rng.gen_range(0..=x.len() - len) } else { 0 };
    let samples: Vec<f64> = (0..len).map(|n| x[(start + n) % x.len()]).collect();
    AudioClip::mono(samples, fs).map_err(|e| Error::corrupt(path, e.to_string()))
}

/// Renders one scene: reverberant mixture with diffuse noise at the scene
/// SNR, the clean direct path, and per-frame labels.
pub fn render_scene(cfg: &RunConfig, scene: &SceneSpec, sources: &[PathBuf], id: &str) -> Result<Rendered> {
    let fs = cfg.stft.sample_rate;
    let len = (cfg.scene.duration * fs).round() as usize;
    let src = source_signal(cfg, sources, scene_seed(scene.seed, 1), len)?;
    let render = RenderConfig {
        rir: RirConfig { sample_rate: fs, ..RirConfig::default() },
        block: cfg.scene.rir_block,
        ..RenderConfig::default()
    };
    let reverberant = render_moving_source(&src, scene, &render).map_err(|e| sim_err(id, e))?;
    let noise_cfg = NoiseConfig { sample_rate: fs, ..NoiseConfig::default() };
    let noise = generate_diffuse_noise(len as f64 / fs, &scene.array, scene.noise_kind, scene_seed(scene.seed, 2), &noise_cfg)
        .map_err(|e| sim_err(id, e))?;
    let mixture = mix_at_snr(&reverberant, &noise.truncated(len), scene.snr_db).map_err(|e| sim_err(id, e))?;
    let direct = render_direct_path(&src, scene, &render).map_err(|e| sim_err(id, e))?;
    let direct = AudioClip::mono(direct.channel(0).to_vec(), fs).map_err(|e| sim_err(id, e))?;

    let stft = cfg.stft_config();
    let times: Vec<f64> = (0..stft.num_frames(len)).map(|t| stft.frame_center_time(t)).collect();
    let frames = ground_truth_labels(&scene.trajectory, &scene.array, &times, &stft).map_err(|e| sim_err(id, e))?;
    Ok(Rendered {
        mixture: peak_normalized(&mixture),
        direct: peak_normalized(&direct),
        labels: LabelFile::from_frames(num_freqs(&stft), &frames),
    })
}

fn write_scene(dir: &Path, entry: &ManifestEntry, r: &Rendered) -> Result<()> {
    // The label file is written last and atomically; its presence marks a
    // finished scene.
    for (rel, clip) in [(&entry.wav_path, &r.mixture), (&entry.direct_path, &r.direct)] {
        let path = dir.join(rel);
        let tmp = dir.join(format!("{rel}.partial"));
        write_wav(&tmp, clip)?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    }
    r.labels.save(&dir.join(&entry.label_path))
}

fn is_complete(dir: &Path, entry: &ManifestEntry) -> bool {
    [&entry.wav_path, &entry.direct_path, &entry.label_path].iter().all(|p| dir.join(p).is_file())
}

/// Generates `count` scenes into `out` and writes `out/manifest.jsonl`.
///
/// Scene `i` depends only on `(seed, i)`. Scenes whose files already exist
/// are skipped, so an interrupted run can be resumed.
pub fn simulate(cfg: &RunConfig, count: usize, seed: u64, out: &Path, prefix: &str) -> Result<Manifest> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ranges = cfg.scene_ranges()?;
    let sources = if cfg.scene.source_dir.is_empty() {
        Vec::new()
    } else {
        list_sources(Path::new(&cfg.scene.source_dir))?
    };
    let entries: Vec<ManifestEntry> = (0..count)
        .into_par_iter()
        .map(|i| {
            let id = format!("{prefix}{i:05}");
            let scene = sample_scene(&ranges, scene_seed(seed, i as u64)).map_err(|e| sim_err(&id, e))?;
            let entry = ManifestEntry::from_scene(&id, &scene);
            if !is_complete(out, &entry) {
                let r = render_scene(cfg, &scene, &sources, &id)?;
                write_scene(out, &entry, &r)?;
            }
            Ok(entry)
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest { dir: out.to_path_buf(), entries };
    manifest.save(&out.join(MANIFEST_NAME))?;
    Ok(manifest)
}
