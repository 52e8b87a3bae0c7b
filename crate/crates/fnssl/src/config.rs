//! Run configuration: one TOML file, `section.key=value` overrides, and the
//! conversions into the core configuration types.

use std::path::Path;

use fnssl_core::dsp::{StftConfig, WindowKind};
use fnssl_core::nn::{Head, NetworkConfig};
use fnssl_core::sim::{NoiseKind, SceneRanges};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Precision;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub stft: StftSection,
    pub scene: SceneSection,
    pub data: DataSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftSection {
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub rt60: [f64; 2],
    pub snr_db: [f64; 2],
    pub mic_spacing: f64,
    pub duration: f64,
    pub moving: bool,
    pub max_speed: f64,
    pub max_lateral: f64,
    pub max_periods: f64,
    pub wall_margin: f64,
    pub array_margin: f64,
    pub min_source_distance: f64,
    pub height: [f64; 2],
    pub noise_kinds: Vec<String>,
    pub waypoints: usize,
    /// Samples between RIR updates for moving sources.
    pub rir_block: usize,
    /// Directory of mono 16 kHz WAVs used as talkers; synthetic speech-like
    /// signals when empty.
    pub source_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub test_scenes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Online,
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Dpipd,
    Class,
    Regress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub blocks: usize,
    pub hidden: usize,
    pub num_freqs: usize,
    pub mode: Mode,
    pub target: Target,
    pub num_classes: usize,
    pub pool: usize,
    /// Online normalization window `L` in frames.
    pub norm_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: u32,
    pub batch_size: usize,
    /// `f64` is the bit-reproducible reference mode, `f32` the fast mode.
    pub precision: Precision,
    /// Random training excerpt length in STFT frames (a multiple of the pool
    /// stride); 0 trains on whole clips.
    pub crop_frames: usize,
    pub clip_norm: f64,
    /// Worker threads for per-item gradients; 0 lets rayon decide. The
    /// reduction order is fixed either way.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub grid_resolution: f64,
    pub vad_threshold_db: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            stft: StftSection::default(),
            scene: SceneSection::default(),
            data: DataSection::default(),
            network: NetworkSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for StftSection {
    fn default() -> Self {
        let s = StftConfig::default();
        Self { fft_size: s.fft_size, hop: s.hop, sample_rate: s.sample_rate }
    }
}

impl Default for SceneSection {
    fn default() -> Self {
        let r = SceneRanges::default();
        Self {
            room_min: r.room_min,
            room_max: r.room_max,
            rt60: r.rt60,
            snr_db: r.snr_db,
            mic_spacing: r.mic_spacing,
            duration: r.duration,
            moving: r.moving,
            max_speed: r.max_speed,
            max_lateral: r.max_lateral,
            max_periods: r.max_periods,
            wall_margin: r.wall_margin,
            array_margin: r.array_margin,
            min_source_distance: r.min_source_distance,
            height: r.height,
            noise_kinds: r.noise_kinds.iter().map(|k| k.as_str().to_string()).collect(),
            waypoints: r.waypoints,
            rir_block: 256,
            source_dir: String::new(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self { train_scenes: 2000, val_scenes: 100, test_scenes: 200 }
    }
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            blocks: 2,
            hidden: 128,
            num_freqs: 256,
            mode: Mode::Online,
            target: Target::Dpipd,
            num_classes: 180,
            pool: 12,
            norm_window: 125.0,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 16, precision: Precision::F64, crop_frames: 0, clip_norm: 5.0, threads: 0 }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { grid_resolution: 5.0, vad_threshold_db: 40.0 }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parses the right-hand side of an override: a TOML value when it parses
/// as one, otherwise a bare string.
fn override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Loads `path` (defaults when `None`), applies `key=value` overrides
    /// with dotted keys such as `train.epochs=3`, and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| config_err(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| config_err(format!("override `{o}` is not key=value")))?;
            let parts: Vec<&str> = key.trim().split('.').collect();
            let mut node = &mut table;
            for part in &parts[..parts.len() - 1] {
                let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
                node = entry.as_table_mut().ok_or_else(|| config_err(format!("`{part}` is not a section")))?;
            }
            node.insert(parts[parts.len() - 1].to_string(), override_value(raw.trim()));
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.stft_config().validate().map_err(config_err)?;
        self.scene_ranges()?.validate().map_err(config_err)?;
        self.network_config().validate().map_err(config_err)?;
        if self.network.num_freqs + 1 > self.stft.fft_size / 2 + 1 {
            return Err(config_err("network.num_freqs exceeds the STFT bins"));
        }
        if !(self.network.norm_window >= 1.0) {
            return Err(config_err("network.norm_window must be at least 1"));
        }
        if self.train.batch_size == 0 {
            return Err(config_err("train.batch_size must be positive"));
        }
        if !self.train.crop_frames.is_multiple_of(self.network.pool) {
            return Err(config_err("train.crop_frames must be a multiple of network.pool"));
        }
        if !(self.train.clip_norm > 0.0) {
            return Err(config_err("train.clip_norm must be positive"));
        }
        if !(self.eval.grid_resolution > 0.0) || !(self.eval.vad_threshold_db > 0.0) {
            return Err(config_err("eval settings must be positive"));
        }
        if self.scene.rir_block == 0 {
            return Err(config_err("scene.rir_block must be positive"));
        }
        Ok(())
    }

    pub fn stft_config(&self) -> StftConfig {
        StftConfig {
            fft_size: self.stft.fft_size,
            hop: self.stft.hop,
            window: WindowKind::Hann,
            sample_rate: self.stft.sample_rate,
        }
    }

    pub fn scene_ranges(&self) -> Result<SceneRanges> {
        let s = &self.scene;
        let noise_kinds = s
            .noise_kinds
            .iter()
            .map(|k| k.parse::<NoiseKind>().map_err(|_| config_err(format!("unknown noise kind `{k}`"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(SceneRanges {
            room_min: s.room_min,
            room_max: s.room_max,
            rt60: s.rt60,
            snr_db: s.snr_db,
            mic_spacing: s.mic_spacing,
            duration: s.duration,
            moving: s.moving,
            max_speed: s.max_speed,
            max_lateral: s.max_lateral,
            max_periods: s.max_periods,
            wall_margin: s.wall_margin,
            array_margin: s.array_margin,
            min_source_distance: s.min_source_distance,
            height: s.height,
            noise_kinds,
            waypoints: s.waypoints,
        })
    }

    pub fn network_config(&self) -> NetworkConfig {
        let n = &self.network;
        NetworkConfig {
            num_mics: 2,
            num_blocks: n.blocks,
            hidden: n.hidden,
            num_freqs: n.num_freqs,
            causal: n.mode == Mode::Online,
            head: match n.target {
                Target::Dpipd => Head::DpIpd,
                Target::Class => Head::Classification { num_classes: n.num_classes },
                Target::Regress => Head::Regression,
            },
            pool_kernel: n.pool,
            pool_stride: n.pool,
        }
    }
}
