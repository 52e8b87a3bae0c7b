//! Scene manifest: one JSON object per line. Paths are relative to the
//! manifest's directory.

use std::path::{Path, PathBuf};

use fnssl_core::geometry::Vec3;
use fnssl_core::sim::SceneSpec;
use serde::{Deserialize, Serialize};

use crate::binio::write_atomic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub room: [f64; 3],
    pub rt60: f64,
    pub snr_db: f64,
    pub noise_kind: String,
    /// Microphone positions in meters.
    pub array: Vec<[f64; 3]>,
    /// `[time_s, x, y, z]` per waypoint.
    pub waypoints: Vec<[f64; 4]>,
    pub seed: u64,
    pub wav_path: String,
    pub label_path: String,
    /// Clean direct-path signal at the reference microphone, used for VAD.
    pub direct_path: String,
}

impl ManifestEntry {
    pub fn from_scene(id: &str, scene: &SceneSpec) -> Self {
        Self {
            id: id.to_string(),
            room: scene.room.dims,
            rt60: scene.room.rt60,
            snr_db: scene.snr_db,
            noise_kind: scene.noise_kind.as_str().to_string(),
            array: scene.array.mics.iter().map(|m| m.0).collect(),
            waypoints: scene.trajectory.waypoints.iter().map(|(t, p)| [*t, p.x(), p.y(), p.z()]).collect(),
            seed: scene.seed,
            wav_path: format!("{id}.wav"),
            label_path: format!("{id}.dpip"),
            direct_path: format!("{id}_direct.wav"),
        }
    }

    pub fn array_center(&self) -> Vec3 {
        let n = self.array.len() as f64;
        Vec3(std::array::from_fn(|a| self.array.iter().map(|m| m[a]).sum::<f64>() / n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(line)
                .map_err(|err| Error::corrupt(path, format!("line {}: {err}", i + 1)))?;
            entries.push(e);
        }
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { dir, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&serde_json::to_string(e).expect("entry serializes"));
            text.push('\n');
        }
        write_atomic(path, text.as_bytes())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Fails on an empty manifest, which no command can use.
    pub fn require_nonempty(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Data("manifest has no entries".into()));
        }
        Ok(())
    }
}
