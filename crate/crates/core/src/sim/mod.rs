//! Two-microphone recordings of a (possibly moving) talker in a shoebox room.
//!
//! The room impulse responses come from an Allen-Berkley image-source model
//! with uniform wall absorption derived from the requested RT60 via Sabine's
//! formula. Background noise is a spherically diffuse field assembled from
//! many independent plane waves.

mod noise;
mod render;
mod rir;
mod scene;
mod source;

pub use noise::{generate_diffuse_noise, mix_at_snr, snr_gain, NoiseConfig, NoiseKind};
pub use render::{render_direct_path, render_moving_source, RenderConfig};
pub use rir::{simulate_rir, Rir, RirConfig};
pub use scene::{point_at_azimuth, sample_scene, scene_seed, SceneRanges};
pub use source::synth_speech_like;

use alloc::vec::Vec;
use thiserror::Error;

use crate::dsp::DspError;
use crate::geometry::Vec3;
use crate::SPEED_OF_SOUND;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid room: {0}")]
    InvalidRoom(&'static str),
    #[error("rt60 {rt60} s is unreachable for this room (Sabine absorption {alpha:.3})")]
    AbsorptionOutOfRange { rt60: f64, alpha: f64 },
    #[error("source position {0:?} is outside the room")]
    SourceOutsideRoom(Vec3),
    #[error("invalid array geometry: {0}")]
    InvalidArray(&'static str),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(&'static str),
    #[error("trajectory covers up to {covered} s but {needed} s are required")]
    TrajectoryTooShort { covered: f64, needed: f64 },
    #[error("signal shapes or sample rates do not match")]
    ShapeMismatch,
    #[error("signal has zero power")]
    ZeroPower,
    #[error("invalid duration {0}")]
    InvalidDuration(f64),
    #[error("no feasible scene after {0} attempts")]
    Infeasible(usize),
    #[error("invalid scene ranges: {0}")]
    InvalidRanges(&'static str),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Shoebox room with a target reverberation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomSpec {
    pub dims: [f64; 3],
    pub rt60: f64,
}

impl RoomSpec {
    pub fn new(dims: [f64; 3], rt60: f64) -> Result<Self, SimError> {
        let room = Self { dims, rt60 };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(SimError::InvalidRoom("dimensions must be positive"));
        }
        if !(self.rt60.is_finite() && self.rt60 >= 0.0) {
            return Err(SimError::InvalidRoom("rt60 must be non-negative"));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform wall absorption `0.161 V / (S rt60)` clipped to [0.01, 0.99].
    ///
    /// Returns 1 for an anechoic room (rt60 = 0).
    pub fn absorption(&self) -> Result<f64, SimError> {
        self.validate()?;
        if self.rt60 == 0.0 {
            return Ok(1.0);
        }
        let alpha = 0.161 * self.volume() / (self.surface() * self.rt60);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SimError::AbsorptionOutOfRange { rt60: self.rt60, alpha });
        }
        Ok(alpha.clamp(0.01, 0.99))
    }

    /// Pressure reflection coefficient `sqrt(1 - alpha)`.
    pub fn reflection(&self) -> Result<f64, SimError> {
        Ok(crate::math::sqrt(1.0 - self.absorption()?))
    }

    /// Reflection order needed for the image set to reach `c * rt60`.
    pub fn default_max_order(&self) -> usize {
        let min_dim = self.dims.iter().cloned().fold(f64::INFINITY, f64::min);
        crate::math::ceil(SPEED_OF_SOUND * self.rt60 / min_dim) as usize * 3 + 1
    }

    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        p.0.iter().zip(&self.dims).all(|(v, d)| *v >= margin && *v <= d - margin)
    }
}

/// Microphone positions in room coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub mics: Vec<Vec3>,
}

impl ArrayGeometry {
    pub fn new(mics: Vec<Vec3>) -> Result<Self, SimError> {
        if mics.is_empty() {
            return Err(SimError::InvalidArray("no microphones"));
        }
        for i in 0..mics.len() {
            if !mics[i].is_finite() {
                return Err(SimError::InvalidArray("non-finite position"));
            }
            for j in i + 1..mics.len() {
                if mics[i].distance(&mics[j]) <= 0.0 {
                    return Err(SimError::InvalidArray("coincident microphones"));
                }
            }
        }
        Ok(Self { mics })
    }

    /// Two microphones `spacing` apart, centered at `center`, axis rotated
    /// by `orientation` radians in the horizontal plane.
    pub fn pair(center: Vec3, spacing: f64, orientation: f64) -> Result<Self, SimError> {
        let half = Vec3::new(
            crate::math::cos(orientation),
            crate::math::sin(orientation),
            0.0,
        ) * (spacing / 2.0);
        Self::new(alloc::vec![center + half, center - half])
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn center(&self) -> Vec3 {
        let sum = self.mics.iter().fold(Vec3::default(), |a, m| a + *m);
        sum * (1.0 / self.mics.len() as f64)
    }

    /// Distance between the first two microphones.
    pub fn spacing(&self) -> f64 {
        self.mics[0].distance(&self.mics[1])
    }

    /// Unit vector pointing from microphone 2 to microphone 1; azimuth 0
    /// lies along it.
    pub fn axis(&self) -> Vec3 {
        let d = self.mics[0] - self.mics[1];
        d * (1.0 / d.norm())
    }

    pub fn inside(&self, room: &RoomSpec) -> bool {
        self.mics.iter().all(|m| room.contains(m, 1e-9))
    }
}

/// Time-stamped source positions, linearly interpolated. A single waypoint
/// describes a static source valid at every time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<(f64, Vec3)>,
    pub fixed_height: bool,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(f64, Vec3)>, fixed_height: bool) -> Result<Self, SimError> {
        if waypoints.is_empty() {
            return Err(SimError::InvalidTrajectory("no waypoints"));
        }
        if waypoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(SimError::InvalidTrajectory("timestamps must increase strictly"));
        }
        if waypoints.iter().any(|(t, p)| !t.is_finite() || !p.is_finite()) {
            return Err(SimError::InvalidTrajectory("non-finite waypoint"));
        }
        if fixed_height && waypoints.iter().any(|(_, p)| (p.z() - waypoints[0].1.z()).abs() > 1e-9) {
            return Err(SimError::InvalidTrajectory("height varies on a fixed-height trajectory"));
        }
        Ok(Self { waypoints, fixed_height })
    }

    pub fn fixed(position: Vec3) -> Self {
        Self { waypoints: alloc::vec![(0.0, position)], fixed_height: true }
    }

    pub fn is_static(&self) -> bool {
        self.waypoints.iter().all(|(_, p)| *p == self.waypoints[0].1)
    }

    /// Latest time covered, infinite for a single waypoint.
    pub fn end_time(&self) -> f64 {
        if self.waypoints.len() == 1 {
            f64::INFINITY
        } else {
            self.waypoints[self.waypoints.len() - 1].0
        }
    }

    pub fn position_at(&self, t: f64) -> Result<Vec3, SimError> {
        let w = &self.waypoints;
        if w.len() == 1 {
            return Ok(w[0].1);
        }
        const SLACK: f64 = 1e-6;
        if t < w[0].0 - SLACK || t > w[w.len() - 1].0 + SLACK {
            return Err(SimError::TrajectoryTooShort { covered: w[w.len() - 1].0, needed: t });
        }
        let idx = w.partition_point(|(ti, _)| *ti <= t);
        if idx == 0 {
            return Ok(w[0].1);
        }
        if idx >= w.len() {
            return Ok(w[w.len() - 1].1);
        }
        let (t0, p0) = w[idx - 1];
        let (t1, p1) = w[idx];
        Ok(p0.lerp(&p1, (t - t0) / (t1 - t0)))
    }

    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| w[0].1.distance(&w[1].1) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }
}

/// Everything needed to render one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub array: ArrayGeometry,
    pub trajectory: Trajectory,
    pub snr_db: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self, wall_margin: f64, max_speed: f64) -> Result<(), SimError> {
        self.room.validate()?;
        if !self.array.inside(&self.room) {
            return Err(SimError::InvalidArray("microphone outside the room"));
        }
        for (_, p) in &self.trajectory.waypoints {
            if !self.room.contains(p, wall_margin) {
                return Err(SimError::SourceOutsideRoom(*p));
            }
        }
        if self.trajectory.max_speed() > max_speed + 1e-9 {
            return Err(SimError::InvalidTrajectory("source moves too fast"));
        }
        if !self.snr_db.is_finite() {
            return Err(SimError::InvalidRanges("snr must be finite"));
        }
        Ok(())
    }
}

/// Time difference of arrival `(|s - m2| - |s - m1|) / c` in seconds.
pub fn tdoa(source: &Vec3, array: &ArrayGeometry) -> f64 {
    (source.distance(&array.mics[1]) - source.distance(&array.mics[0])) / SPEED_OF_SOUND
}
