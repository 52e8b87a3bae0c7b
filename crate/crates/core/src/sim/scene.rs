use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ArrayGeometry, NoiseKind, RoomSpec, SceneSpec, SimError, Trajectory};
use crate::geometry::Vec3;
use crate::math::{cos, sin, sqrt, PI};

/// Sampling ranges for [`sample_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRanges {
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub rt60: [f64; 2],
    pub snr_db: [f64; 2],
    pub mic_spacing: f64,
    /// Trajectory duration in seconds.
    pub duration: f64,
    /// Static source (single waypoint) when false.
    pub moving: bool,
    pub max_speed: f64,
    /// Peak sinusoidal deviation perpendicular to the straight path.
    pub max_lateral: f64,
    pub max_periods: f64,
    pub wall_margin: f64,
    /// Minimum clearance of the array center from the walls.
    pub array_margin: f64,
    pub min_source_distance: f64,
    pub height: [f64; 2],
    pub noise_kinds: Vec<NoiseKind>,
    pub waypoints: usize,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            room_min: [6.0, 6.0, 2.5],
            room_max: [10.0, 8.0, 6.0],
            rt60: [0.2, 1.3],
            snr_db: [-5.0, 15.0],
            mic_spacing: 0.08,
            duration: 4.79,
            moving: true,
            max_speed: 1.0,
            max_lateral: 0.5,
            max_periods: 2.0,
            wall_margin: 0.1,
            array_margin: 0.5,
            min_source_distance: 0.5,
            height: [1.0, 2.0],
            noise_kinds: NoiseKind::ALL.to_vec(),
            waypoints: 50,
        }
    }
}

impl SceneRanges {
    pub fn validate(&self) -> Result<(), SimError> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        for a in 0..3 {
            if !(self.room_min[a] > 0.0 && self.room_min[a] <= self.room_max[a]) {
                return Err(SimError::InvalidRanges("room box"));
            }
        }
        if !ordered(self.rt60) || self.rt60[0] < 0.0 {
            return Err(SimError::InvalidRanges("rt60"));
        }
        if !ordered(self.snr_db) {
            return Err(SimError::InvalidRanges("snr"));
        }
        if !ordered(self.height) {
            return Err(SimError::InvalidRanges("height"));
        }
        if !(self.mic_spacing > 0.0 && self.duration > 0.0 && self.max_speed > 0.0) {
            return Err(SimError::InvalidRanges("spacing, duration and speed must be positive"));
        }
        if self.noise_kinds.is_empty() {
            return Err(SimError::InvalidRanges("no noise kinds"));
        }
        if self.moving && self.waypoints < 2 {
            return Err(SimError::InvalidRanges("moving trajectories need two waypoints"));
        }
        Ok(())
    }
}

/// Independent per-scene seed derived from a master seed (SplitMix64).
pub fn scene_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

/// Draws a random room, array pose, talker trajectory, SNR and noise type.
///
/// The array and the talker share one horizontal plane. Geometry that
/// violates a margin, the speed limit or the minimum source distance is
/// redrawn, up to 100 attempts.
pub fn sample_scene(ranges: &SceneRanges, seed: u64) -> Result<SceneSpec, SimError> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims: [f64; 3] = core::array::from_fn(|a| uniform(&mut rng, [ranges.room_min[a], ranges.room_max[a]]));
    let rt60 = uniform(&mut rng, ranges.rt60);
    let snr_db = uniform(&mut rng, ranges.snr_db);
    let noise_kind = ranges.noise_kinds[rng.gen_range(0..ranges.noise_kinds.len())];
    let room = RoomSpec::new(dims, rt60)?;
    room.absorption()?;
    let noise_seed: u64 = rng.gen();

    const ATTEMPTS: usize = 100;
    for _ in 0..ATTEMPTS {
        let hmax = ranges.height[1].min(dims[2] - ranges.array_margin);
        if hmax < ranges.height[0] {
            break;
        }
        let height = uniform(&mut rng, [ranges.height[0], hmax]);
        let m = ranges.array_margin;
        let center = Vec3::new(
            uniform(&mut rng, [m, dims[0] - m]),
            uniform(&mut rng, [m, dims[1] - m]),
            height,
        );
        let orientation = rng.gen_range(0.0..2.0 * PI);
        let array = ArrayGeometry::pair(center, ranges.mic_spacing, orientation)?;
        let w = ranges.wall_margin;
        let point = |rng: &mut ChaCha8Rng| {
            Vec3::new(uniform(rng, [w, dims[0] - w]), uniform(rng, [w, dims[1] - w]), height)
        };
        let start = point(&mut rng);
        let trajectory = if ranges.moving {
            let end = point(&mut rng);
            let lateral = rng.gen_range(0.0..=ranges.max_lateral);
            let periods = rng.gen_range(0.0..=ranges.max_periods);
            let d = end - start;
            let len = d.norm();
            let perp = if len > 1e-9 { Vec3::new(-d.y() / len, d.x() / len, 0.0) } else { Vec3::default() };
            let n = ranges.waypoints;
            let wps: Vec<(f64, Vec3)> = (0..n)
                .map(|i| {
                    let s = i as f64 / (n - 1) as f64;
                    let p = start.lerp(&end, s) + perp * (lateral * sin(2.0 * PI * periods * s));
                    (s * ranges.duration, p)
                })
                .collect();
            Trajectory::new(wps, true)?
        } else {
            Trajectory::fixed(start)
        };
        let too_close = trajectory
            .waypoints
            .iter()
            .any(|(_, p)| p.distance(&center) < ranges.min_source_distance);
        let scene = SceneSpec { room, array, trajectory, snr_db, noise_kind, seed: noise_seed };
        if too_close || scene.validate(ranges.wall_margin, ranges.max_speed).is_err() {
            continue;
        }
        return Ok(scene);
    }
    Err(SimError::Infeasible(ATTEMPTS))
}

/// Horizontal direction helper used by tests and tools: the point at
/// `distance` from the array center at azimuth `deg` relative to the axis.
pub fn point_at_azimuth(array: &ArrayGeometry, deg: f64, distance: f64) -> Vec3 {
    let axis = array.axis();
    let perp = Vec3::new(-axis.y(), axis.x(), 0.0);
    let perp = perp * (1.0 / sqrt(perp.dot(&perp)));
    let a = deg.to_radians();
    array.center() + (axis * cos(a) + perp * sin(a)) * distance
}
