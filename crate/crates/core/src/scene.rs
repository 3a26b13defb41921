//! Ground-truth scene simulation: multi-person 3D keypoint trajectories over
//! the Body-14 skeleton, plus the sensing geometry (camera and WiFi
//! transceivers) that observes them.
//!
//! Poses are precomputed on an internal 100 Hz grid and interpolated in
//! between, so the CSI channel never extrapolates. All randomness flows from
//! the config seed; the same config always yields the same scene.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Pose2D, KEYPOINT_COUNT};

/// Internal pose sampling rate of generated tracks.
pub const POSE_GRID_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn lerp(self, other: Vec3, t: f64) -> Vec3 {
        self + (other - self).scale(t)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Axis-aligned room volume, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl RoomBounds {
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn is_empty(&self) -> bool {
        self.min.x >= self.max.x || self.min.y >= self.max.y || self.min.z >= self.max.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub duration_s: f64,
    /// Number of people, 0..=3.
    pub person_count: usize,
    /// Sampled walking speed interval in m/s.
    pub walk_speed_range: (f64, f64),
    pub room_bounds: RoomBounds,
    pub rng_seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            duration_s: 12.0,
            person_count: 2,
            walk_speed_range: (0.3, 1.0),
            room_bounds: RoomBounds {
                min: Vec3::new(-4.0, 0.0, 0.0),
                max: Vec3::new(4.0, 8.0, 2.5),
            },
            rng_seed: 7,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.person_count > 3 {
            return Err(Error::Config(format!(
                "person_count {} exceeds the supported maximum of 3",
                self.person_count
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration_s must be positive".into()));
        }
        if self.room_bounds.is_empty() {
            return Err(Error::Config("room_bounds volume is empty".into()));
        }
        let (lo, hi) = self.walk_speed_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("walk_speed_range ({lo}, {hi}) is not a valid interval")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activity {
    Walk,
    Sit,
    Wave,
    Stand,
}

impl Activity {
    pub const ALL: [Activity; 4] = [Activity::Walk, Activity::Sit, Activity::Wave, Activity::Stand];

    pub fn code(self) -> u32 {
        match self {
            Activity::Walk => 0,
            Activity::Sit => 1,
            Activity::Wave => 2,
            Activity::Stand => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Activity> {
        Activity::ALL.into_iter().find(|a| a.code() == code)
    }
}

/// A person's keypoint trajectory, sampled on the 100 Hz pose grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonTrack {
    pub person_id: u32,
    pub activity: Activity,
    pub keypoints: Vec<[Vec3; KEYPOINT_COUNT]>,
}

impl PersonTrack {
    /// Pose at time `t` (seconds from scene start), linearly interpolated
    /// between grid steps. Times that land on a grid step (within 1e-9 steps)
    /// return the stored pose verbatim.
    pub fn pose_at(&self, t: f64) -> Result<Pose3D> {
        let last = self.keypoints.len() - 1;
        let pos = t * POSE_GRID_HZ;
        if pos < -1e-9 || pos > last as f64 + 1e-9 {
            return Err(Error::Domain(format!("time {t} s is outside the stored track")));
        }
        let nearest = pos.round();
        let points = if (pos - nearest).abs() < 1e-9 {
            self.keypoints[(nearest as usize).min(last)]
        } else {
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(last);
            let frac = pos - i0 as f64;
            let mut out = [Vec3::new(0.0, 0.0, 0.0); KEYPOINT_COUNT];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = self.keypoints[i0][k].lerp(self.keypoints[i1][k], frac);
            }
            out
        };
        Ok(Pose3D { person_id: self.person_id, points })
    }
}

/// A single person's 3D pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3D {
    pub person_id: u32,
    pub points: [Vec3; KEYPOINT_COUNT],
}

/// Placement of the camera and the WiFi transceiver arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingGeometry {
    pub tx_position: Vec3,
    pub rx_position: Vec3,
    pub camera_position: Vec3,
    /// Downward camera pitch in radians.
    pub camera_pitch_rad: f64,
    /// Pinhole focal scale in pixels.
    pub focal_px: f64,
    pub image_height: usize,
    pub image_width: usize,
    /// Uniform linear array element spacing in meters.
    pub antenna_spacing_m: f64,
}

impl Default for SensingGeometry {
    fn default() -> Self {
        SensingGeometry {
            tx_position: Vec3::new(0.2, 6.3, 1.0),
            rx_position: Vec3::new(0.2, 0.3, 1.0),
            camera_position: Vec3::new(0.0, 0.0, 2.0),
            camera_pitch_rad: 10f64.to_radians(),
            focal_px: 70.0,
            image_height: 64,
            image_width: 128,
            antenna_spacing_m: 0.026,
        }
    }
}

impl SensingGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.tx_position == self.rx_position
            || self.tx_position == self.camera_position
            || self.rx_position == self.camera_position
        {
            return Err(Error::Config("sensing positions must be distinct".into()));
        }
        if !(self.focal_px > 0.0) || self.image_height == 0 || self.image_width == 0 {
            return Err(Error::Config("camera intrinsics are degenerate".into()));
        }
        if !(self.antenna_spacing_m > 0.0) {
            return Err(Error::Config("antenna spacing must be positive".into()));
        }
        Ok(())
    }

    /// Position of transmit array element `i` (elements spread along x).
    pub fn tx_element(&self, i: usize) -> Vec3 {
        let mut p = self.tx_position;
        p.x += i as f64 * self.antenna_spacing_m;
        p
    }

    /// Position of receive array element `j`.
    pub fn rx_element(&self, j: usize) -> Vec3 {
        let mut p = self.rx_position;
        p.x += j as f64 * self.antenna_spacing_m;
        p
    }

    /// Projects a world point through the pitched pinhole camera. Returns
    /// `None` for points at or behind the camera plane.
    pub fn project_point(&self, p: Vec3) -> Option<(f64, f64)> {
        let rel = p - self.camera_position;
        let (sp, cp) = self.camera_pitch_rad.sin_cos();
        // Camera axes: forward (0, cp, -sp), right (1, 0, 0), down (0, sp, cp).
        let depth = rel.y * cp - rel.z * sp;
        if depth <= 1e-9 {
            return None;
        }
        let x_cam = rel.x;
        let y_cam = rel.y * sp + rel.z * cp;
        let u = self.image_width as f64 / 2.0 + self.focal_px * x_cam / depth;
        let v = self.image_height as f64 / 2.0 - self.focal_px * y_cam / depth;
        Some((u, v))
    }

    /// Projects a 3D pose to image-plane keypoints; points that fall outside
    /// the image or behind the camera are marked invisible.
    pub fn project_pose(&self, pose: &Pose3D) -> Pose2D {
        let mut out = Pose2D::hidden(pose.person_id);
        for (k, &p) in pose.points.iter().enumerate() {
            if let Some((u, v)) = self.project_point(p) {
                if u >= 0.0 && u < self.image_width as f64 && v >= 0.0 && v < self.image_height as f64 {
                    out.points[k] = [u, v];
                    out.visible[k] = true;
                }
            }
        }
        out
    }
}

/// A generated scene: immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub tracks: Vec<PersonTrack>,
    pub geometry: SensingGeometry,
}

impl Scene {
    /// Generates a scene from the config; deterministic in the config seed.
    pub fn generate(config: &SceneConfig) -> Result<Scene> {
        Self::generate_with_geometry(config, SensingGeometry::default())
    }

    pub fn generate_with_geometry(config: &SceneConfig, geometry: SensingGeometry) -> Result<Scene> {
        config.validate()?;
        geometry.validate()?;
        let steps = (config.duration_s * POSE_GRID_HZ).ceil() as usize + 1;
        let mut tracks = Vec::with_capacity(config.person_count);
        for pid in 0..config.person_count {
            let seed = config.rng_seed ^ (pid as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            tracks.push(generate_track(pid as u32, config, &mut rng, steps));
        }
        Ok(Scene { config: config.clone(), tracks, geometry })
    }

    /// Ground-truth poses of all people at time `t`.
    pub fn poses_at(&self, t: f64) -> Result<Vec<Pose3D>> {
        if t < 0.0 || t > self.config.duration_s {
            return Err(Error::Domain(format!(
                "time {t} s is outside the scene duration {} s",
                self.config.duration_s
            )));
        }
        self.tracks.iter().map(|track| track.pose_at(t)).collect()
    }

    /// Projected 2D poses of all people at time `t`.
    pub fn projected_poses_at(&self, t: f64) -> Result<Vec<Pose2D>> {
        Ok(self.poses_at(t)?.iter().map(|p| self.geometry.project_pose(p)).collect())
    }
}

// Skeleton segment lengths in meters at scale 1.0.
const PELVIS_HEIGHT: f64 = 0.95;
const NECK_UP: f64 = 0.50;
const HEAD_UP: f64 = 0.22;
const SHOULDER_DROP: f64 = 0.03;
const SHOULDER_HALF: f64 = 0.19;
const HIP_HALF: f64 = 0.115;
const UPPER_ARM: f64 = 0.28;
const FOREARM: f64 = 0.26;
const THIGH: f64 = 0.45;
const SHANK: f64 = 0.42;

// Region of the room people move in, chosen to sit inside the default camera
// frustum with margin.
const REGION_Y: (f64, f64) = (3.6, 5.8);
const REGION_X_PER_Y: f64 = 0.40;

struct PersonParams {
    height_scale: f64,
    activity: Activity,
    speed: f64,
    stride_freq: f64,
    gait_phase: f64,
    sway_phase: f64,
    sit_start: f64,
    waypoints: Vec<(f64, f64)>,
    spawn_heading: f64,
}

fn sample_region_point(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let ylo = REGION_Y.0.max(cfg.room_bounds.min.y + 0.9);
    let yhi = REGION_Y.1.min(cfg.room_bounds.max.y - 0.9);
    let y = rng.random_range(ylo..yhi);
    let half = (REGION_X_PER_Y * y).min(cfg.room_bounds.max.x - 0.9).min(-(cfg.room_bounds.min.x) - 0.9);
    let x = rng.random_range(-half..half);
    (x, y)
}

fn generate_track(
    person_id: u32,
    cfg: &SceneConfig,
    rng: &mut ChaCha8Rng,
    steps: usize,
) -> PersonTrack {
    let activity = Activity::ALL[rng.random_range(0..Activity::ALL.len())];
    let speed = rng.random_range(cfg.walk_speed_range.0..=cfg.walk_speed_range.1);
    let height_scale = rng.random_range(0.92..1.08);
    let gait_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let sway_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let sit_start = rng.random_range(1.5..(cfg.duration_s * 0.4).max(1.6));
    let spawn_heading = rng.random_range(0.0..std::f64::consts::TAU);

    // Waypoint chain long enough to cover the whole duration at this speed.
    let mut waypoints = vec![sample_region_point(cfg, rng)];
    if activity == Activity::Walk {
        let needed = speed * cfg.duration_s + 1.0;
        let mut total = 0.0;
        while total < needed {
            let next = sample_region_point(cfg, rng);
            let prev = *waypoints.last().unwrap();
            let d = ((next.0 - prev.0).powi(2) + (next.1 - prev.1).powi(2)).sqrt();
            if d < 0.5 {
                continue;
            }
            total += d;
            waypoints.push(next);
        }
    }

    let params = PersonParams {
        height_scale,
        activity,
        speed,
        stride_freq: 0.5 + 0.35 * speed,
        gait_phase,
        sway_phase,
        sit_start,
        waypoints,
        spawn_heading,
    };

    let dt = 1.0 / POSE_GRID_HZ;
    let mut heading = initial_heading(&params);
    let mut keypoints = Vec::with_capacity(steps);
    for step in 0..steps {
        let t = step as f64 * dt;
        let (pos, target_heading) = base_position(&params, t);
        // Rate-limited turning keeps consecutive poses close.
        let max_turn = 2.5 * dt;
        let mut delta = (target_heading - heading).rem_euclid(std::f64::consts::TAU);
        if delta > std::f64::consts::PI {
            delta -= std::f64::consts::TAU;
        }
        heading += delta.clamp(-max_turn, max_turn);
        keypoints.push(body_pose(&params, t, pos, heading));
    }
    PersonTrack { person_id, activity, keypoints }
}

fn initial_heading(params: &PersonParams) -> f64 {
    if params.activity == Activity::Walk && params.waypoints.len() >= 2 {
        let (x0, y0) = params.waypoints[0];
        let (x1, y1) = params.waypoints[1];
        (y1 - y0).atan2(x1 - x0)
    } else {
        params.spawn_heading
    }
}

/// Pelvis ground position and facing direction at time `t`.
fn base_position(params: &PersonParams, t: f64) -> ((f64, f64), f64) {
    match params.activity {
        Activity::Walk => {
            let mut remaining = params.speed * t;
            for w in params.waypoints.windows(2) {
                let (x0, y0) = w[0];
                let (x1, y1) = w[1];
                let seg = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
                if remaining <= seg {
                    let f = remaining / seg;
                    let heading = (y1 - y0).atan2(x1 - x0);
                    return ((x0 + (x1 - x0) * f, y0 + (y1 - y0) * f), heading);
                }
                remaining -= seg;
            }
            let last = *params.waypoints.last().unwrap();
            (last, params.spawn_heading)
        }
        _ => {
            let (x, y) = params.waypoints[0];
            let sway = 0.02 * (std::f64::consts::TAU * 0.25 * t + params.sway_phase).sin();
            let heading = params.spawn_heading;
            ((x - heading.sin() * sway, y + heading.cos() * sway), heading)
        }
    }
}

/// Smoothstep between 0 and 1.
fn smooth01(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Builds the full Body-14 pose from joint angles; every segment is a
/// rotated fixed-length vector, so limb lengths are constant by construction.
fn body_pose(params: &PersonParams, t: f64, pos: (f64, f64), heading: f64) -> [Vec3; KEYPOINT_COUNT] {
    let s = params.height_scale;
    let fwd = Vec3::new(heading.cos(), heading.sin(), 0.0);
    let lat = Vec3::new(-heading.sin(), heading.cos(), 0.0);
    let up = Vec3::new(0.0, 0.0, 1.0);

    let phase = std::f64::consts::TAU * params.stride_freq * t + params.gait_phase;
    let (arm_amp, leg_amp, sit_frac, wave) = match params.activity {
        Activity::Walk => (0.10 + 0.06 * params.speed, 0.12 + 0.04 * params.speed, 0.0, 0.0),
        Activity::Sit => (0.03, 0.0, smooth01((t - params.sit_start) / 1.2), 0.0),
        Activity::Wave => (0.04, 0.0, 0.0, 1.0),
        Activity::Stand => (0.04, 0.0, 0.0, 0.0),
    };

    // Pelvis height follows the thigh angle so the feet keep a constant
    // clearance above the floor throughout the sit transition.
    let thigh_angle = 1.45 * sit_frac;
    let pelvis_z = s * (0.08 + SHANK + THIGH * thigh_angle.cos());
    let pelvis = Vec3::new(pos.0, pos.1, pelvis_z);
    let neck = pelvis + up.scale(s * NECK_UP);
    let head = neck + up.scale(s * HEAD_UP);
    let shoulder_base = neck - up.scale(s * SHOULDER_DROP);
    let r_shoulder = shoulder_base + lat.scale(-s * SHOULDER_HALF);
    let l_shoulder = shoulder_base + lat.scale(s * SHOULDER_HALF);
    let r_hip = pelvis + lat.scale(-s * HIP_HALF);
    let l_hip = pelvis + lat.scale(s * HIP_HALF);

    // A hanging arm swings in the sagittal plane by angle a.
    let arm_dir = |a: f64| fwd.scale(a.sin()) - up.scale(a.cos());
    let right_swing = arm_amp * phase.sin();
    let left_swing = -right_swing;
    let elbow_bend = 0.25;

    let r_elbow;
    let r_wrist;
    if params.activity == Activity::Wave {
        // Right arm raised: upper arm up-forward, forearm waving laterally.
        let up_dir = fwd.scale(0.30) + up.scale(0.954);
        let upper = Vec3::new(up_dir.x, up_dir.y, up_dir.z).scale(s * UPPER_ARM);
        r_elbow = r_shoulder + upper;
        let osc = 0.5 * (std::f64::consts::TAU * 1.0 * t + params.gait_phase).sin();
        let dir = up.scale(1.0) + lat.scale(osc);
        let n = dir.norm();
        r_wrist = r_elbow + dir.scale(s * FOREARM / n);
        let _ = wave;
    } else {
        r_elbow = r_shoulder + arm_dir(right_swing).scale(s * UPPER_ARM);
        r_wrist = r_elbow + arm_dir(right_swing + elbow_bend).scale(s * FOREARM);
    }
    let l_elbow = l_shoulder + arm_dir(left_swing).scale(s * UPPER_ARM);
    let l_wrist = l_elbow + arm_dir(left_swing + elbow_bend).scale(s * FOREARM);

    // Legs: swing angle from vertical in the sagittal plane.
    let leg_dir = |a: f64| fwd.scale(a.sin()) - up.scale(a.cos());
    let (r_thigh_a, l_thigh_a, r_shank_a, l_shank_a) = if sit_frac > 0.0 {
        (thigh_angle, thigh_angle, 0.0, 0.0)
    } else {
        let r = leg_amp * (phase + std::f64::consts::PI).sin();
        let l = -r;
        // Knee keeps a slight forward bend.
        (r, l, r + 0.1, l + 0.1)
    };
    let r_knee = r_hip + leg_dir(r_thigh_a).scale(s * THIGH);
    let r_ankle = r_knee + leg_dir(r_shank_a).scale(s * SHANK);
    let l_knee = l_hip + leg_dir(l_thigh_a).scale(s * THIGH);
    let l_ankle = l_knee + leg_dir(l_shank_a).scale(s * SHANK);

    [
        head, neck, r_shoulder, r_elbow, r_wrist, l_shoulder, l_elbow, l_wrist, r_hip, r_knee,
        r_ankle, l_hip, l_knee, l_ankle,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Body14Topology;

    #[test]
    fn empty_scene_has_no_tracks() {
        let cfg = SceneConfig { person_count: 0, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        assert!(scene.tracks.is_empty());
        assert!(scene.poses_at(1.0).unwrap().is_empty());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SceneConfig { person_count: 3, ..SceneConfig::default() };
        let a = Scene::generate(&cfg).unwrap();
        let b = Scene::generate(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut cfg = SceneConfig { person_count: 4, ..SceneConfig::default() };
        assert!(matches!(Scene::generate(&cfg), Err(Error::Config(_))));
        cfg.person_count = 1;
        cfg.room_bounds.max = cfg.room_bounds.min;
        assert!(matches!(Scene::generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn limb_lengths_stay_rigid() {
        let cfg = SceneConfig { person_count: 2, rng_seed: 7, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let topo = Body14Topology::standard();
        for track in &scene.tracks {
            for &(a, b) in topo.limbs() {
                let mut lengths = Vec::with_capacity(track.keypoints.len());
                for kp in &track.keypoints {
                    lengths.push(kp[a].distance(kp[b]));
                }
                let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
                let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / lengths.len() as f64;
                assert!(var.sqrt() / mean < 0.01, "limb ({a},{b}) drifted: {} / {mean}", var.sqrt());
            }
        }
    }

    #[test]
    fn tracks_stay_inside_room_bounds() {
        for seed in 0..4 {
            let cfg = SceneConfig { person_count: 3, rng_seed: seed, ..SceneConfig::default() };
            let scene = Scene::generate(&cfg).unwrap();
            for track in &scene.tracks {
                for kp in &track.keypoints {
                    for p in kp {
                        assert!(cfg.room_bounds.contains(*p), "point {p:?} left the room");
                    }
                }
            }
        }
    }

    #[test]
    fn poses_at_grid_point_is_verbatim() {
        let cfg = SceneConfig { person_count: 1, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let t = 37.0 / POSE_GRID_HZ * 3.0; // 1.11 s, step 111
        let poses = scene.poses_at(t).unwrap();
        assert_eq!(poses[0].points, scene.tracks[0].keypoints[111]);
    }

    #[test]
    fn pose_interpolation_midpoint() {
        let mut step0 = [Vec3::new(0.0, 0.0, 0.0); KEYPOINT_COUNT];
        let mut step1 = [Vec3::new(0.0, 0.0, 0.0); KEYPOINT_COUNT];
        step0[0] = Vec3::new(1.0, 0.0, 0.0);
        step1[0] = Vec3::new(3.0, 0.0, 0.0);
        let track = PersonTrack { person_id: 0, activity: Activity::Stand, keypoints: vec![step0, step1] };
        let mid = track.pose_at(0.5 / POSE_GRID_HZ).unwrap();
        assert_eq!(mid.points[0].x, 2.0);
    }

    #[test]
    fn poses_at_out_of_range_is_domain_error() {
        let scene = Scene::generate(&SceneConfig::default()).unwrap();
        assert!(matches!(scene.poses_at(-0.1), Err(Error::Domain(_))));
        assert!(matches!(scene.poses_at(1e9), Err(Error::Domain(_))));
    }

    #[test]
    fn three_people_give_three_poses() {
        let cfg = SceneConfig { person_count: 3, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        assert_eq!(scene.poses_at(2.0).unwrap().len(), 3);
    }

    #[test]
    fn optical_axis_projects_to_image_center() {
        let geom = SensingGeometry { camera_pitch_rad: 0.0, ..SensingGeometry::default() };
        let p = geom.camera_position + Vec3::new(0.0, 4.0, 0.0);
        let (u, v) = geom.project_point(p).unwrap();
        assert!((u - 64.0).abs() < 1e-12);
        assert!((v - 32.0).abs() < 1e-12);
    }

    #[test]
    fn point_behind_camera_is_invisible() {
        let geom = SensingGeometry::default();
        let mut pose = Pose3D { person_id: 0, points: [Vec3::new(0.0, -3.0, 1.0); KEYPOINT_COUNT] };
        pose.points[0] = Vec3::new(50.0, 4.0, 1.0); // far outside the frustum
        let projected = geom.project_pose(&pose);
        assert!(!projected.visible.iter().any(|&v| v));
    }

    #[test]
    fn nearer_person_spans_larger_bbox() {
        let geom = SensingGeometry::default();
        let cfg = SceneConfig { person_count: 1, rng_seed: 7, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let pose = scene.poses_at(0.0).unwrap()[0];
        let mut near = pose;
        let mut far = pose;
        for p in near.points.iter_mut() {
            p.y = p.y - 1.0;
        }
        for p in far.points.iter_mut() {
            p.y = p.y + 1.0;
        }
        let d_near = geom.project_pose(&near).bbox_diagonal().unwrap();
        let d_far = geom.project_pose(&far).bbox_diagonal().unwrap();
        assert!(d_near > d_far, "near {d_near} <= far {d_far}");
    }

    #[test]
    fn projection_is_continuous_at_frame_rate() {
        // Pixel displacement between consecutive 7.5 FPS frames stays under
        // 10 px for walk speeds up to 1.5 m/s with default geometry.
        for seed in 0..6 {
            let cfg = SceneConfig {
                person_count: 3,
                walk_speed_range: (1.2, 1.5),
                rng_seed: seed,
                ..SceneConfig::default()
            };
            let scene = Scene::generate(&cfg).unwrap();
            let frame_dt = 1.0 / 7.5;
            let mut t = 0.0;
            while t + frame_dt <= cfg.duration_s {
                let a = scene.projected_poses_at(t).unwrap();
                let b = scene.projected_poses_at(t + frame_dt).unwrap();
                for (pa, pb) in a.iter().zip(&b) {
                    for k in 0..KEYPOINT_COUNT {
                        if pa.visible[k] && pb.visible[k] {
                            let dx = pa.points[k][0] - pb.points[k][0];
                            let dy = pa.points[k][1] - pb.points[k][1];
                            let d = (dx * dx + dy * dy).sqrt();
                            assert!(d < 10.0, "keypoint {k} jumped {d:.2} px at t={t:.2}");
                        }
                    }
                }
                t += frame_dt;
            }
        }
    }
}
