//! The two sensing channels derived from a ground-truth scene.
//!
//! The RF channel evaluates a multipath sum per antenna pair and subcarrier:
//! one line-of-sight path plus one reflection path per limb midpoint of every
//! person, with inverse-power amplitude decay and additive complex Gaussian
//! noise. The emitted amplitude stream carries the timing defects of a real
//! link: jittered timestamps, dropped packets and multiplicative outliers.
//!
//! The visual channel stands in for a camera-side pose extractor: it takes
//! ground-truth projected keypoints, perturbs them with pixel jitter and
//! random misses, and renders JHM/PAF features from the result.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    render_jhm, render_paf, Body14Topology, FeatureGeometry, Jhm, Paf, Pose2D, KEYPOINT_COUNT,
    LIMB_COUNT,
};
use crate::scene::Scene;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex64 {
    pub re: f64,
    pub im: f64,
}

impl Complex64 {
    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// RF channel configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarrier_count: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    /// Nominal CSI sampling rate in Hz.
    pub nominal_rate_hz: f64,
    pub los_amplitude: f64,
    pub limb_reflection_gain: f64,
    pub amplitude_decay_exponent: f64,
    /// Std of the additive complex Gaussian noise per component.
    pub noise_std: f64,
    /// Probability that a single amplitude entry is an outlier.
    pub outlier_rate: f64,
    pub outlier_scale: f64,
    pub packet_loss_rate: f64,
    pub jitter_std_s: f64,
    pub rng_seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            carrier_freq_hz: 5.6e9,
            bandwidth_hz: 20e6,
            subcarrier_count: 30,
            tx_antennas: 3,
            rx_antennas: 3,
            nominal_rate_hz: 100.0,
            los_amplitude: 1.0,
            limb_reflection_gain: 12.0,
            amplitude_decay_exponent: 2.0,
            noise_std: 0.01,
            outlier_rate: 0.005,
            outlier_scale: 3.0,
            packet_loss_rate: 0.05,
            jitter_std_s: 0.001,
            rng_seed: 11,
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subcarrier_count == 0 || self.tx_antennas == 0 || self.rx_antennas == 0 {
            return Err(Error::Config("antenna/subcarrier counts must be positive".into()));
        }
        for (name, p) in [
            ("outlier_rate", self.outlier_rate),
            ("packet_loss_rate", self.packet_loss_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} is not a probability")));
            }
        }
        if !(self.nominal_rate_hz > 0.0) {
            return Err(Error::Config("nominal_rate_hz must be positive".into()));
        }
        Ok(())
    }

    pub fn entries_per_sample(&self) -> usize {
        self.tx_antennas * self.rx_antennas * self.subcarrier_count
    }

    /// Subcarrier center frequencies, uniformly spaced across the bandwidth.
    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        let lo = self.carrier_freq_hz - self.bandwidth_hz / 2.0;
        let k = self.subcarrier_count;
        if k == 1 {
            return vec![self.carrier_freq_hz];
        }
        let step = self.bandwidth_hz / (k - 1) as f64;
        (0..k).map(|i| lo + i as f64 * step).collect()
    }
}

/// One complex CSI measurement, `[Ntx][Nrx][K]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    pub timestamp: f64,
    pub h: Vec<Complex64>,
}

/// One amplitude measurement, `[Ntx][Nrx][K]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSample {
    pub timestamp: f64,
    pub a: Vec<f64>,
}

/// Evaluates the multipath channel at time `t`.
///
/// Deterministic in `(scene, t, rf.rng_seed)`: the noise draw is keyed on the
/// timestamp bits, so re-evaluating any emitted timestamp reproduces the
/// stream value exactly.
pub fn synthesize_csi(scene: &Scene, t: f64, rf: &RfConfig) -> Result<CsiSample> {
    rf.validate()?;
    let poses = scene.poses_at(t)?;
    let topology = Body14Topology::standard();

    // Path set: line of sight plus one reflector per limb midpoint.
    let mut reflectors = Vec::with_capacity(poses.len() * LIMB_COUNT);
    for pose in &poses {
        for &(a, b) in topology.limbs() {
            reflectors.push(pose.points[a].lerp(pose.points[b], 0.5));
        }
    }

    let freqs = rf.subcarrier_freqs();
    let mut h = vec![Complex64 { re: 0.0, im: 0.0 }; rf.entries_per_sample()];
    let two_pi_over_c = std::f64::consts::TAU / SPEED_OF_LIGHT;
    for i in 0..rf.tx_antennas {
        let tx = scene.geometry.tx_element(i);
        for j in 0..rf.rx_antennas {
            let rx = scene.geometry.rx_element(j);
            let base = (i * rf.rx_antennas + j) * rf.subcarrier_count;
            // Line of sight.
            let d_los = tx.distance(rx);
            accumulate_path(&mut h[base..base + rf.subcarrier_count], rf.los_amplitude, d_los, &freqs, two_pi_over_c);
            // Limb reflections.
            for p in &reflectors {
                let d = tx.distance(*p) + p.distance(rx);
                let amp = rf.limb_reflection_gain / d.powf(rf.amplitude_decay_exponent);
                accumulate_path(&mut h[base..base + rf.subcarrier_count], amp, d, &freqs, two_pi_over_c);
            }
        }
    }

    if rf.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rf.rng_seed ^ t.to_bits());
        let normal = Normal::new(0.0, rf.noise_std).expect("valid noise std");
        for entry in h.iter_mut() {
            entry.re += normal.sample(&mut rng);
            entry.im += normal.sample(&mut rng);
        }
    }
    Ok(CsiSample { timestamp: t, h })
}

fn accumulate_path(out: &mut [Complex64], amp: f64, distance: f64, freqs: &[f64], two_pi_over_c: f64) {
    let phase_per_hz = two_pi_over_c * distance;
    for (entry, &f) in out.iter_mut().zip(freqs) {
        let (s, c) = (phase_per_hz * f).sin_cos();
        entry.re += amp * c;
        entry.im += amp * s;
    }
}

/// Emits the amplitude stream over the whole scene duration.
///
/// Nominal `1/rate` spacing perturbed by clamped Gaussian jitter; slots are
/// dropped independently with the packet loss rate; entries are scaled by the
/// outlier multiplier with the outlier rate. Timestamps strictly increase.
/// Each slot derives its own RNG from the seed, so the stream is identical
/// whether slots are generated sequentially or in parallel.
pub fn emit_csi_stream(scene: &Scene, rf: &RfConfig) -> Result<Vec<AmplitudeSample>> {
    rf.validate()?;
    let duration = scene.config.duration_s;
    let dt = 1.0 / rf.nominal_rate_hz;
    let slots = (duration * rf.nominal_rate_hz).floor() as u64;
    let jitter_cap = 0.45 * dt;

    let samples = crate::par::map_indexed(slots as usize + 1, |n| {
        let mut rng = ChaCha8Rng::seed_from_u64(
            rf.rng_seed ^ (n as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        if rf.packet_loss_rate > 0.0 && rng.random::<f64>() < rf.packet_loss_rate {
            return None;
        }
        let mut t = n as f64 * dt;
        if rf.jitter_std_s > 0.0 {
            let normal = Normal::new(0.0, rf.jitter_std_s).expect("valid jitter std");
            let jitter: f64 = normal.sample(&mut rng);
            t += jitter.clamp(-jitter_cap, jitter_cap);
        }
        let t = t.clamp(0.0, duration);
        let csi = synthesize_csi(scene, t, rf).expect("time clamped into scene duration");
        let mut a: Vec<f64> = csi.h.iter().map(|c| c.abs()).collect();
        if rf.outlier_rate > 0.0 {
            for entry in a.iter_mut() {
                if rng.random::<f64>() < rf.outlier_rate {
                    *entry *= rf.outlier_scale;
                }
            }
        }
        Some(AmplitudeSample { timestamp: t, a })
    });

    Ok(samples.into_iter().flatten().collect())
}

/// Noise model of the visual-channel pose extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualNoiseConfig {
    /// Gaussian keypoint jitter in pixels.
    pub jitter_px: f64,
    /// Probability of dropping each keypoint.
    pub miss_rate: f64,
    pub rng_seed: u64,
}

impl Default for VisualNoiseConfig {
    fn default() -> Self {
        VisualNoiseConfig { jitter_px: 1.5, miss_rate: 0.02, rng_seed: 23 }
    }
}

/// Applies extractor noise to ground-truth keypoints.
///
/// The RNG is derived per person from `(seed, person_id)`, so removing or
/// adding one person never changes the noise drawn for the others. Keypoints
/// jittered out of the image are marked invisible.
pub fn apply_visual_noise(
    poses: &[Pose2D],
    fg: &FeatureGeometry,
    noise: &VisualNoiseConfig,
) -> Vec<Pose2D> {
    poses
        .iter()
        .map(|pose| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                noise.rng_seed ^ (pose.person_id as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03),
            );
            let mut out = pose.clone();
            let normal = Normal::new(0.0, noise.jitter_px.max(0.0)).expect("valid jitter");
            for k in 0..KEYPOINT_COUNT {
                // Draw per-keypoint noise unconditionally to keep the stream
                // aligned across visibility changes.
                let dx: f64 = if noise.jitter_px > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                let dy: f64 = if noise.jitter_px > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                let miss: f64 = rng.random();
                if !out.visible[k] {
                    continue;
                }
                if miss < noise.miss_rate {
                    out.visible[k] = false;
                    continue;
                }
                let x = out.points[k][0] + dx;
                let y = out.points[k][1] + dy;
                if x < 0.0 || x >= fg.width as f64 || y < 0.0 || y >= fg.height as f64 {
                    out.visible[k] = false;
                } else {
                    out.points[k] = [x, y];
                }
            }
            out
        })
        .collect()
}

/// The visual-channel feature extractor: noised keypoints rendered as
/// JHM/PAF maps.
pub fn render_visual_features(
    poses: &[Pose2D],
    fg: &FeatureGeometry,
    noise: &VisualNoiseConfig,
) -> (Jhm, Paf) {
    let noised = apply_visual_noise(poses, fg, noise);
    let topology = Body14Topology::standard();
    (render_jhm(&noised, fg), render_paf(&noised, fg, &topology))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Scene, SceneConfig};

    fn quiet_rf() -> RfConfig {
        RfConfig {
            noise_std: 0.0,
            outlier_rate: 0.0,
            packet_loss_rate: 0.0,
            jitter_std_s: 0.0,
            ..RfConfig::default()
        }
    }

    fn empty_scene() -> Scene {
        Scene::generate(&SceneConfig { person_count: 0, ..SceneConfig::default() }).unwrap()
    }

    #[test]
    fn empty_scene_gives_unit_los_amplitude() {
        let scene = empty_scene();
        let rf = quiet_rf();
        let csi = synthesize_csi(&scene, 1.0, &rf).unwrap();
        assert_eq!(csi.h.len(), 270);
        for c in &csi.h {
            assert!((c.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn half_wavelength_paths_cancel() {
        // Two equal-amplitude paths whose length difference is half a
        // wavelength produce zero amplitude on that subcarrier.
        let freqs = [5.6e9];
        let two_pi_over_c = std::f64::consts::TAU / SPEED_OF_LIGHT;
        let lambda = SPEED_OF_LIGHT / freqs[0];
        let mut h = [Complex64 { re: 0.0, im: 0.0 }];
        accumulate_path(&mut h, 1.0, 10.0, &freqs, two_pi_over_c);
        accumulate_path(&mut h, 1.0, 10.0 + lambda / 2.0, &freqs, two_pi_over_c);
        assert!(h[0].abs() < 1e-9);
    }

    #[test]
    fn walking_person_modulates_amplitude_across_time_and_subcarriers() {
        let cfg = SceneConfig { person_count: 1, rng_seed: 3, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let rf = quiet_rf();
        let a = synthesize_csi(&scene, 1.0, &rf).unwrap();
        let b = synthesize_csi(&scene, 2.0, &rf).unwrap();
        assert!((a.h[0].abs() - b.h[0].abs()).abs() > 1e-9, "amplitude must vary over time");
        assert!((a.h[0].abs() - a.h[7].abs()).abs() > 1e-12, "amplitude must vary across subcarriers");
    }

    #[test]
    fn amplitude_is_linear_in_path_gains() {
        let cfg = SceneConfig { person_count: 2, rng_seed: 5, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let rf = quiet_rf();
        let doubled = RfConfig {
            los_amplitude: rf.los_amplitude * 2.0,
            limb_reflection_gain: rf.limb_reflection_gain * 2.0,
            ..rf.clone()
        };
        let a = synthesize_csi(&scene, 1.5, &rf).unwrap();
        let b = synthesize_csi(&scene, 1.5, &doubled).unwrap();
        for (x, y) in a.h.iter().zip(&b.h) {
            assert!((y.re - 2.0 * x.re).abs() < 1e-9);
            assert!((y.im - 2.0 * x.im).abs() < 1e-9);
        }
    }

    #[test]
    fn swapping_tx_rx_preserves_los_amplitude() {
        let mut scene = empty_scene();
        let rf = quiet_rf();
        let a = synthesize_csi(&scene, 0.5, &rf).unwrap();
        std::mem::swap(&mut scene.geometry.tx_position, &mut scene.geometry.rx_position);
        let b = synthesize_csi(&scene, 0.5, &rf).unwrap();
        for (x, y) in a.h.iter().zip(&b.h) {
            assert!((x.abs() - y.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn quiet_stream_has_uniform_intervals() {
        let scene = empty_scene();
        let rf = quiet_rf();
        let stream = emit_csi_stream(&scene, &rf).unwrap();
        assert_eq!(stream.len(), 1201);
        for w in stream.windows(2) {
            let gap = w[1].timestamp - w[0].timestamp;
            assert!((gap - 0.01).abs() < 1e-9, "gap {gap}");
        }
    }

    #[test]
    fn packet_loss_thins_the_stream_binomially() {
        let cfg = SceneConfig { person_count: 0, duration_s: 10.0, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let rf = RfConfig { packet_loss_rate: 0.2, ..quiet_rf() };
        let stream = emit_csi_stream(&scene, &rf).unwrap();
        // 1001 slots, keep probability 0.8: 800 +/- 3 sigma (~38).
        let n = stream.len() as f64;
        assert!((n - 801.0).abs() < 40.0, "kept {n} samples");
    }

    #[test]
    fn stream_timestamps_strictly_increase() {
        let scene = Scene::generate(&SceneConfig { person_count: 1, ..SceneConfig::default() }).unwrap();
        let rf = RfConfig { jitter_std_s: 0.002, packet_loss_rate: 0.1, ..RfConfig::default() };
        let stream = emit_csi_stream(&scene, &rf).unwrap();
        for w in stream.windows(2) {
            assert!(w[1].timestamp > w[0].timestamp);
        }
        assert!(stream.first().unwrap().timestamp >= 0.0);
    }

    #[test]
    fn outlier_free_stream_matches_direct_synthesis() {
        let scene = Scene::generate(&SceneConfig { person_count: 1, ..SceneConfig::default() }).unwrap();
        let rf = RfConfig { outlier_rate: 0.0, ..RfConfig::default() };
        let stream = emit_csi_stream(&scene, &rf).unwrap();
        for sample in stream.iter().step_by(173) {
            let direct = synthesize_csi(&scene, sample.timestamp, &rf).unwrap();
            for (a, c) in sample.a.iter().zip(&direct.h) {
                assert_eq!(*a, c.abs());
            }
        }
    }

    #[test]
    fn stream_is_deterministic_under_seed() {
        let scene = Scene::generate(&SceneConfig { person_count: 1, ..SceneConfig::default() }).unwrap();
        let rf = RfConfig::default();
        let a = emit_csi_stream(&scene, &rf).unwrap();
        let b = emit_csi_stream(&scene, &rf).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn visual_oracle_is_exact_when_noise_free() {
        let cfg = SceneConfig { person_count: 2, rng_seed: 9, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let fg = FeatureGeometry::default();
        let poses = scene.projected_poses_at(1.0).unwrap();
        let noise = VisualNoiseConfig { jitter_px: 0.0, miss_rate: 0.0, rng_seed: 1 };
        let (jhm, paf) = render_visual_features(&poses, &fg, &noise);
        let expected_jhm = render_jhm(&poses, &fg);
        let expected_paf = render_paf(&poses, &fg, &Body14Topology::standard());
        assert_eq!(jhm, expected_jhm);
        assert_eq!(paf, expected_paf);
    }

    #[test]
    fn full_miss_rate_blanks_everything() {
        let cfg = SceneConfig { person_count: 3, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let fg = FeatureGeometry::default();
        let poses = scene.projected_poses_at(0.5).unwrap();
        let noise = VisualNoiseConfig { jitter_px: 0.0, miss_rate: 1.0, rng_seed: 1 };
        let (jhm, paf) = render_visual_features(&poses, &fg, &noise);
        assert!(jhm.data().iter().all(|&v| v == 0.0));
        assert!(paf.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn per_person_noise_is_stable_under_removal() {
        let cfg = SceneConfig { person_count: 3, rng_seed: 2, ..SceneConfig::default() };
        let scene = Scene::generate(&cfg).unwrap();
        let fg = FeatureGeometry::default();
        let poses = scene.projected_poses_at(1.0).unwrap();
        let noise = VisualNoiseConfig::default();
        let all = apply_visual_noise(&poses, &fg, &noise);
        let without_first = apply_visual_noise(&poses[1..], &fg, &noise);
        assert_eq!(&all[1..], &without_first[..]);
    }
}
