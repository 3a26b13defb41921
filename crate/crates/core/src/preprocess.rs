//! Synchronizes the irregular CSI amplitude stream to video-frame timestamps
//! and removes outliers.
//!
//! For each video frame the stream is resampled onto `F` uniformly spaced
//! target times by linear interpolation, then a Hampel identifier runs per
//! (tx, rx, subcarrier) series over the current frame's window concatenated
//! with the previous frame's window, so streaming operation never waits for
//! future frames. The assembled RF frame is standardized (zero mean, unit
//! variance) before it reaches the network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensors::AmplitudeSample;

/// Frame/CSI timing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub frame_rate_hz: f64,
    pub csi_rate_hz: f64,
    /// CSI samples resampled per video frame.
    pub samples_per_frame: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig { frame_rate_hz: 7.5, csi_rate_hz: 100.0, samples_per_frame: 5 }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate_hz > 0.0 && self.csi_rate_hz > self.frame_rate_hz) {
            return Err(Error::Config("csi rate must exceed the frame rate".into()));
        }
        let max = self.csi_rate_hz / self.frame_rate_hz;
        if self.samples_per_frame == 0 || (self.samples_per_frame as f64) > max {
            return Err(Error::Config(format!(
                "samples_per_frame {} must be in 1..={}",
                self.samples_per_frame,
                max.floor()
            )));
        }
        Ok(())
    }
}

/// Default Hampel window half-width.
pub const HAMPEL_HALF_WIDTH: usize = 3;
/// Default Hampel deviation factor.
pub const HAMPEL_DEVIATION_FACTOR: f64 = 3.0;

/// A block of `F` synchronized, denoised, standardized CSI amplitude slices
/// paired with one video frame. Values are `[F][Ntx][Nrx][K]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame {
    pub frame_timestamp: f64,
    pub slices: usize,
    pub entries_per_slice: usize,
    pub values: Vec<f64>,
}

impl RfFrame {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Resamples the stream onto `count` uniform targets in `(t_prev, t_cur]`.
///
/// Targets are `t_f = t_prev + f * (t_cur - t_prev) / count` for
/// `f = 1..=count`; each output is the linear interpolation of the bracketing
/// stream samples, so an affine signal is reproduced exactly.
pub fn synchronize(
    stream: &[AmplitudeSample],
    t_prev: f64,
    t_cur: f64,
    count: usize,
) -> Result<Vec<AmplitudeSample>> {
    if !(t_cur > t_prev) {
        return Err(Error::Config(format!("frame interval ({t_prev}, {t_cur}) is empty")));
    }
    if count == 0 {
        return Err(Error::Config("resample count must be positive".into()));
    }
    let dt = (t_cur - t_prev) / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut cursor = 0usize;
    for f in 1..=count {
        let target = t_prev + f as f64 * dt;
        // Advance to the first sample at or after the target.
        while cursor < stream.len() && stream[cursor].timestamp < target {
            cursor += 1;
        }
        if cursor >= stream.len() {
            return Err(Error::Synchronization { target_time: target });
        }
        let after = &stream[cursor];
        if after.timestamp == target {
            out.push(AmplitudeSample { timestamp: target, a: after.a.clone() });
            continue;
        }
        if cursor == 0 {
            return Err(Error::Synchronization { target_time: target });
        }
        let before = &stream[cursor - 1];
        let eta = (target - before.timestamp) / (after.timestamp - before.timestamp);
        let a = before
            .a
            .iter()
            .zip(&after.a)
            .map(|(b, af)| b + eta * (af - b))
            .collect();
        out.push(AmplitudeSample { timestamp: target, a });
    }
    Ok(out)
}

/// Hampel identifier over a scalar series.
///
/// For each index the window is the series clamped to `n - delta ..= n +
/// delta`; with `mu` the window median and `sigma` the raw median absolute
/// deviation, the point is an outlier when `|x - mu| > gamma * sigma` and is
/// replaced by `mu`. When `sigma` is zero any value different from the median
/// is an outlier.
pub fn hampel_filter(series: &[f64], delta: usize, gamma: f64) -> (Vec<f64>, Vec<bool>) {
    let n = series.len();
    let mut cleaned = series.to_vec();
    let mut mask = vec![false; n];
    let mut window = Vec::with_capacity(2 * delta + 1);
    let mut deviations = Vec::with_capacity(2 * delta + 1);
    for i in 0..n {
        let lo = i.saturating_sub(delta);
        let hi = (i + delta).min(n - 1);
        window.clear();
        window.extend_from_slice(&series[lo..=hi]);
        let mu = median_in_place(&mut window);
        deviations.clear();
        deviations.extend(series[lo..=hi].iter().map(|x| (x - mu).abs()));
        let sigma = median_in_place(&mut deviations);
        let deviation = (series[i] - mu).abs();
        let outlier = if sigma == 0.0 { series[i] != mu } else { deviation > gamma * sigma };
        if outlier {
            cleaned[i] = mu;
            mask[i] = true;
        }
    }
    (cleaned, mask)
}

fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Assembles a denoised, standardized RF frame from resampled slices.
///
/// `previous` supplies the preceding frame's resampled slices as Hampel
/// context (empty for the first frame). Filtering runs per entry series
/// across `previous ++ current`; only the current span is kept.
pub fn assemble_rf_frame(
    current: &[AmplitudeSample],
    previous: &[AmplitudeSample],
    frame_timestamp: f64,
) -> Result<RfFrame> {
    if current.is_empty() {
        return Err(Error::Contract("cannot assemble an RF frame from zero slices".into()));
    }
    let entries = current[0].a.len();
    for s in current.iter().chain(previous) {
        if s.a.len() != entries {
            return Err(Error::Contract(format!(
                "slice shape mismatch: expected {entries} entries, found {}",
                s.a.len()
            )));
        }
    }

    let f_count = current.len();
    let ctx_count = previous.len();
    let mut values = vec![0.0; f_count * entries];
    let mut series = Vec::with_capacity(ctx_count + f_count);
    for e in 0..entries {
        series.clear();
        series.extend(previous.iter().map(|s| s.a[e]));
        series.extend(current.iter().map(|s| s.a[e]));
        let (cleaned, _) = hampel_filter(&series, HAMPEL_HALF_WIDTH, HAMPEL_DEVIATION_FACTOR);
        for f in 0..f_count {
            values[f * entries + e] = cleaned[ctx_count + f];
        }
    }

    standardize(&mut values);
    Ok(RfFrame { frame_timestamp, slices: f_count, entries_per_slice: entries, values })
}

/// Zero-mean unit-variance normalization; an all-constant frame maps to zero.
fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var.sqrt() < 1e-12 {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let inv = 1.0 / var.sqrt();
        values.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
}

/// Convenience: cuts the `(t_prev, t_cur]` window out of a stream, resamples
/// both the current and previous frame windows, and assembles the RF frame.
pub fn rf_frame_for(
    stream: &[AmplitudeSample],
    t_prev: f64,
    t_cur: f64,
    timing: &TimingConfig,
) -> Result<RfFrame> {
    timing.validate()?;
    let f = timing.samples_per_frame;
    let current = synchronize(stream, t_prev, t_cur, f)?;
    let frame_dt = t_cur - t_prev;
    let previous = if t_prev - frame_dt >= 0.0 {
        synchronize(stream, t_prev - frame_dt, t_prev, f).unwrap_or_default()
    } else {
        Vec::new()
    };
    assemble_rf_frame(&current, &previous, t_cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, values: &[f64]) -> AmplitudeSample {
        AmplitudeSample { timestamp: t, a: values.to_vec() }
    }

    #[test]
    fn midpoint_interpolation() {
        let stream = vec![sample(0.0, &[2.0]), sample(10.0, &[4.0])];
        let out = synchronize(&stream, 0.0, 10.0, 2).unwrap();
        assert_eq!(out[0].timestamp, 5.0);
        assert_eq!(out[0].a[0], 3.0);
        assert_eq!(out[1].a[0], 4.0);
    }

    #[test]
    fn target_on_sample_is_verbatim() {
        let stream = vec![sample(0.0, &[1.0]), sample(0.5, &[7.25]), sample(1.0, &[3.0])];
        let out = synchronize(&stream, 0.0, 1.0, 2).unwrap();
        assert_eq!(out[0].a[0], 7.25);
    }

    #[test]
    fn affine_signal_is_reproduced_exactly() {
        // a(t) = 3t + 1 sampled irregularly.
        let times = [0.0, 0.07, 0.11, 0.28, 0.35, 0.52, 0.61, 0.83, 0.97, 1.1];
        let stream: Vec<_> = times.iter().map(|&t| sample(t, &[3.0 * t + 1.0])).collect();
        let out = synchronize(&stream, 0.1, 1.0, 6).unwrap();
        for s in &out {
            let expected = 3.0 * s.timestamp + 1.0;
            assert!((s.a[0] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn resampled_grid_is_uniform() {
        let times = [0.0, 0.3, 0.55, 0.72, 1.3];
        let stream: Vec<_> = times.iter().map(|&t| sample(t, &[t])).collect();
        let out = synchronize(&stream, 0.2, 1.2, 5).unwrap();
        let dt = (1.2 - 0.2) / 5.0;
        for (i, s) in out.iter().enumerate() {
            let expected = 0.2 + (i + 1) as f64 * dt;
            assert_eq!(s.timestamp, expected);
        }
    }

    #[test]
    fn missing_coverage_names_the_target() {
        let stream = vec![sample(0.4, &[1.0]), sample(0.6, &[1.0])];
        match synchronize(&stream, 0.0, 1.0, 4) {
            Err(Error::Synchronization { target_time }) => assert!((target_time - 0.25).abs() < 1e-12),
            other => panic!("expected synchronization error, got {other:?}"),
        }
    }

    #[test]
    fn hampel_flags_spike_in_constant_window() {
        let (cleaned, mask) = hampel_filter(&[1.0, 1.0, 1.0, 9.0, 1.0, 1.0, 1.0], 3, 3.0);
        assert_eq!(cleaned, vec![1.0; 7]);
        assert_eq!(mask, vec![false, false, false, true, false, false, false]);
    }

    #[test]
    fn hampel_keeps_linear_ramp() {
        let series = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let (cleaned, mask) = hampel_filter(&series, 3, 3.0);
        assert_eq!(cleaned, series.to_vec());
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn hampel_constant_series_has_empty_mask() {
        let (_, mask) = hampel_filter(&[2.5; 20], 3, 3.0);
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn hampel_is_idempotent_on_noisy_signal() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let mut series: Vec<f64> = (0..40)
                .map(|i| (i as f64 * 0.3).sin() * 2.0 + rng.random_range(-0.05..0.05))
                .collect();
            series[11] += 40.0;
            let (once, _) = hampel_filter(&series, 3, 3.0);
            let (twice, mask) = hampel_filter(&once, 3, 3.0);
            assert_eq!(once, twice);
            assert!(mask.iter().all(|&m| !m));
        }
    }

    #[test]
    fn assemble_keeps_leading_dimension() {
        let slices: Vec<_> = (0..5).map(|i| sample(i as f64, &[1.0, 2.0, 3.0])).collect();
        let frame = assemble_rf_frame(&slices, &[], 4.0).unwrap();
        assert_eq!(frame.slices, 5);
        assert_eq!(frame.entries_per_slice, 3);
        assert_eq!(frame.len(), 15);
    }

    #[test]
    fn all_zero_input_gives_all_zero_frame() {
        let slices: Vec<_> = (0..5).map(|i| sample(i as f64, &[0.0; 6])).collect();
        let frame = assemble_rf_frame(&slices, &[], 4.0).unwrap();
        assert!(frame.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let slices = vec![sample(0.0, &[1.0, 2.0]), sample(1.0, &[1.0])];
        assert!(matches!(assemble_rf_frame(&slices, &[], 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn injected_spike_is_absent_from_frame() {
        // Smooth per-entry series with one spiked slice; compare against the
        // clean assembly of the same data.
        let clean: Vec<AmplitudeSample> =
            (0..5).map(|i| sample(i as f64, &[(i as f64 * 0.2).cos(), 1.0])).collect();
        let prev: Vec<AmplitudeSample> =
            (0..5).map(|i| sample(i as f64 - 5.0, &[((i as f64 - 5.0) * 0.2).cos(), 1.0])).collect();
        let mut spiked = clean.clone();
        spiked[2].a[1] += 100.0;
        let clean_frame = assemble_rf_frame(&clean, &prev, 4.0).unwrap();
        let spiked_frame = assemble_rf_frame(&spiked, &prev, 4.0).unwrap();
        for (a, b) in clean_frame.values.iter().zip(&spiked_frame.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn frame_is_standardized() {
        let slices: Vec<_> = (0..5).map(|i| sample(i as f64, &[i as f64, 10.0 - i as f64])).collect();
        let frame = assemble_rf_frame(&slices, &[], 4.0).unwrap();
        let mean: f64 = frame.values.iter().sum::<f64>() / frame.len() as f64;
        let var: f64 = frame.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frame.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn timing_config_validates_sample_budget() {
        let bad = TimingConfig { samples_per_frame: 14, ..TimingConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        assert!(TimingConfig::default().validate().is_ok());
    }
}
