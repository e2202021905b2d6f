//! Single-channel preprocessing: axis selection, resampling, zero-phase
//! low-pass filtering, local mean removal and boxcar smoothing.

pub mod butterworth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::SessionRecording;

/// Working rate of every stage after jitter removal.
pub const WORKING_RATE_HZ: f64 = 10.0;

/// A uniformly sampled single channel starting at `t0` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal1D {
    sample_rate_hz: f64,
    values: Vec<f64>,
    t0: f64,
}

impl Signal1D {
    pub fn new(sample_rate_hz: f64, values: Vec<f64>, t0: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if values.is_empty() {
            return Err(Error::InvalidParameter("signal must have at least one sample".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample {i} is not finite")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidParameter("start time is not finite".into()));
        }
        Ok(Self { sample_rate_hz, values, t0 })
    }

    /// Builds a signal by sampling `f` at `n` points spaced `1/sample_rate_hz`.
    pub fn from_fn(sample_rate_hz: f64, n: usize, t0: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..n).map(|i| f(t0 + i as f64 / sample_rate_hz)).collect();
        Self::new(sample_rate_hz, values, t0)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate_hz
    }

    /// Number of samples times the sampling period.
    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate_hz
    }

    /// Same timing, new values. Values must be finite.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { sample_rate_hz: self.sample_rate_hz, values, t0: self.t0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v * c).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisPolicy {
    FixedZ,
    #[default]
    MaxVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn pick(self, s: &crate::session::AccelSample) -> f64 {
        match self {
            Axis::X => s.x,
            Axis::Y => s.y,
            Axis::Z => s.z,
        }
    }
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// The axis `policy` selects for `rec`. Ties under max-variance resolve to
/// the later axis, so an all-constant recording yields z.
pub fn chosen_axis(rec: &SessionRecording, policy: AxisPolicy) -> Axis {
    match policy {
        AxisPolicy::FixedZ => Axis::Z,
        AxisPolicy::MaxVariance => {
            let mut best = (Axis::Z, f64::NEG_INFINITY);
            for axis in [Axis::Z, Axis::Y, Axis::X] {
                let channel: Vec<f64> = rec.samples().iter().map(|s| axis.pick(s)).collect();
                let v = variance(&channel);
                if v > best.1 {
                    best = (axis, v);
                }
            }
            best.0
        }
    }
}

/// Extracts one channel on the recording's nominal uniform grid. Samples
/// whose timestamps sit off that grid are linearly interpolated onto it.
pub fn select_axis(rec: &SessionRecording, policy: AxisPolicy) -> Signal1D {
    let axis = chosen_axis(rec, policy);
    let samples = rec.samples();
    let fs = rec.sample_rate_hz();
    let t0 = samples[0].t;
    let period = 1.0 / fs;
    let on_grid = samples.iter().enumerate().all(|(i, s)| (s.t - (t0 + i as f64 * period)).abs() <= 0.01 * period);

    let values: Vec<f64> = if on_grid {
        samples.iter().map(|s| axis.pick(s)).collect()
    } else {
        let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let channel: Vec<f64> = samples.iter().map(|s| axis.pick(s)).collect();
        let span = times[times.len() - 1] - t0;
        let n = (span * fs + 1e-9).floor() as usize + 1;
        (0..n).map(|k| interpolate(&times, &channel, t0 + k as f64 * period)).collect()
    };
    Signal1D { sample_rate_hz: fs, values, t0 }
}

/// Piecewise-linear interpolation on sorted `times`, clamped at the ends.
fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let idx = times.partition_point(|&x| x <= t);
    if idx == 0 {
        return values[0];
    }
    if idx >= times.len() {
        return values[values.len() - 1];
    }
    let (ta, tb) = (times[idx - 1], times[idx]);
    let w = (t - ta) / (tb - ta);
    values[idx - 1] + w * (values[idx] - values[idx - 1])
}

/// Linear interpolation onto a uniform grid at `target_hz` spanning the
/// first to the last sample time.
pub fn resample_uniform(sig: &Signal1D, target_hz: f64) -> Result<Signal1D> {
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(Error::InvalidParameter(format!("target rate must be positive, got {target_hz}")));
    }
    if sig.len() < 2 {
        return Err(Error::TooShort("resampling needs at least two samples".into()));
    }
    let span_samples = (sig.len() - 1) as f64;
    let ratio = sig.sample_rate_hz / target_hz;
    let n_out = (span_samples / ratio + 1e-9).floor() as usize + 1;
    let last = sig.len() - 1;
    let values = (0..n_out)
        .map(|k| {
            let pos = k as f64 * ratio;
            let i = (pos.floor() as usize).min(last);
            let frac = pos - i as f64;
            if i == last || frac <= 1e-12 {
                sig.values[i]
            } else {
                sig.values[i] + frac * (sig.values[i + 1] - sig.values[i])
            }
        })
        .collect();
    Ok(Signal1D { sample_rate_hz: target_hz, values, t0: sig.t0 })
}

/// Zero-phase Butterworth low-pass (forward then backward pass).
pub fn butterworth_lowpass(sig: &Signal1D, cutoff_hz: f64, order: usize) -> Result<Signal1D> {
    let nyquist = sig.sample_rate_hz / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) for a {} Hz signal",
            sig.sample_rate_hz
        )));
    }
    if order == 0 {
        return Err(Error::InvalidParameter("filter order must be at least 1".into()));
    }
    let sections = butterworth::lowpass_sections(order, cutoff_hz, sig.sample_rate_hz);
    Ok(sig.with_values(butterworth::filtfilt(&sections, &sig.values)))
}

/// Centered boxcar mean over `[i - half, i + half]`, truncated at the edges.
fn centered_mean(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Subtracts from each sample the mean of a `window_s`-long window centered
/// on it (truncated at the edges).
pub fn local_mean_removal(sig: &Signal1D, window_s: f64) -> Result<Signal1D> {
    if window_s.is_nan() || window_s <= 0.0 {
        return Err(Error::InvalidParameter(format!("window must be positive, got {window_s}")));
    }
    if window_s >= sig.duration_s() {
        return Err(Error::InvalidParameter(format!(
            "window {window_s} s is not shorter than the {} s signal",
            sig.duration_s()
        )));
    }
    let half = (window_s * sig.sample_rate_hz / 2.0).round() as usize;
    let means = centered_mean(&sig.values, half);
    Ok(sig.with_values(sig.values.iter().zip(means).map(|(v, m)| v - m).collect()))
}

/// Centered `points`-sample boxcar average, truncated at the edges.
pub fn moving_average(sig: &Signal1D, points: usize) -> Result<Signal1D> {
    if points == 0 || points.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("moving average needs an odd, positive width, got {points}")));
    }
    Ok(sig.with_values(centered_mean(&sig.values, points / 2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::AccelSample;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn sine(fs: f64, secs: f64, freq: f64, amp: f64) -> Signal1D {
        Signal1D::from_fn(fs, (secs * fs) as usize, 0.0, |t| amp * (2.0 * PI * freq * t).sin()).unwrap()
    }

    fn rms(v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    fn recording(f: impl Fn(f64) -> (f64, f64, f64)) -> SessionRecording {
        let samples = (0..2000)
            .map(|i| {
                let t = i as f64 / 100.0;
                let (x, y, z) = f(t);
                AccelSample::new(t, x, y, z)
            })
            .collect();
        SessionRecording::new("t", 100.0, samples, BTreeMap::new()).unwrap()
    }

    #[test]
    fn max_variance_picks_the_moving_axis() {
        let rec = recording(|t| (0.1, -1.0, (2.0 * PI * 0.2 * t).sin()));
        assert_eq!(chosen_axis(&rec, AxisPolicy::MaxVariance), Axis::Z);
        let rec = recording(|t| ((2.0 * PI * 0.2 * t).sin(), 0.0, 0.0));
        assert_eq!(chosen_axis(&rec, AxisPolicy::MaxVariance), Axis::X);
        assert_eq!(chosen_axis(&rec, AxisPolicy::FixedZ), Axis::Z);
        let sig = select_axis(&rec, AxisPolicy::FixedZ);
        assert!(sig.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn irregular_timestamps_land_on_nominal_grid() {
        let samples = (0..200)
            .map(|i| {
                let jitter = if i % 2 == 1 { 0.003 } else { 0.0 };
                let t = i as f64 / 100.0 + jitter;
                AccelSample::new(t, 0.0, 0.0, 2.0 * t)
            })
            .collect();
        let rec = SessionRecording::new("j", 100.0, samples, BTreeMap::new()).unwrap();
        let sig = select_axis(&rec, AxisPolicy::FixedZ);
        for (i, v) in sig.values().iter().enumerate() {
            assert!((v - 2.0 * i as f64 / 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_constant_and_ramp() {
        let c = Signal1D::new(100.0, vec![3.0; 1001], 0.0).unwrap();
        let out = resample_uniform(&c, 10.0).unwrap();
        assert_eq!(out.len(), 101);
        assert!(out.values().iter().all(|&v| v == 3.0));

        let ramp = Signal1D::from_fn(100.0, 101, 0.0, |t| t).unwrap();
        let out = resample_uniform(&ramp, 10.0).unwrap();
        assert_eq!(out.len(), 11);
        for (k, v) in out.values().iter().enumerate() {
            assert!((v - k as f64 * 0.1).abs() < 1e-9);
        }
        // non-integer ratio stays exact on affine input
        let out = resample_uniform(&ramp, 7.3).unwrap();
        for (k, v) in out.values().iter().enumerate() {
            assert!((v - k as f64 / 7.3).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_slow_sine_tracks_closed_form() {
        let sig = sine(100.0, 60.0, 0.1, 1.0);
        let out = resample_uniform(&sig, 10.0).unwrap();
        let max_dev = out
            .values()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - (2.0 * PI * 0.1 * k as f64 / 10.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-3, "{max_dev}");
    }

    #[test]
    fn resample_rejects_bad_rate() {
        let sig = sine(100.0, 1.0, 1.0, 1.0);
        assert!(resample_uniform(&sig, 0.0).is_err());
        assert!(resample_uniform(&sig, -5.0).is_err());
        let one = Signal1D::new(100.0, vec![1.0], 0.0).unwrap();
        assert!(resample_uniform(&one, 10.0).is_err());
    }

    #[test]
    fn butterworth_dc_gain_is_unity() {
        let c = Signal1D::new(100.0, vec![0.98; 3000], 0.0).unwrap();
        let out = butterworth_lowpass(&c, 10.0, 4).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.98).abs() < 1e-6));
    }

    #[test]
    fn butterworth_attenuates_40hz() {
        // |H(f)|^2 = 1 / (1 + (f/fc)^(2N)), applied twice by the forward-backward pass.
        let ratio: f64 = 40.0 / 10.0;
        let single = 1.0 / (1.0 + ratio.powi(8)).sqrt();
        let predicted = single * single;
        assert!(predicted < 0.01);

        let sig = sine(100.0, 20.0, 40.0, 1.0);
        let out = butterworth_lowpass(&sig, 10.0, 4).unwrap();
        let ratio = rms(&out.values()[200..1800]) / rms(&sig.values()[200..1800]);
        assert!(ratio < 0.01, "{ratio}");
    }

    #[test]
    fn butterworth_passes_slow_breathing() {
        let ratio: f64 = 0.1 / 10.0;
        let predicted = 1.0 / (1.0 + ratio.powi(8));
        assert!((1.0 - predicted) < 0.005);

        let sig = sine(100.0, 60.0, 0.1, 1.0);
        let out = butterworth_lowpass(&sig, 10.0, 4).unwrap();
        let amp = out.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((amp - 1.0).abs() < 0.005, "{amp}");
    }

    #[test]
    fn butterworth_is_zero_phase() {
        let sig = sine(100.0, 30.0, 0.25, 1.0);
        let out = butterworth_lowpass(&sig, 10.0, 4).unwrap();
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap();
        let a = argmax(&sig.values()[500..1000]);
        let b = argmax(&out.values()[500..1000]);
        assert!((a as i64 - b as i64).abs() < 1);
    }

    #[test]
    fn butterworth_rejects_cutoff_at_nyquist() {
        let sig = sine(10.0, 10.0, 0.1, 1.0);
        assert!(butterworth_lowpass(&sig, 5.0, 4).is_err());
        assert!(butterworth_lowpass(&sig, 10.0, 4).is_err());
        assert!(butterworth_lowpass(&sig, 0.0, 4).is_err());
    }

    #[test]
    fn local_mean_of_constant_is_zero() {
        let c = Signal1D::new(10.0, vec![0.7; 1200], 0.0).unwrap();
        let out = local_mean_removal(&c, 30.0).unwrap();
        assert!(out.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn local_mean_of_ramp_is_zero_in_the_interior() {
        let ramp = Signal1D::from_fn(10.0, 1200, 0.0, |t| 0.01 * t).unwrap();
        let out = local_mean_removal(&ramp, 30.0).unwrap();
        let half = 150;
        for v in &out.values()[half..1200 - half] {
            assert!(v.abs() < 1e-9);
        }
        assert!(out.values()[0].abs() > 1e-3);
        assert!(out.values()[1199].abs() > 1e-3);
    }

    #[test]
    fn local_mean_step_response() {
        // Direct computation: at distance d < half past the step, the
        // centered window holds (half + d + 1) ones out of 2*half + 1.
        let fs = 10.0;
        let step = Signal1D::from_fn(fs, 1200, 0.0, |t| if t >= 60.0 { 1.0 } else { 0.0 }).unwrap();
        let out = local_mean_removal(&step, 30.0).unwrap();
        let half = 150usize;
        let step_idx = 600usize;
        for d in [0usize, 10, 75, 149] {
            let expected = 1.0 - (half + d + 1) as f64 / (2 * half + 1) as f64;
            assert!((out.values()[step_idx + d] - expected).abs() < 1e-12);
        }
        assert!(out.values().iter().all(|v| v.abs() <= 1.0));
        for v in &out.values()[step_idx + half..1200 - half] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn local_mean_rejects_window_longer_than_signal() {
        let c = Signal1D::new(10.0, vec![0.0; 100], 0.0).unwrap();
        assert!(local_mean_removal(&c, 30.0).is_err());
        assert!(local_mean_removal(&c, 0.0).is_err());
    }

    #[test]
    fn moving_average_basics() {
        let c = Signal1D::new(10.0, vec![1.5; 50], 0.0).unwrap();
        assert!(moving_average(&c, 13).unwrap().values().iter().all(|v| (v - 1.5).abs() < 1e-12));

        let mut imp = vec![0.0; 61];
        imp[30] = 1.0;
        let out = moving_average(&Signal1D::new(10.0, imp, 0.0).unwrap(), 13).unwrap();
        for (i, v) in out.values().iter().enumerate() {
            let expected = if (24..=36).contains(&i) { 1.0 / 13.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12, "i={i}");
        }
        assert!(moving_average(&c, 12).is_err());
        assert!(moving_average(&c, 0).is_err());
    }

    #[test]
    fn moving_average_shrinks_white_noise_variance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() - 0.5).collect();
        let sig = Signal1D::new(10.0, noise, 0.0).unwrap();
        let out = moving_average(&sig, 13).unwrap();
        let var_in = variance(sig.values());
        let var_out = variance(&out.values()[6..10_000 - 6]);
        let ratio = var_out / (var_in / 13.0);
        assert!((0.8..=1.2).contains(&ratio), "{ratio}");
    }
}
