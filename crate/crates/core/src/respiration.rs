//! Breath detection and rate estimation: prominence-gated peaks,
//! instantaneous rates, trailing multi-cycle averaging, the per-minute chart
//! and time spent in the 4–9 bpm zone. [`estimate_session`] runs the whole
//! pipeline from a recording.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reliability::{self, QualityParams, ReliabilityReport};
use crate::session::{RatePoint, RateSeries, SessionRecording, MIN_RESPIRATION_S};
use crate::signal::{self, AxisPolicy, Signal1D};

/// Lower and upper edge of the slow-breathing zone (bpm, inclusive).
pub const ZONE_BPM: (f64, f64) = (4.0, 9.0);

const MIN_PEAK_SIGNAL_S: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub min_spacing_s: f64,
    /// Fraction of the median candidate prominence a peak must reach.
    pub prominence_fraction: f64,
    pub averaging_cycles: usize,
    pub rate_band_bpm: (f64, f64),
}

impl Default for PeakParams {
    fn default() -> Self {
        Self { min_spacing_s: 2.0, prominence_fraction: 0.5, averaging_cycles: 7, rate_band_bpm: (4.0, 30.0) }
    }
}

impl PeakParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_spacing_s.is_finite() && self.min_spacing_s > 0.0) {
            return Err(Error::InvalidParameter(format!("min_spacing_s must be positive, got {}", self.min_spacing_s)));
        }
        if !(self.prominence_fraction > 0.0 && self.prominence_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prominence_fraction must lie in (0, 1], got {}",
                self.prominence_fraction
            )));
        }
        if self.averaging_cycles == 0 {
            return Err(Error::InvalidParameter("averaging_cycles must be at least 1".into()));
        }
        let (lo, hi) = self.rate_band_bpm;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidParameter(format!("rate band [{lo}, {hi}] is empty")));
        }
        Ok(())
    }
}

/// Detected breaths. `indices` are sample positions in the analysed signal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub peak_times: Vec<f64>,
    pub prominences: Vec<f64>,
    #[serde(skip)]
    pub indices: Vec<usize>,
    #[serde(skip)]
    pub sample_rate_hz: f64,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peak_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak_times.is_empty()
    }

    /// Interval in seconds between peak `i` and peak `i + 1`, from sample
    /// positions so it does not depend on the absolute start time.
    fn interval_s(&self, i: usize) -> f64 {
        (self.indices[i + 1] - self.indices[i]) as f64 / self.sample_rate_hz
    }
}

/// Local maxima: samples strictly greater than both neighbours.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    if values.len() < 3 {
        return Vec::new();
    }
    (1..values.len() - 1).filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1]).collect()
}

/// Vertical distance between each peak and its lowest contour line: the
/// higher of the two minima reached walking outwards until a sample rises
/// above the peak or the signal ends.
pub fn prominences(values: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .map(|&p| {
            let h = values[p];
            let mut left_min = h;
            for &v in values[..p].iter().rev() {
                if v > h {
                    break;
                }
                left_min = left_min.min(v);
            }
            let mut right_min = h;
            for &v in &values[p + 1..] {
                if v > h {
                    break;
                }
                right_min = right_min.min(v);
            }
            h - left_min.max(right_min)
        })
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    }
}

/// Prominence-gated peak detection with a minimum spacing between breaths.
///
/// Candidates are kept when their prominence reaches `prominence_fraction`
/// times the median candidate prominence. Among candidates closer than
/// `min_spacing_s`, the more prominent one wins (earlier on ties).
pub fn detect_peaks(sig: &Signal1D, p: &PeakParams) -> Result<PeakSet> {
    p.validate()?;
    if sig.duration_s() < MIN_PEAK_SIGNAL_S {
        return Err(Error::TooShort(format!(
            "peak detection needs at least {MIN_PEAK_SIGNAL_S} s, got {} s",
            sig.duration_s()
        )));
    }
    let values = sig.values();
    let fs = sig.sample_rate_hz();
    let candidates = local_maxima(values);
    if candidates.is_empty() {
        return Ok(PeakSet { sample_rate_hz: fs, ..PeakSet::default() });
    }
    let proms = prominences(values, &candidates);
    let threshold = p.prominence_fraction * median(&proms);
    let mut retained: Vec<(usize, f64)> =
        candidates.into_iter().zip(proms).filter(|&(_, prom)| prom >= threshold).collect();

    let min_gap = p.min_spacing_s * fs;
    let mut order: Vec<usize> = (0..retained.len()).collect();
    order.sort_by(|&a, &b| retained[b].1.total_cmp(&retained[a].1).then(a.cmp(&b)));
    let mut keep = vec![true; retained.len()];
    for &i in &order {
        if !keep[i] {
            continue;
        }
        let idx = retained[i].0;
        for j in (0..i).rev() {
            if ((idx - retained[j].0) as f64) >= min_gap - 1e-9 {
                break;
            }
            keep[j] = false;
        }
        for j in i + 1..retained.len() {
            if ((retained[j].0 - idx) as f64) >= min_gap - 1e-9 {
                break;
            }
            keep[j] = false;
        }
    }
    let mut k = keep.iter();
    retained.retain(|_| *k.next().unwrap());

    Ok(PeakSet {
        peak_times: retained.iter().map(|&(i, _)| sig.time_at(i)).collect(),
        prominences: retained.iter().map(|&(_, p)| p).collect(),
        indices: retained.iter().map(|&(i, _)| i).collect(),
        sample_rate_hz: fs,
    })
}

/// `60 / interval` for each adjacent peak pair, stamped at the later peak;
/// rates outside `band_bpm` are dropped.
pub fn instantaneous_rates(peaks: &PeakSet, band_bpm: (f64, f64)) -> RateSeries {
    let entries = (0..peaks.len().saturating_sub(1))
        .filter_map(|i| {
            let bpm = 60.0 / peaks.interval_s(i);
            (bpm >= band_bpm.0 && bpm <= band_bpm.1).then_some(RatePoint { t: peaks.peak_times[i + 1], bpm })
        })
        .collect();
    RateSeries::new(entries).expect("peak times increase and rates lie in the band")
}

/// Trailing mean over the last `cycles` entries (fewer at the start).
pub fn smooth_rates(raw: &RateSeries, cycles: usize) -> RateSeries {
    let cycles = cycles.max(1);
    let entries = raw.entries();
    let smoothed = (0..entries.len())
        .map(|i| {
            let window = &entries[(i + 1).saturating_sub(cycles)..=i];
            RatePoint { t: entries[i].t, bpm: window.iter().map(|e| e.bpm).sum::<f64>() / window.len() as f64 }
        })
        .collect();
    RateSeries::new(smoothed).expect("means of in-range rates stay in range")
}

/// One value per whole minute since `start_s`: the mean of entries inside the
/// minute, else the previous minute's value, else absent.
pub fn per_minute(smoothed: &RateSeries, start_s: f64, duration_s: f64) -> Vec<Option<f64>> {
    let minutes = (duration_s / 60.0 + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(minutes);
    let mut carry = None;
    for m in 0..minutes {
        let lo = start_s + 60.0 * m as f64;
        let (sum, n) = smoothed.between(lo, lo + 60.0).fold((0.0, 0usize), |(s, n), e| (s + e.bpm, n + 1));
        if n > 0 {
            carry = Some(sum / n as f64);
        }
        out.push(carry);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespirationEstimate {
    pub peaks: PeakSet,
    /// Unsmoothed in-band breath-to-breath rates.
    pub raw: RateSeries,
    /// Trailing-averaged instantaneous rates.
    pub instantaneous: RateSeries,
    pub per_minute: Vec<Option<f64>>,
    pub zone_seconds_4_9: f64,
    pub mean_bpm: Option<f64>,
    pub min_bpm: Option<f64>,
    pub max_bpm: Option<f64>,
    pub duration_s: f64,
}

/// Seconds of breathing whose smoothed rate sits in the 4–9 bpm zone. Each
/// entry accounts for the breath interval that produced it.
pub fn zone_seconds(raw: &RateSeries, smoothed: &RateSeries) -> f64 {
    raw.entries()
        .iter()
        .zip(smoothed.entries())
        .filter(|(_, s)| s.bpm >= ZONE_BPM.0 && s.bpm <= ZONE_BPM.1)
        .map(|(r, _)| 60.0 / r.bpm)
        .sum()
}

/// Stage 4 on an already cleaned signal.
pub fn estimate_rates(cleaned: &Signal1D, duration_s: f64, p: &PeakParams) -> Result<RespirationEstimate> {
    let peaks = detect_peaks(cleaned, p)?;
    let raw = instantaneous_rates(&peaks, p.rate_band_bpm);
    let instantaneous = smooth_rates(&raw, p.averaging_cycles);
    let per_minute = per_minute(&instantaneous, cleaned.t0(), duration_s);
    let zone = zone_seconds(&raw, &instantaneous).min(duration_s);
    let rates: Vec<f64> = instantaneous.rates().collect();
    let (mean_bpm, min_bpm, max_bpm) = if rates.is_empty() {
        (None, None, None)
    } else {
        (
            Some(rates.iter().sum::<f64>() / rates.len() as f64),
            rates.iter().copied().reduce(f64::min),
            rates.iter().copied().reduce(f64::max),
        )
    };
    Ok(RespirationEstimate {
        peaks,
        raw,
        instantaneous,
        per_minute,
        zone_seconds_4_9: zone,
        mean_bpm,
        min_bpm,
        max_bpm,
        duration_s,
    })
}

/// Every tunable of the respiration pipeline, defaulting to the published
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub axis: AxisPolicy,
    pub lowpass_cutoff_hz: f64,
    pub lowpass_order: usize,
    pub working_rate_hz: f64,
    pub local_mean_window_s: f64,
    pub smoothing_points: usize,
    pub quality: QualityParams,
    pub peaks: PeakParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            axis: AxisPolicy::default(),
            lowpass_cutoff_hz: 10.0,
            lowpass_order: 4,
            working_rate_hz: signal::WORKING_RATE_HZ,
            local_mean_window_s: 30.0,
            smoothing_points: 13,
            quality: QualityParams::default(),
            peaks: PeakParams::default(),
        }
    }
}

/// Output of stages 1–2.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    /// Low-passed, resampled single axis before mean removal.
    pub raw: Signal1D,
    /// After local mean removal and moving-average smoothing.
    pub cleaned: Signal1D,
}

/// Axis selection, zero-phase low-pass at the native rate, resampling to the
/// working rate, local mean removal and moving average.
pub fn preprocess(rec: &SessionRecording, cfg: &PipelineConfig) -> Result<Preprocessed> {
    let axis = signal::select_axis(rec, cfg.axis);
    let filtered = signal::butterworth_lowpass(&axis, cfg.lowpass_cutoff_hz, cfg.lowpass_order)?;
    let raw = signal::resample_uniform(&filtered, cfg.working_rate_hz)?;
    let detrended = signal::local_mean_removal(&raw, cfg.local_mean_window_s)?;
    let cleaned = signal::moving_average(&detrended, cfg.smoothing_points)?;
    Ok(Preprocessed { raw, cleaned })
}

/// Full pipeline. Gated sessions return their report with no estimate.
pub fn estimate_session(
    rec: &SessionRecording,
    cfg: &PipelineConfig,
) -> Result<(ReliabilityReport, Option<RespirationEstimate>)> {
    if rec.duration_s() < MIN_RESPIRATION_S {
        return Err(Error::TooShort(format!(
            "respiration estimation needs at least {MIN_RESPIRATION_S} s, got {} s",
            rec.duration_s()
        )));
    }
    cfg.peaks.validate()?;
    let pre = preprocess(rec, cfg)?;
    let report = reliability::assess(&pre.raw, &pre.cleaned, &cfg.quality)?;
    if !report.verdict.is_ok() {
        return Ok((report, None));
    }
    let estimate = estimate_rates(&pre.cleaned, rec.duration_s(), &cfg.peaks)?;
    Ok((report, Some(estimate)))
}
