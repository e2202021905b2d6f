//! Signal-quality gate: IQR-based compromise detection on the cleaned
//! signal and flat-surface detection on the raw single-axis signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal1D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityParams {
    pub iqr_window_s: f64,
    pub iqr_multiplier: f64,
    /// Session is discarded when the compromised fraction strictly exceeds this.
    pub compromise_threshold: f64,
    pub flat_segment_s: f64,
    /// Segment-mean deviation (g) above which a segment counts as variation.
    pub flat_diff_threshold: f64,
    /// Flat when the share of variation segments is strictly below this.
    pub flat_variation_fraction: f64,
}

impl Default for QualityParams {
    fn default() -> Self {
        Self {
            iqr_window_s: 20.0,
            iqr_multiplier: 0.8,
            compromise_threshold: 0.25,
            flat_segment_s: 30.0,
            flat_diff_threshold: 0.02,
            flat_variation_fraction: 0.30,
        }
    }
}

impl QualityParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("iqr_window_s", self.iqr_window_s),
            ("iqr_multiplier", self.iqr_multiplier),
            ("flat_segment_s", self.flat_segment_s),
            ("flat_diff_threshold", self.flat_diff_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let fractions = [
            ("compromise_threshold", self.compromise_threshold),
            ("flat_variation_fraction", self.flat_variation_fraction),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Ok,
    SignalCompromised,
    NotOnChest,
}

impl Verdict {
    /// The user-facing message for a gated session.
    pub fn message(self) -> &'static str {
        match self {
            Verdict::Ok => "ok",
            Verdict::SignalCompromised => "signal compromised",
            Verdict::NotOnChest => "phone is not on chest",
        }
    }

    pub fn is_ok(self) -> bool {
        self == Verdict::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub compromised_fraction: f64,
    /// Share of 30 s segments whose mean stays within the diff threshold.
    pub flat_fraction: f64,
    pub verdict: Verdict,
    pub params_used: QualityParams,
}

/// Sample ranges of non-overlapping windows of `window` samples. A trailing
/// partial window is kept when it is at least half a window long and merged
/// into its predecessor otherwise.
pub(crate) fn window_ranges(n: usize, window: usize) -> Vec<std::ops::Range<usize>> {
    let full = n / window;
    let rem = n % window;
    let mut out: Vec<_> = (0..full).map(|k| k * window..(k + 1) * window).collect();
    if rem > 0 {
        if 2 * rem >= window || out.is_empty() {
            out.push(full * window..n);
        } else if let Some(last) = out.last_mut() {
            last.end = n;
        }
    }
    out
}

/// First and third quartiles by linear interpolation between order
/// statistics.
pub fn quartiles(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn window_samples(seconds: f64, fs: f64) -> usize {
    ((seconds * fs).round() as usize).max(1)
}

/// Per-sample compromise flags: a sample is compromised when it lies
/// strictly outside `[Q1 - m·IQR, Q3 + m·IQR]` of its window.
pub fn compromised_mask(sig: &Signal1D, p: &QualityParams) -> Result<Vec<bool>> {
    let window = window_samples(p.iqr_window_s, sig.sample_rate_hz());
    if sig.len() < window {
        return Err(Error::TooShort(format!(
            "{} s signal is shorter than one {} s quality window",
            sig.duration_s(),
            p.iqr_window_s
        )));
    }
    let values = sig.values();
    let mut mask = vec![false; values.len()];
    for range in window_ranges(values.len(), window) {
        let chunk = &values[range.clone()];
        let (q1, q3) = quartiles(chunk);
        let spread = p.iqr_multiplier * (q3 - q1);
        let (lo, hi) = (q1 - spread, q3 + spread);
        for (flag, &v) in mask[range].iter_mut().zip(chunk) {
            *flag = v > hi || v < lo;
        }
    }
    Ok(mask)
}

/// Fraction of all samples flagged as compromised.
pub fn flag_compromised(sig: &Signal1D, p: &QualityParams) -> Result<f64> {
    let mask = compromised_mask(sig, p)?;
    Ok(mask.iter().filter(|&&f| f).count() as f64 / mask.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSurface {
    pub is_flat: bool,
    pub flat_fraction: f64,
}

/// Flat-surface rule on the raw single-axis signal: segments whose mean
/// departs from the whole-signal mean by more than the diff threshold are
/// variation segments; too few of them means the phone is lying flat.
pub fn detect_flat_surface(raw: &Signal1D, p: &QualityParams) -> Result<FlatSurface> {
    let segment = window_samples(p.flat_segment_s, raw.sample_rate_hz());
    if raw.len() < segment {
        return Err(Error::TooShort(format!(
            "{} s signal is shorter than one {} s flat-detection segment",
            raw.duration_s(),
            p.flat_segment_s
        )));
    }
    let values = raw.values();
    let global = values.iter().sum::<f64>() / values.len() as f64;
    let ranges = window_ranges(values.len(), segment);
    let total = ranges.len();
    let variation = ranges
        .into_iter()
        .filter(|r| {
            let mean = values[r.clone()].iter().sum::<f64>() / r.len() as f64;
            (mean - global).abs() > p.flat_diff_threshold
        })
        .count();
    let variation_fraction = variation as f64 / total as f64;
    Ok(FlatSurface { is_flat: variation_fraction < p.flat_variation_fraction, flat_fraction: 1.0 - variation_fraction })
}

/// Verdict composition: NotOnChest takes precedence over SignalCompromised.
pub fn compose_verdict(is_flat: bool, compromised_fraction: f64, p: &QualityParams) -> Verdict {
    if is_flat {
        Verdict::NotOnChest
    } else if compromised_fraction > p.compromise_threshold {
        Verdict::SignalCompromised
    } else {
        Verdict::Ok
    }
}

/// Runs flat detection on `raw` and compromise detection on `cleaned`.
pub fn assess(raw: &Signal1D, cleaned: &Signal1D, p: &QualityParams) -> Result<ReliabilityReport> {
    p.validate()?;
    let tol = 1.0 / raw.sample_rate_hz().min(cleaned.sample_rate_hz());
    if (raw.t0() - cleaned.t0()).abs() > tol || (raw.duration_s() - cleaned.duration_s()).abs() > tol {
        return Err(Error::InvalidParameter(format!(
            "raw [{}, +{} s] and cleaned [{}, +{} s] signals cover different spans",
            raw.t0(),
            raw.duration_s(),
            cleaned.t0(),
            cleaned.duration_s()
        )));
    }
    let flat = detect_flat_surface(raw, p)?;
    let compromised_fraction = flag_compromised(cleaned, p)?;
    Ok(ReliabilityReport {
        compromised_fraction,
        flat_fraction: flat.flat_fraction,
        verdict: compose_verdict(flat.is_flat, compromised_fraction, p),
        params_used: *p,
    })
}
