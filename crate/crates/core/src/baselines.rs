//! Reference estimators: FFT dominant frequency, zero-crossing rate and a
//! naive fixed-prominence peak counter. They run on the same cleaned signal
//! as the proposed pipeline. Their outputs are plain rate points rather than
//! [`RateSeries`](crate::session::RateSeries) because a baseline may
//! legitimately report 0 bpm.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::respiration::{local_maxima, prominences};
use crate::session::RatePoint;
use crate::signal::Signal1D;

/// Frequency band searched by [`fft_rate`], tuned for natural breathing.
pub const FFT_BAND_HZ: (f64, f64) = (0.13, 0.66);

/// Fixed absolute prominence (g) used by [`naive_peak_rate`].
pub const NAIVE_PROMINENCE_G: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftWindowRate {
    /// Window center.
    pub t: f64,
    pub bpm: f64,
    /// Peak in-band magnitude over the median in-band magnitude.
    pub peak_ratio: f64,
    pub low_confidence: bool,
}

fn to_points(points: impl IntoIterator<Item = (f64, f64)>) -> Vec<RatePoint> {
    points.into_iter().map(|(t, bpm)| RatePoint { t, bpm }).collect()
}

/// Dominant in-band frequency per sliding window (50% overlap), without
/// zero padding, so the resolution is one bin of `1/window_s` Hz.
pub fn fft_windows(sig: &Signal1D, window_s: f64, band_hz: (f64, f64)) -> Result<Vec<FftWindowRate>> {
    if window_s < 30.0 {
        return Err(Error::InvalidParameter(format!("FFT window must be at least 30 s, got {window_s}")));
    }
    let fs = sig.sample_rate_hz();
    let n = (window_s * fs).round() as usize;
    if n > sig.len() {
        return Err(Error::TooShort(format!("{window_s} s window is longer than the signal")));
    }
    let hop = (n / 2).max(1);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let bin_hz = fs / n as f64;
    let lo = (band_hz.0 / bin_hz - 1e-9).ceil() as usize;
    let hi = ((band_hz.1 / bin_hz + 1e-9).floor() as usize).min(n / 2);
    if lo > hi {
        return Err(Error::InvalidParameter("FFT band contains no bins".into()));
    }

    let values = sig.values();
    let mut out = Vec::new();
    let mut start = 0;
    while start + n <= values.len() {
        let chunk = &values[start..start + n];
        let mean = chunk.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex64> = chunk.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
        fft.process(&mut buf);
        let mags: Vec<f64> = buf[lo..=hi].iter().map(|c| c.norm()).collect();
        let (best, peak) =
            mags.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        let mut sorted = mags.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let peak_ratio = if median > 0.0 { peak / median } else { f64::INFINITY };
        out.push(FftWindowRate {
            t: sig.time_at(start) + window_s / 2.0,
            bpm: 60.0 * (lo + best) as f64 * bin_hz,
            peak_ratio,
            low_confidence: peak_ratio < 2.0,
        });
        start += hop;
    }
    Ok(out)
}

pub fn fft_rate(sig: &Signal1D, window_s: f64, band_hz: (f64, f64)) -> Result<Vec<RatePoint>> {
    Ok(to_points(fft_windows(sig, window_s, band_hz)?.into_iter().map(|w| (w.t, w.bpm))))
}

/// Upward zero crossings per non-overlapping window, scaled to per minute.
/// A trailing partial window is ignored.
pub fn zero_crossing_rate(sig: &Signal1D, window_s: f64) -> Result<Vec<RatePoint>> {
    if window_s.is_nan() || window_s <= 0.0 {
        return Err(Error::InvalidParameter(format!("window must be positive, got {window_s}")));
    }
    let n = (window_s * sig.sample_rate_hz()).round() as usize;
    let values = sig.values();
    let points = (0..values.len() / n.max(1)).map(|w| {
        let ups = (w * n..(w + 1) * n).filter(|&j| j > 0 && values[j - 1] < 0.0 && values[j] >= 0.0).count();
        let bpm = 60.0 * ups as f64 / window_s;
        (sig.time_at(w * n) + window_s / 2.0, bpm)
    });
    Ok(to_points(points))
}

/// Count of local maxima with prominence at least `min_prominence` in each
/// whole minute: no adaptive threshold, spacing rule or smoothing.
pub fn naive_peak_rate(sig: &Signal1D, min_prominence: f64) -> Vec<RatePoint> {
    let values = sig.values();
    let maxima = local_maxima(values);
    let proms = prominences(values, &maxima);
    let minute = (60.0 * sig.sample_rate_hz()).round() as usize;
    let minutes = values.len() / minute.max(1);
    let mut counts = vec![0usize; minutes];
    for (&i, &p) in maxima.iter().zip(&proms) {
        if p >= min_prominence && i / minute < minutes {
            counts[i / minute] += 1;
        }
    }
    to_points(counts.into_iter().enumerate().map(|(m, c)| (sig.time_at(m * minute) + 30.0, c as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(bpm: f64, secs: f64, amp: f64) -> Signal1D {
        Signal1D::from_fn(10.0, (secs * 10.0) as usize, 0.0, |t| amp * (2.0 * PI * bpm / 60.0 * t).sin()).unwrap()
    }

    #[test]
    fn fft_finds_fifteen_bpm() {
        let r = fft_rate(&sine(15.0, 300.0, 0.02), 60.0, FFT_BAND_HZ).unwrap();
        assert_eq!(r.len(), 9);
        assert!(r.iter().all(|p| (p.bpm - 15.0).abs() <= 1.0));
    }

    #[test]
    fn fft_cannot_see_below_band_floor() {
        // Bins are 1/60 Hz = 1 bpm wide; the first in-band bin is ceil(0.13·60) = 8.
        let r = fft_rate(&sine(6.0, 300.0, 0.02), 60.0, FFT_BAND_HZ).unwrap();
        for p in &r {
            assert!(p.bpm >= 7.8);
            assert!(p.bpm - 6.0 >= 1.8);
        }
    }

    #[test]
    fn fft_flags_noise_as_low_confidence() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let d = Normal::new(0.0, 1.0).unwrap();
        let noise = Signal1D::new(10.0, (0..3000).map(|_| d.sample(&mut rng)).collect(), 0.0).unwrap();
        let w = fft_windows(&noise, 60.0, FFT_BAND_HZ).unwrap();
        assert!(w.iter().any(|x| x.low_confidence));
        for x in &w {
            assert!(x.bpm >= 7.8 && x.bpm <= 39.6);
            assert_eq!(x.low_confidence, x.peak_ratio < 2.0);
        }
        let clean = fft_windows(&sine(15.0, 300.0, 0.02), 60.0, FFT_BAND_HZ).unwrap();
        assert!(clean.iter().all(|x| !x.low_confidence));
        let mean_ratio = |v: &[FftWindowRate]| v.iter().map(|x| x.peak_ratio).sum::<f64>() / v.len() as f64;
        assert!(mean_ratio(&clean) > 10.0 * mean_ratio(&w));
    }

    #[test]
    fn fft_rejects_bad_windows() {
        let s = sine(15.0, 50.0, 1.0);
        assert!(fft_rate(&s, 20.0, FFT_BAND_HZ).is_err());
        assert!(fft_rate(&s, 60.0, FFT_BAND_HZ).is_err());
    }

    #[test]
    fn zcr_examples() {
        let offset =
            |bpm: f64| Signal1D::from_fn(10.0, 3000, 0.0, move |t| (2.0 * PI * bpm / 60.0 * t + 0.5).sin()).unwrap();
        let r = zero_crossing_rate(&offset(6.0), 60.0).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|p| p.bpm == 6.0));

        // Three short positive blips on each negative half-cycle: four upward
        // crossings per 10 s breath, i.e. 24 per minute.
        let values = (0..3000)
            .map(|i| {
                let k = (i + 37) % 100;
                let breath = (2.0 * PI * k as f64 / 100.0).sin();
                if (60..65).contains(&k) || (70..75).contains(&k) || (80..85).contains(&k) {
                    0.2
                } else {
                    breath
                }
            })
            .collect();
        let sig = Signal1D::new(10.0, values, 0.0).unwrap();
        let r = zero_crossing_rate(&sig, 60.0).unwrap();
        assert!(r.iter().all(|p| p.bpm == 24.0), "{r:?}");

        let c = Signal1D::new(10.0, vec![0.3; 3000], 0.0).unwrap();
        let r = zero_crossing_rate(&c, 60.0).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|p| p.bpm == 0.0));
    }

    #[test]
    fn naive_peak_examples() {
        let r = naive_peak_rate(&sine(6.0, 300.0, 0.02), NAIVE_PROMINENCE_G);
        assert!(r.iter().all(|p| p.bpm == 6.0));
        assert_eq!(r.len(), 5);
        let weak = sine(6.0, 300.0, 0.1 * NAIVE_PROMINENCE_G / 2.0);
        assert!(naive_peak_rate(&weak, NAIVE_PROMINENCE_G).iter().all(|p| p.bpm == 0.0));
    }
}
