//! Digital Butterworth low-pass design (bilinear transform with frequency
//! prewarping) and zero-phase second-order-section filtering.

use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// One biquad in transposed direct form II, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Internal state reached after an infinitely long constant input of 1.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[2] * g;
        let z1 = self.b[1] - self.a[1] * g + z2;
        [z1, z2]
    }
}

/// Second-order sections of an order-`order` low-pass Butterworth filter
/// with -3 dB point `cutoff_hz`, each section normalized to unity DC gain.
pub fn lowpass_sections(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Vec<Biquad> {
    let fs2 = 2.0 * sample_rate_hz;
    let warped = fs2 * (PI * cutoff_hz / sample_rate_hz).tan();
    let bilinear = |p: Complex64| (fs2 + p) / (fs2 - p);

    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let pole = Complex64::from_polar(warped, theta);
        let z = bilinear(pole);
        let a1 = -2.0 * z.re;
        let a2 = z.norm_sqr();
        let g = (1.0 + a1 + a2) / 4.0;
        sections.push(Biquad { b: [g, 2.0 * g, g], a: [1.0, a1, a2] });
    }
    if order % 2 == 1 {
        let z = (fs2 - warped) / (fs2 + warped);
        let g = (1.0 - z) / 2.0;
        sections.push(Biquad { b: [g, g, 0.0], a: [1.0, -z, 0.0] });
    }
    sections
}

/// Runs the cascade over `data` in place, starting every section from the
/// steady state for a constant input equal to `data[0]`.
fn cascade_in_place(sections: &[Biquad], data: &mut [f64]) {
    let Some(&x0) = data.first() else { return };
    for sec in sections {
        let [s1, s2] = sec.step_state();
        let (mut z1, mut z2) = (s1 * x0, s2 * x0);
        let [b0, b1, b2] = sec.b;
        let [_, a1, a2] = sec.a;
        for v in data.iter_mut() {
            let x = *v;
            let y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// Forward-backward filtering with odd reflection padding at both ends.
/// The effective magnitude response is the single-pass response squared and
/// the phase response is zero.
pub fn filtfilt(sections: &[Biquad], input: &[f64]) -> Vec<f64> {
    let n = input.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = (3 * (2 * sections.len() + 1)).min(n - 1);
    let first = input[0];
    let last = input[n - 1];
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - input[i]));
    ext.extend_from_slice(input);
    ext.extend((1..=pad).map(|i| 2.0 * last - input[n - 1 - i]));

    cascade_in_place(sections, &mut ext);
    ext.reverse();
    cascade_in_place(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn magnitude(sections: &[Biquad], f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        sections
            .iter()
            .map(|s| ((s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (s.a[0] + s.a[1] * z1 + s.a[2] * z2)).norm())
            .product()
    }

    #[test]
    fn response_matches_prewarped_butterworth_formula() {
        let (fs, fc) = (100.0, 10.0);
        for order in 1..=6 {
            let sections = lowpass_sections(order, fc, fs);
            assert_eq!(sections.len(), order.div_ceil(2));
            for f in [0.0, 1.0, 5.0, 10.0, 20.0, 40.0] {
                let ratio = (PI * f / fs).tan() / (PI * fc / fs).tan();
                let expected = 1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt();
                let got = magnitude(&sections, f, fs);
                assert!((got - expected).abs() < 1e-9, "order {order} f {f}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn filtfilt_of_constant_is_constant() {
        let sections = lowpass_sections(4, 10.0, 100.0);
        let out = filtfilt(&sections, &[2.5; 500]);
        assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-9));
    }

    #[test]
    fn filtfilt_handles_tiny_inputs() {
        let sections = lowpass_sections(4, 10.0, 100.0);
        assert!(filtfilt(&sections, &[]).is_empty());
        assert_eq!(filtfilt(&sections, &[1.0]).len(), 1);
        assert_eq!(filtfilt(&sections, &[1.0, 2.0, 3.0]).len(), 3);
    }
}
