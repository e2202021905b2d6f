//! Deterministic generator of breathing-like accelerometer sessions with a
//! known rate profile, used as ground truth throughout the test suites.
//!
//! The chest-normal displacement signal is
//! `A·sin(2π·φ(t)) + D·sin(2π t/P + ψ) + bursts(t)`, where `φ` integrates the
//! rate profile (so ramps and steps stay phase-continuous). It is projected
//! onto the phone axes by a fixed mixing vector dominated by `breath_axis`,
//! gravity is added as a constant, and independent white jitter goes on every
//! axis. Motion bursts are biphasic square-ish pulses at Poisson-scheduled
//! times.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{self, AccelSample, RatePoint, RateSeries, SessionRecording};
use crate::signal::Axis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateProfile {
    Constant {
        bpm: f64,
    },
    /// Piecewise constant: each `(start_s, bpm)` holds until the next start.
    /// The first start must be 0.
    Steps {
        steps: Vec<(f64, f64)>,
    },
    /// Linear ramp from `start_bpm` at t=0 to `end_bpm` at the session end.
    Ramp {
        start_bpm: f64,
        end_bpm: f64,
    },
}

impl RateProfile {
    fn validate(&self) -> Result<()> {
        let ok = |b: f64| (3.0..=35.0).contains(&b);
        let valid = match self {
            RateProfile::Constant { bpm } => ok(*bpm),
            RateProfile::Ramp { start_bpm, end_bpm } => ok(*start_bpm) && ok(*end_bpm),
            RateProfile::Steps { steps } => {
                !steps.is_empty()
                    && steps[0].0 == 0.0
                    && steps.windows(2).all(|w| w[1].0 > w[0].0)
                    && steps.iter().all(|&(_, b)| ok(b))
            }
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("rate profile {self:?} must stay within [3, 35] bpm")))
        }
    }

    /// Rate in bpm at time `t` of a session lasting `duration_s`.
    pub fn bpm_at(&self, t: f64, duration_s: f64) -> f64 {
        match self {
            RateProfile::Constant { bpm } => *bpm,
            RateProfile::Ramp { start_bpm, end_bpm } => start_bpm + (end_bpm - start_bpm) * (t / duration_s),
            RateProfile::Steps { steps } => {
                let idx = steps.partition_point(|&(s, _)| s <= t);
                steps[idx.saturating_sub(1)].1
            }
        }
    }

    /// Breathing cycles completed by time `t` (closed-form integral of
    /// rate/60).
    pub fn cycles_at(&self, t: f64, duration_s: f64) -> f64 {
        match self {
            RateProfile::Constant { bpm } => bpm * t / 60.0,
            RateProfile::Ramp { start_bpm, end_bpm } => {
                (start_bpm * t + (end_bpm - start_bpm) * t * t / (2.0 * duration_s)) / 60.0
            }
            RateProfile::Steps { steps } => {
                let mut cycles = 0.0;
                for (i, &(start, bpm)) in steps.iter().enumerate() {
                    if start >= t {
                        break;
                    }
                    let end = steps.get(i + 1).map_or(t, |s| s.0.min(t));
                    cycles += bpm * (end - start) / 60.0;
                }
                cycles
            }
        }
    }

    /// Mean rate over `[0, duration_s]`.
    pub fn mean_bpm(&self, duration_s: f64) -> f64 {
        60.0 * self.cycles_at(duration_s, duration_s) / duration_s
    }
}

/// When bursts start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstSchedule {
    /// Exponential gaps; bursts cluster and may overlap.
    #[default]
    Poisson,
    /// Evenly spaced from a random phase, so coverage is
    /// `rate · duration / 60` exactly when bursts do not overlap.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactParams {
    pub burst_rate_per_min: f64,
    pub burst_amplitude_g: f64,
    pub burst_duration_s: f64,
    pub schedule: BurstSchedule,
}

impl Default for ArtifactParams {
    fn default() -> Self {
        Self {
            burst_rate_per_min: 0.0,
            burst_amplitude_g: 0.2,
            burst_duration_s: 1.0,
            schedule: BurstSchedule::Poisson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthProfile {
    pub id: String,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub rate_profile: RateProfile,
    pub breath_amplitude_g: f64,
    pub jitter_rms_g: f64,
    pub artifact: ArtifactParams,
    pub drift_amplitude_g: f64,
    pub drift_period_s: f64,
    pub drift_phase_rad: f64,
    pub breath_axis: Axis,
    pub flat_decoy: bool,
    pub seed: u64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            id: "synth".into(),
            duration_s: 300.0,
            sample_rate_hz: 100.0,
            rate_profile: RateProfile::Constant { bpm: 6.0 },
            breath_amplitude_g: 0.02,
            jitter_rms_g: 0.005,
            artifact: ArtifactParams::default(),
            drift_amplitude_g: 0.03,
            drift_period_s: 240.0,
            drift_phase_rad: 1.0,
            breath_axis: Axis::Z,
            flat_decoy: false,
            seed: 0,
        }
    }
}

impl SynthProfile {
    /// A noise-free constant-rate profile: no jitter, bursts or drift.
    pub fn clean(bpm: f64, duration_s: f64) -> Self {
        Self {
            duration_s,
            rate_profile: RateProfile::Constant { bpm },
            jitter_rms_g: 0.0,
            drift_amplitude_g: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s >= 60.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration must be at least 60 s, got {}", self.duration_s)));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        let non_negative = [
            self.breath_amplitude_g,
            self.jitter_rms_g,
            self.drift_amplitude_g,
            self.artifact.burst_rate_per_min,
            self.artifact.burst_amplitude_g,
            self.artifact.burst_duration_s,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("amplitudes, rates and durations must be non-negative".into()));
        }
        if self.drift_period_s.is_nan() || self.drift_period_s <= 0.0 {
            return Err(Error::InvalidParameter("drift period must be positive".into()));
        }
        self.rate_profile.validate()
    }

    fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }
}

/// Unit mixing vector from chest-normal motion to phone axes.
fn mixing(breath_axis: Axis) -> [f64; 3] {
    let (major, a, b): (f64, f64, f64) = (0.95, 0.25, 0.15);
    let norm = (major * major + a * a + b * b).sqrt();
    let mut v = [0.0; 3];
    let i = breath_axis.index();
    v[i] = major / norm;
    v[(i + 1) % 3] = a / norm;
    v[(i + 2) % 3] = b / norm;
    v
}

const GRAVITY: [f64; 3] = [0.08, -0.2, 0.976];

/// Burst start times over `[0, duration_s)`.
fn burst_starts(rng: &mut ChaCha8Rng, per_min: f64, duration_s: f64, schedule: BurstSchedule) -> Vec<f64> {
    if per_min <= 0.0 {
        return Vec::new();
    }
    if schedule == BurstSchedule::Periodic {
        let period = 60.0 / per_min;
        let mut t = rng.random::<f64>() * period;
        let mut out = Vec::new();
        while t < duration_s {
            out.push(t);
            t += period;
        }
        return out;
    }
    let gaps = Exp::new(per_min / 60.0).expect("positive rate");
    let mut out = Vec::new();
    let mut t = gaps.sample(rng);
    while t < duration_s {
        out.push(t);
        t += gaps.sample(rng);
    }
    out
}

/// Square pulse with short raised-cosine edges.
fn burst_shape(dt: f64, duration: f64) -> f64 {
    if dt < 0.0 || dt > duration {
        return 0.0;
    }
    let edge = (0.1 * duration).min(0.1);
    if edge <= 0.0 {
        return 1.0;
    }
    let ramp = |x: f64| 0.5 - 0.5 * (PI * x / edge).cos();
    if dt < edge {
        ramp(dt)
    } else if dt > duration - edge {
        ramp(duration - dt)
    } else {
        1.0
    }
}

/// Biphasic pulse: a push then an equal pull, as the acceleration of a
/// movement that starts and ends at rest integrates to zero.
fn biphasic_shape(dt: f64, duration: f64) -> f64 {
    let half = 0.5 * duration;
    if dt < half {
        burst_shape(dt, half)
    } else {
        -burst_shape(dt - half, half)
    }
}

/// A generated session with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub recording: SessionRecording,
    pub ground_truth: RateSeries,
    /// Fraction of samples touched by at least one burst.
    pub burst_coverage: f64,
}

/// Generates the recording and its exact ground-truth rate series (one entry
/// per whole second).
pub fn generate(p: &SynthProfile) -> Result<(SessionRecording, RateSeries)> {
    let out = generate_detailed(p)?;
    Ok((out.recording, out.ground_truth))
}

pub fn generate_detailed(p: &SynthProfile) -> Result<SynthOutput> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = p.n_samples();
    let fs = p.sample_rate_hz;

    let bursts: Vec<(f64, f64)> = if p.flat_decoy {
        // Occasional sharp knocks on the table.
        let per_min = if p.artifact.burst_rate_per_min > 0.0 { p.artifact.burst_rate_per_min } else { 0.5 };
        burst_starts(&mut rng, per_min, p.duration_s, BurstSchedule::Poisson)
            .into_iter()
            .map(|t| (t, if rng.random::<bool>() { 1.0 } else { -1.0 }))
            .collect()
    } else {
        burst_starts(&mut rng, p.artifact.burst_rate_per_min, p.duration_s, p.artifact.schedule)
            .into_iter()
            .map(|t| (t, if rng.random::<bool>() { 1.0 } else { -1.0 }))
            .collect()
    };
    let jitter =
        if p.jitter_rms_g > 0.0 { Some(Normal::new(0.0, p.jitter_rms_g).expect("finite sigma")) } else { None };
    let mix = mixing(p.breath_axis);
    let (burst_amp, burst_len) = if p.flat_decoy {
        (p.artifact.burst_amplitude_g.max(0.3), 0.05)
    } else {
        (p.artifact.burst_amplitude_g, p.artifact.burst_duration_s)
    };

    let mut samples = Vec::with_capacity(n);
    let mut next_burst = 0usize;
    let mut covered = 0usize;
    for i in 0..n {
        let t = i as f64 / fs;
        let mut motion = 0.0;
        if !p.flat_decoy {
            let phase = p.rate_profile.cycles_at(t, p.duration_s);
            motion += p.breath_amplitude_g * (2.0 * PI * phase).sin();
            motion += p.drift_amplitude_g * (2.0 * PI * t / p.drift_period_s + p.drift_phase_rad).sin();
        }
        while next_burst < bursts.len() && bursts[next_burst].0 + burst_len < t {
            next_burst += 1;
        }
        let mut touched = false;
        for &(start, sign) in bursts[next_burst..].iter().take_while(|b| b.0 <= t) {
            if t - start <= burst_len {
                touched = true;
                let shape =
                    if p.flat_decoy { burst_shape(t - start, burst_len) } else { biphasic_shape(t - start, burst_len) };
                motion += sign * burst_amp * shape;
            }
        }
        covered += usize::from(touched);
        let mut axes = [0.0; 3];
        for k in 0..3 {
            let noise = jitter.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            let mixed = if p.flat_decoy { 0.0 } else { mix[k] * motion };
            let spike = if p.flat_decoy {
                if k == 2 {
                    motion
                } else {
                    0.0
                }
            } else {
                0.0
            };
            axes[k] = GRAVITY[k] + mixed + spike + noise;
        }
        samples.push(AccelSample::new(t, axes[0], axes[1], axes[2]));
    }
    let mut meta = BTreeMap::new();
    meta.insert("generator".to_string(), "synth".to_string());
    meta.insert("seed".to_string(), p.seed.to_string());
    let rec = SessionRecording::new(p.id.clone(), fs, samples, meta)?;

    let seconds = p.duration_s.floor() as usize;
    let gt = RateSeries::new(
        (0..seconds).map(|s| RatePoint { t: s as f64, bpm: p.rate_profile.bpm_at(s as f64, p.duration_s) }).collect(),
    )?;
    Ok(SynthOutput { recording: rec, ground_truth: gt, burst_coverage: covered as f64 / n as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub session_id: String,
    pub session_file: String,
    pub ground_truth_file: String,
    pub profile: SynthProfile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sessions: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn profiles(&self) -> Vec<SynthProfile> {
        self.sessions.iter().map(|e| e.profile.clone()).collect()
    }

    pub fn session_path(&self, dir: &Path, i: usize) -> PathBuf {
        dir.join(&self.sessions[i].session_file)
    }

    pub fn ground_truth_path(&self, dir: &Path, i: usize) -> PathBuf {
        dir.join(&self.sessions[i].ground_truth_file)
    }
}

/// Writes `<id>.csv`, `<id>_gt.csv` per profile and `manifest.json`.
/// Profile ids must be unique.
pub fn generate_corpus(profiles: &[SynthProfile], out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let mut seen = std::collections::BTreeSet::new();
    for p in profiles {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::InvalidParameter(format!("duplicate profile id `{}`", p.id)));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let sessions = profiles
        .par_iter()
        .map(|p| {
            let (rec, gt) = generate(p)?;
            let session_file = format!("{}.csv", p.id);
            let ground_truth_file = format!("{}_gt.csv", p.id);
            session::write_session(&rec, out_dir.join(&session_file))?;
            session::write_rate_series(&gt, out_dir.join(&ground_truth_file))?;
            Ok(ManifestEntry { session_id: p.id.clone(), session_file, ground_truth_file, profile: p.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { sessions };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Clean constant-rate sessions at every integer rate 4..=30 bpm, 5 min each.
/// Posture drift is kept so the sessions read as on-chest.
pub fn rate_sweep_corpus() -> Vec<SynthProfile> {
    (4..=30)
        .map(|bpm| SynthProfile {
            id: format!("sweep-{bpm:02}bpm"),
            rate_profile: RateProfile::Constant { bpm: bpm as f64 },
            jitter_rms_g: 0.0,
            seed: 1000 + bpm as u64,
            ..SynthProfile::default()
        })
        .collect()
}

/// Jitter at 25% of the breath amplitude and two 10×-amplitude bursts per
/// minute, at every integer rate 4..=30 bpm (the sweep rates).
pub fn noisy_corpus() -> Vec<SynthProfile> {
    (4..=30)
        .map(|bpm| {
            let base = SynthProfile::default();
            SynthProfile {
                id: format!("noisy-{bpm:02}bpm"),
                rate_profile: RateProfile::Constant { bpm: bpm as f64 },
                jitter_rms_g: 0.25 * base.breath_amplitude_g,
                artifact: ArtifactParams {
                    burst_rate_per_min: 2.0,
                    burst_amplitude_g: 10.0 * base.breath_amplitude_g,
                    burst_duration_s: 1.0,
                    schedule: BurstSchedule::Poisson,
                },
                seed: 2000 + bpm as u64,
                ..base
            }
        })
        .collect()
}

/// Phone-on-table decoys.
pub fn flat_decoy_corpus(n: usize) -> Vec<SynthProfile> {
    (0..n)
        .map(|i| SynthProfile {
            id: format!("decoy-{i:02}"),
            flat_decoy: true,
            seed: 3000 + i as u64,
            ..SynthProfile::default()
        })
        .collect()
}

/// Genuine on-chest sessions with varied rates, noise and drift phase.
pub fn genuine_corpus(n: usize) -> Vec<SynthProfile> {
    (0..n)
        .map(|i| SynthProfile {
            id: format!("genuine-{i:02}"),
            rate_profile: RateProfile::Constant { bpm: 4.0 + (i * 13 % 27) as f64 },
            jitter_rms_g: 0.002 + 0.0005 * (i % 5) as f64,
            drift_phase_rad: 0.3 * i as f64,
            seed: 4000 + i as u64,
            ..SynthProfile::default()
        })
        .collect()
}

/// Two-minute session with a label, for classifier fixtures.
#[derive(Debug, Clone)]
pub struct LabeledSegment {
    pub recording: SessionRecording,
    pub label: bool,
    pub profile: SynthProfile,
}

impl LabeledSegment {
    pub fn mean_bpm(&self) -> f64 {
        self.profile.rate_profile.mean_bpm(self.profile.duration_s)
    }
}

/// Class 1 draws slow, steady profiles (5–8 bpm); class 0 moves towards fast,
/// erratic ones (12–20 bpm) as `separation` goes from 0 to 1. At separation 0
/// both classes share one distribution.
pub fn make_labeled_segments(n_per_class: usize, separation: f64, seed: u64) -> Result<Vec<LabeledSegment>> {
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("need at least one segment per class".into()));
    }
    let s = separation.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = 120.0;
    let step_s = 20.0;
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let label = i % 2 == 0;
        let (center, half_width, wobble) =
            if label { (6.5, 1.5, 0.3) } else { (6.5 + s * 9.5, 1.5 + s * 2.5, 0.3 + s * 1.7) };
        let base = center + half_width * (2.0 * rng.random::<f64>() - 1.0);
        let wobble_dist = Normal::new(0.0, wobble).expect("finite sigma");
        let steps = (0..(duration / step_s) as usize)
            .map(|k| (k as f64 * step_s, (base + wobble_dist.sample(&mut rng)).clamp(3.0, 35.0)))
            .collect();
        let profile = SynthProfile {
            id: format!("seg-{i:04}"),
            duration_s: duration,
            rate_profile: RateProfile::Steps { steps },
            drift_phase_rad: rng.random::<f64>() * 2.0 * PI,
            seed: rng.random(),
            ..SynthProfile::default()
        };
        let (recording, _) = generate(&profile)?;
        out.push(LabeledSegment { recording, label, profile });
    }
    Ok(out)
}
