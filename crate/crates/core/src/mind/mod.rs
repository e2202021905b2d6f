//! Mindfulness-skill progression: two-minute segmentation, the ResNet-1D +
//! GRU forward pass and majority voting over segments.

pub mod bundle;
pub mod network;
pub mod spec;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bundle::{read_weights, write_weights, Tensor, WeightBundle};
pub use network::{forward, Network};
pub use spec::NetworkSpec;

use crate::error::{Error, Result};
use crate::session::{SessionRecording, MIN_SEGMENTATION_S};
use crate::signal::Axis;

/// Segment length in seconds.
pub const SEGMENT_S: f64 = MIN_SEGMENTATION_S;

/// Floor on the per-channel variance before standardizing.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Probability at or above which a segment counts as improved.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub const SKILLS: [&str; 3] = ["concentration", "sensory_clarity", "equanimity"];

/// A standardized 3-channel window, channel-major (`x` row, `y` row, `z` row).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f32>,
}

impl Segment {
    pub fn new(channels: usize, len: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::LengthMismatch(data.len(), channels * len));
        }
        Ok(Self { channels, len, data })
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    /// Zero mean and unit variance per channel. Dead channels become zeros.
    pub fn standardized(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            let row: Vec<f64> = self.channel(c).iter().map(|&v| f64::from(v)).collect();
            data.extend(standardize(&row).into_iter().map(|v| v as f32));
        }
        Self { channels: self.channels, len: self.len, data }
    }
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var < VARIANCE_FLOOR {
        return vec![0.0; values.len()];
    }
    let sd = var.sqrt();
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Non-overlapping 120 s windows of raw accelerometer data, each standardized
/// per channel. A trailing remainder shorter than one window is dropped.
pub fn segment(rec: &SessionRecording) -> Result<Vec<Segment>> {
    let len = (SEGMENT_S * rec.sample_rate_hz()).round() as usize;
    let samples = rec.samples();
    if rec.duration_s() + 1e-9 < SEGMENT_S || samples.len() < len {
        return Err(Error::TooShort(format!(
            "{:.1} s session is shorter than one {SEGMENT_S} s segment",
            rec.duration_s()
        )));
    }
    Ok(samples
        .chunks_exact(len)
        .map(|chunk| {
            let mut data = Vec::with_capacity(3 * len);
            for axis in Axis::ALL {
                let row: Vec<f64> = chunk.iter().map(|s| axis.pick(s)).collect();
                data.extend(standardize(&row).into_iter().map(|v| v as f32));
            }
            Segment { channels: 3, len, data }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionLabel {
    Improved,
    NotImproved,
}

impl SessionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionLabel::Improved => "improved",
            SessionLabel::NotImproved => "not_improved",
        }
    }
}

/// Strict majority of positive labels; a tie is not an improvement.
pub fn vote(labels: &[bool]) -> Result<SessionLabel> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("cannot vote over zero segments".into()));
    }
    let (pos, neg) = vote_counts(labels);
    Ok(if pos > neg { SessionLabel::Improved } else { SessionLabel::NotImproved })
}

fn vote_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillResult {
    pub segment_probs: Vec<f64>,
    pub segment_labels: Vec<bool>,
    pub session_label: SessionLabel,
    /// `(positive, negative)` segment counts.
    pub vote: (usize, usize),
}

impl SkillResult {
    pub fn from_probs(segment_probs: Vec<f64>) -> Result<Self> {
        let segment_labels: Vec<bool> = segment_probs.iter().map(|&p| p >= DECISION_THRESHOLD).collect();
        let session_label = vote(&segment_labels)?;
        Ok(Self { vote: vote_counts(&segment_labels), segment_probs, segment_labels, session_label })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillPrediction {
    pub concentration: SkillResult,
    pub sensory_clarity: SkillResult,
    pub equanimity: SkillResult,
}

impl SkillPrediction {
    pub fn skills(&self) -> [(&'static str, &SkillResult); 3] {
        [(SKILLS[0], &self.concentration), (SKILLS[1], &self.sensory_clarity), (SKILLS[2], &self.equanimity)]
    }
}

/// One weight bundle per skill.
#[derive(Debug, Clone)]
pub struct SkillBundles {
    pub concentration: WeightBundle,
    pub sensory_clarity: WeightBundle,
    pub equanimity: WeightBundle,
}

impl SkillBundles {
    /// Loads `concentration.bkw`, `sensory_clarity.bkw` and `equanimity.bkw`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let load = |skill: &str| read_weights(dir.join(format!("{skill}.bkw")));
        Ok(Self { concentration: load(SKILLS[0])?, sensory_clarity: load(SKILLS[1])?, equanimity: load(SKILLS[2])? })
    }

    fn as_array(&self) -> [&WeightBundle; 3] {
        [&self.concentration, &self.sensory_clarity, &self.equanimity]
    }
}

/// Improvement probability for every segment, evaluated in parallel.
pub fn segment_probabilities(spec: &NetworkSpec, bundle: &WeightBundle, segments: &[Segment]) -> Result<Vec<f64>> {
    if &bundle.spec != spec {
        return Err(Error::Bundle("bundle was built for a different network spec".into()));
    }
    let net = Network::new(bundle)?;
    segments.par_iter().map(|s| net.probability(s)).collect()
}

/// Segments the session, runs each skill network and votes per skill.
pub fn predict_session(rec: &SessionRecording, spec: &NetworkSpec, bundles: &SkillBundles) -> Result<SkillPrediction> {
    let segments = segment(rec)?;
    if segments[0].len != spec.segment_len {
        return Err(Error::InvalidParameter(format!(
            "recording yields {}-sample segments, network expects {}",
            segments[0].len, spec.segment_len
        )));
    }
    let results: Vec<SkillResult> = bundles
        .as_array()
        .par_iter()
        .map(|b| SkillResult::from_probs(segment_probabilities(spec, b, &segments)?))
        .collect::<Result<_>>()?;
    let [concentration, sensory_clarity, equanimity]: [SkillResult; 3] = results.try_into().expect("three skills");
    Ok(SkillPrediction { concentration, sensory_clarity, equanimity })
}
