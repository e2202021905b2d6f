//! The per-session feedback document: respiration chart data, time in the
//! 4–9 bpm zone and, when available, skill-progression labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mind::SkillPrediction;
use crate::reliability::{ReliabilityReport, Verdict};
use crate::respiration::RespirationEstimate;
use crate::session::RatePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    /// One entry per started minute; `null` before the first breath.
    pub per_minute_bpm: Vec<Option<f64>>,
    pub instantaneous: Vec<RatePoint>,
    pub zone_seconds_4_9: f64,
    pub mean_bpm: Option<f64>,
    pub min_bpm: Option<f64>,
    pub max_bpm: Option<f64>,
}

impl From<&RespirationEstimate> for RateSummary {
    fn from(e: &RespirationEstimate) -> Self {
        Self {
            per_minute_bpm: e.per_minute.clone(),
            instantaneous: e.instantaneous.entries().to_vec(),
            zone_seconds_4_9: e.zone_seconds_4_9,
            mean_bpm: e.mean_bpm,
            min_bpm: e.min_bpm,
            max_bpm: e.max_bpm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackDocument {
    pub session_id: String,
    pub verdict: Verdict,
    pub message: String,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateSummary>,
    /// Session label per skill.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skills: Option<BTreeMap<String, String>>,
    /// Per-segment probabilities and vote counts behind `skills`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_details: Option<SkillPrediction>,
    /// Effective parameter set, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

impl FeedbackDocument {
    /// A gated verdict keeps only the verdict and its message.
    pub fn new(
        session_id: &str,
        report: &ReliabilityReport,
        estimate: Option<&RespirationEstimate>,
        skills: Option<&SkillPrediction>,
    ) -> Result<Self> {
        let ok = report.verdict.is_ok();
        if ok && estimate.is_none() {
            return Err(Error::InvalidParameter("an ok verdict needs a respiration estimate".into()));
        }
        let skills = skills.filter(|_| ok);
        Ok(Self {
            session_id: session_id.to_string(),
            verdict: report.verdict,
            message: report.verdict.message().to_string(),
            rates: estimate.filter(|_| ok).map(RateSummary::from),
            skills: skills.map(|p| {
                p.skills()
                    .into_iter()
                    .map(|(name, r)| (name.to_string(), r.session_label.as_str().to_string()))
                    .collect()
            }),
            skill_details: skills.cloned(),
            params: None,
        })
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        self.params = Some(params);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn write_feedback(
    estimate: Option<&RespirationEstimate>,
    report: &ReliabilityReport,
    skills: Option<&SkillPrediction>,
    session_id: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let doc = FeedbackDocument::new(session_id, report, estimate, skills)?;
    fs::write(path, doc.to_json()? + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reliability::QualityParams;
    use crate::respiration::{estimate_session, PipelineConfig};
    use crate::synth::{generate, SynthProfile};

    fn report(verdict: Verdict) -> ReliabilityReport {
        ReliabilityReport {
            compromised_fraction: 0.0,
            flat_fraction: 0.0,
            verdict,
            params_used: QualityParams::default(),
        }
    }

    #[test]
    fn ok_ten_minutes_has_ten_minute_entries() {
        let profile = SynthProfile { duration_s: 600.0, ..SynthProfile::default() };
        let (rec, _) = generate(&profile).unwrap();
        let (rep, est) = estimate_session(&rec, &PipelineConfig::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Ok);
        let doc = FeedbackDocument::new("a", &rep, est.as_ref(), None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&doc.to_json().unwrap()).unwrap();
        assert_eq!(v["verdict"], "ok");
        assert_eq!(v["per_minute_bpm"].as_array().unwrap().len(), 10);
        assert!(v["zone_seconds_4_9"].as_f64().unwrap() > 0.0);
        assert!(v.get("skills").is_none());
    }

    #[test]
    fn gated_documents_carry_only_the_message() {
        for (verdict, msg, tag) in [
            (Verdict::SignalCompromised, "signal compromised", "signal_compromised"),
            (Verdict::NotOnChest, "phone is not on chest", "not_on_chest"),
        ] {
            let doc = FeedbackDocument::new("b", &report(verdict), None, None).unwrap();
            let v: serde_json::Value = serde_json::from_str(&doc.to_json().unwrap()).unwrap();
            assert_eq!(v["message"], msg);
            assert_eq!(v["verdict"], tag);
            let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
            assert_eq!(keys.len(), 3, "{keys:?}");
        }
    }

    #[test]
    fn ok_without_estimate_is_rejected() {
        assert!(FeedbackDocument::new("c", &report(Verdict::Ok), None, None).is_err());
    }
}
