//! Side-by-side comparison of the proposed estimator and the baselines on
//! synthetic corpora with known ground truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fft_rate, naive_peak_rate, zero_crossing_rate, FFT_BAND_HZ, NAIVE_PROMINENCE_G};
use crate::error::{Error, Result};
use crate::eval::{self, Pair, BANDS, DEFAULT_PAIRING_TOLERANCE_S};
use crate::reliability::{self, Verdict};
use crate::respiration::{estimate_rates, preprocess, PipelineConfig};
use crate::session::{RatePoint, RateSeries, SessionRecording};

/// Window used by the FFT and zero-crossing baselines.
pub const BASELINE_WINDOW_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Proposed,
    Fft,
    ZeroCrossing,
    NaivePeak,
}

impl Estimator {
    pub const ALL: [Estimator; 4] =
        [Estimator::Proposed, Estimator::Fft, Estimator::ZeroCrossing, Estimator::NaivePeak];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Proposed => "proposed",
            Estimator::Fft => "fft",
            Estimator::ZeroCrossing => "zero_crossing",
            Estimator::NaivePeak => "naive_peak",
        }
    }
}

/// Per-minute output of every estimator on one session, plus the verdict the
/// gate would have issued.
#[derive(Debug, Clone)]
pub struct SessionRun {
    pub session_id: String,
    pub verdict: Verdict,
    pub outputs: Vec<(Estimator, Vec<RatePoint>)>,
}

/// The proposed estimator as a per-minute series stamped at minute centers.
/// Minutes before the first breath are skipped.
pub fn proposed_per_minute(rec: &SessionRecording, cfg: &PipelineConfig) -> Result<Vec<RatePoint>> {
    let pre = preprocess(rec, cfg)?;
    per_minute_points(&pre.cleaned, rec, cfg)
}

fn per_minute_points(
    cleaned: &crate::Signal1D,
    rec: &SessionRecording,
    cfg: &PipelineConfig,
) -> Result<Vec<RatePoint>> {
    let est = estimate_rates(cleaned, rec.duration_s(), &cfg.peaks)?;
    let t0 = cleaned.t0();
    Ok(est
        .per_minute
        .iter()
        .enumerate()
        .filter_map(|(m, v)| v.map(|bpm| RatePoint { t: t0 + 60.0 * m as f64 + 30.0, bpm }))
        .collect())
}

/// Runs all four estimators on the same cleaned signal. The proposed
/// estimator runs regardless of the verdict so accuracy and gating can be
/// scored separately.
pub fn run_session(rec: &SessionRecording, cfg: &PipelineConfig) -> Result<SessionRun> {
    let pre = preprocess(rec, cfg)?;
    let report = reliability::assess(&pre.raw, &pre.cleaned, &cfg.quality)?;
    let mut outputs = Vec::with_capacity(4);
    for e in Estimator::ALL {
        let points = match e {
            Estimator::Proposed => per_minute_points(&pre.cleaned, rec, cfg)?,
            Estimator::Fft => fft_rate(&pre.cleaned, BASELINE_WINDOW_S, FFT_BAND_HZ)?,
            Estimator::ZeroCrossing => zero_crossing_rate(&pre.cleaned, BASELINE_WINDOW_S)?,
            Estimator::NaivePeak => naive_peak_rate(&pre.cleaned, NAIVE_PROMINENCE_G),
        };
        outputs.push((e, points));
    }
    Ok(SessionRun { session_id: rec.session_id().to_string(), verdict: report.verdict, outputs })
}

/// Estimate/reference pairs for one estimator across a corpus.
pub fn pooled_pairs(runs: &[(SessionRun, RateSeries)], estimator: Estimator) -> Result<Vec<Pair>> {
    let mut pairs = Vec::new();
    for (run, gt) in runs {
        let Some((_, points)) = run.outputs.iter().find(|(e, _)| *e == estimator) else {
            continue;
        };
        if points.is_empty() {
            continue;
        }
        match eval::align(gt.entries(), points, DEFAULT_PAIRING_TOLERANCE_S) {
            Ok(a) => pairs.extend(a.pairs),
            Err(Error::NoPairs) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub estimator: String,
    pub band: String,
    pub n: usize,
    pub mae: Option<f64>,
    pub pcc: Option<f64>,
}

/// MAE and PCC per estimator and ground-truth band: four estimators × three
/// bands.
pub fn bench_table(runs: &[(SessionRun, RateSeries)]) -> Result<Vec<BenchRow>> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter("corpus is empty".into()));
    }
    let mut rows = Vec::with_capacity(12);
    for e in Estimator::ALL {
        let pairs = pooled_pairs(runs, e)?;
        for (_, _, band) in BANDS {
            let in_band: Vec<Pair> = pairs.iter().copied().filter(|p| eval::band_of(p.gt) == Some(band)).collect();
            let (mae, pcc) = if in_band.is_empty() {
                (None, None)
            } else {
                let gt: Vec<f64> = in_band.iter().map(|p| p.gt).collect();
                let est: Vec<f64> = in_band.iter().map(|p| p.est).collect();
                (Some(eval::mae(&in_band)), eval::pearson(&gt, &est))
            };
            rows.push(BenchRow { estimator: e.name().to_string(), band: band.to_string(), n: in_band.len(), mae, pcc });
        }
    }
    Ok(rows)
}

/// Runs every session in parallel, keeping input order.
pub fn run_corpus(
    sessions: &[(SessionRecording, RateSeries)],
    cfg: &PipelineConfig,
) -> Result<Vec<(SessionRun, RateSeries)>> {
    sessions.par_iter().map(|(rec, gt)| Ok((run_session(rec, cfg)?, gt.clone()))).collect()
}

pub fn format_bench_csv(rows: &[BenchRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from("estimator,band,n,mae,pcc\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.estimator, r.band, r.n, opt(r.mae), opt(r.pcc)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthProfile};

    #[test]
    fn table_shape_and_empty_corpus() {
        let (rec, gt) = generate(&SynthProfile::default()).unwrap();
        let runs = run_corpus(&[(rec, gt)], &PipelineConfig::default()).unwrap();
        let rows = bench_table(&runs).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(format_bench_csv(&rows).lines().count(), 13);
        assert!(bench_table(&[]).is_err());
    }
}
