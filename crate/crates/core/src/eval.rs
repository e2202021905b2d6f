//! Agreement metrics between estimated and reference rate series (MAE,
//! Pearson correlation, Bland–Altman limits of agreement, per-band error)
//! and binary classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::RatePoint;

pub const DEFAULT_PAIRING_TOLERANCE_S: f64 = 5.0;

/// Ground-truth bands used for the per-band breakdown, in bpm. The first is
/// closed, the others open on the left.
pub const BANDS: [(f64, f64, &str); 3] = [(4.0, 9.0, "4-9"), (9.0, 15.0, "9-15"), (15.0, 30.0, "15-30")];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub t: f64,
    pub gt: f64,
    pub est: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<Pair>,
    pub unpaired: usize,
}

/// Pairs each estimate with the nearest-in-time ground-truth entry within
/// `tolerance_s`. Estimates without a partner are dropped and counted.
///
/// `gt` must be sorted by time.
pub fn align(gt: &[RatePoint], est: &[RatePoint], tolerance_s: f64) -> Result<Alignment> {
    if gt.is_empty() || est.is_empty() {
        return Err(Error::NoPairs);
    }
    let g = gt;
    let mut out = Alignment::default();
    for e in est {
        let idx = g.partition_point(|x| x.t < e.t);
        let nearest = [idx.checked_sub(1), (idx < g.len()).then_some(idx)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (g[a].t - e.t).abs().total_cmp(&(g[b].t - e.t).abs()));
        match nearest {
            Some(i) if (g[i].t - e.t).abs() <= tolerance_s => out.pairs.push(Pair { t: e.t, gt: g[i].bpm, est: e.bpm }),
            _ => out.unpaired += 1,
        }
    }
    if out.pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub mae: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub mae: f64,
    pub pcc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pcc_absent_reason: Option<String>,
    pub bland_altman: BlandAltman,
    pub n: usize,
    pub per_band: Vec<(String, BandStats)>,
}

pub fn mae(pairs: &[Pair]) -> f64 {
    pairs.iter().map(|p| (p.gt - p.est).abs()).sum::<f64>() / pairs.len() as f64
}

fn mean(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    v.sum::<f64>() / n
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ma = mean(a.iter().copied());
    let mb = mean(b.iter().copied());
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Differences are `est - gt`; limits use the sample standard deviation.
pub fn bland_altman(pairs: &[Pair]) -> BlandAltman {
    let diffs: Vec<f64> = pairs.iter().map(|p| p.est - p.gt).collect();
    let m = mean(diffs.iter().copied());
    let sd = if diffs.len() > 1 {
        (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    BlandAltman { mean_diff: m, sd_diff: sd, loa_low: m - 1.96 * sd, loa_high: m + 1.96 * sd }
}

/// `(mean, difference)` points for external Bland–Altman plotting.
pub fn bland_altman_points(pairs: &[Pair]) -> Vec<(f64, f64)> {
    pairs.iter().map(|p| (0.5 * (p.gt + p.est), p.est - p.gt)).collect()
}

pub fn band_of(gt_bpm: f64) -> Option<&'static str> {
    BANDS.iter().enumerate().find_map(|(i, &(lo, hi, name))| {
        let above = if i == 0 { gt_bpm >= lo } else { gt_bpm > lo };
        (above && gt_bpm <= hi).then_some(name)
    })
}

pub fn agreement(pairs: &[Pair]) -> Result<AgreementReport> {
    if pairs.len() < 2 {
        return Err(Error::InvalidParameter(format!("agreement needs at least 2 pairs, got {}", pairs.len())));
    }
    let gt: Vec<f64> = pairs.iter().map(|p| p.gt).collect();
    let est: Vec<f64> = pairs.iter().map(|p| p.est).collect();
    let pcc = pearson(&gt, &est);
    let per_band = BANDS
        .iter()
        .map(|&(_, _, name)| {
            let members: Vec<Pair> = pairs.iter().copied().filter(|p| band_of(p.gt) == Some(name)).collect();
            let stats = BandStats { mae: (!members.is_empty()).then(|| mae(&members)), n: members.len() };
            (name.to_string(), stats)
        })
        .collect();
    Ok(AgreementReport {
        mae: mae(pairs),
        pcc,
        pcc_absent_reason: pcc.is_none().then(|| "one of the series is constant".to_string()),
        bland_altman: bland_altman(pairs),
        n: pairs.len(),
        per_band,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    #[serde(flatten)]
    pub counts: BinaryCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl ClassificationMetrics {
    pub fn from_counts(counts: BinaryCounts) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self { counts, precision, recall, f1 }
    }
}

/// Precision, recall and F1 for binary labels.
pub fn classification_metrics(gt: &[bool], pred: &[bool]) -> Result<ClassificationMetrics> {
    if gt.len() != pred.len() {
        return Err(Error::LengthMismatch(gt.len(), pred.len()));
    }
    let mut c = BinaryCounts { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for (&g, &p) in gt.iter().zip(pred) {
        match (g, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(ClassificationMetrics::from_counts(c))
}

/// Per-skill classification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub skills: Vec<(String, ClassificationMetrics)>,
}
