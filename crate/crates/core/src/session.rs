//! Session recordings and rate series, with their CSV carriers.
//!
//! Session CSV layout:
//!
//! ```text
//! # session_id=s001            (optional directives, one per line)
//! # sample_rate_hz=100
//! # meta.participant=p07
//! t,x,y,z
//! 0,0.0123,-0.981,0.0456
//! 0.01,...
//! ```
//!
//! `t` is seconds from session start, `x,y,z` are in g. Lines end in LF.
//! Ground-truth rate CSV uses the header `t,rate_bpm`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal sampling rate used when a session file carries no directive.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

/// Minimum session length for respiration estimation.
pub const MIN_RESPIRATION_S: f64 = 60.0;

/// Minimum session length for mindfulness segmentation.
pub const MIN_SEGMENTATION_S: f64 = 120.0;

const SESSION_HEADER: &str = "t,x,y,z";
const RATE_HEADER: &str = "t,rate_bpm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AccelSample {
    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self { t, x, y, z }
    }

    fn is_valid(&self) -> bool {
        self.t.is_finite() && self.t >= 0.0 && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A validated, timestamped 3-axis acceleration stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecording {
    session_id: String,
    sample_rate_hz: f64,
    samples: Vec<AccelSample>,
    meta: BTreeMap<String, String>,
    irregular: bool,
}

impl SessionRecording {
    /// Builds a recording, checking sample validity and strict timestamp
    /// monotonicity. Irregular sampling is flagged, not rejected.
    pub fn new(
        session_id: impl Into<String>,
        sample_rate_hz: f64,
        samples: Vec<AccelSample>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::validation(None, format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if samples.is_empty() {
            return Err(Error::validation(None, "recording has no samples"));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.is_valid() {
                return Err(Error::validation(None, format!("sample {i} is not finite or has negative time")));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::validation(
                    None,
                    format!("timestamps not strictly increasing at sample {i} ({} after {})", s.t, samples[i - 1].t),
                ));
            }
        }
        let irregular = is_irregular(&samples, sample_rate_hz);
        Ok(Self { session_id: session_id.into(), sample_rate_hz, samples, meta, irregular })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn samples(&self) -> &[AccelSample] {
        &self.samples
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    /// True when the median inter-sample gap is more than 20% away from the
    /// nominal period.
    pub fn is_irregular(&self) -> bool {
        self.irregular
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Covered duration: first-to-last span plus one nominal period.
    pub fn duration_s(&self) -> f64 {
        let first = self.samples[0].t;
        let last = self.samples[self.samples.len() - 1].t;
        last - first + 1.0 / self.sample_rate_hz
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    /// The same session with every timestamp shifted by `delta_s`.
    pub fn shifted(&self, delta_s: f64) -> Result<Self> {
        let samples = self.samples.iter().map(|s| AccelSample::new(s.t + delta_s, s.x, s.y, s.z)).collect();
        Self::new(self.session_id.clone(), self.sample_rate_hz, samples, self.meta.clone())
    }
}

fn is_irregular(samples: &[AccelSample], sample_rate_hz: f64) -> bool {
    if samples.len() < 2 {
        return false;
    }
    let mut gaps: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let median = if gaps.len().is_multiple_of(2) { 0.5 * (gaps[mid - 1] + gaps[mid]) } else { gaps[mid] };
    let nominal = 1.0 / sample_rate_hz;
    (median - nominal).abs() > 0.2 * nominal
}

pub fn read_session(path: impl AsRef<Path>) -> Result<SessionRecording> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let default_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_session(&text, &default_id)
}

/// Parses the session CSV text. `default_id` is used when the text has no
/// `session_id` directive.
pub fn parse_session(text: &str, default_id: &str) -> Result<SessionRecording> {
    let mut session_id = default_id.to_string();
    let mut sample_rate_hz = DEFAULT_SAMPLE_RATE_HZ;
    let mut meta = BTreeMap::new();
    let mut samples = Vec::new();
    let mut seen_header = false;
    let mut last_t: Option<f64> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(directive) = line.strip_prefix('#') {
            if seen_header {
                continue;
            }
            if let Some((key, value)) = directive.trim().split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "session_id" => session_id = value.to_string(),
                    "sample_rate_hz" => {
                        sample_rate_hz = value.parse().map_err(|_| Error::Parse {
                            line: line_no,
                            message: format!("bad sample_rate_hz `{value}`"),
                        })?
                    }
                    _ => {
                        if let Some(k) = key.strip_prefix("meta.") {
                            meta.insert(k.to_string(), value.to_string());
                        }
                    }
                }
            }
            continue;
        }
        if !seen_header {
            if line.trim() != SESSION_HEADER {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected header `{SESSION_HEADER}`, found `{line}`"),
                });
            }
            seen_header = true;
            continue;
        }
        let [t, x, y, z] = parse_fields::<4>(line, line_no)?;
        let sample = AccelSample::new(t, x, y, z);
        if !sample.is_valid() {
            return Err(Error::validation(Some(line_no), "non-finite value or negative time"));
        }
        if let Some(prev) = last_t {
            if t <= prev {
                return Err(Error::validation(
                    Some(line_no),
                    format!("timestamp {t} does not increase (previous {prev})"),
                ));
            }
        }
        last_t = Some(t);
        samples.push(sample);
    }

    if samples.is_empty() {
        return Err(Error::validation(None, "session contains no samples"));
    }
    SessionRecording::new(session_id, sample_rate_hz, samples, meta)
}

fn parse_fields<const N: usize>(line: &str, line_no: u64) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    let mut fields = line.split(',');
    for (i, slot) in out.iter_mut().enumerate() {
        let field = fields
            .next()
            .ok_or_else(|| Error::Parse { line: line_no, message: format!("expected {N} fields, found {i}") })?;
        *slot = field.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("field {} is not a number: `{field}`", i + 1),
        })?;
    }
    if fields.next().is_some() {
        return Err(Error::Parse { line: line_no, message: format!("expected {N} fields, found more") });
    }
    Ok(out)
}

/// Serializes a recording. Floats use the shortest representation that
/// parses back to the same bits.
pub fn format_session(rec: &SessionRecording) -> String {
    let mut out = String::with_capacity(rec.samples.len() * 40);
    let _ = writeln!(out, "# session_id={}", rec.session_id);
    let _ = writeln!(out, "# sample_rate_hz={}", rec.sample_rate_hz);
    for (k, v) in &rec.meta {
        let _ = writeln!(out, "# meta.{k}={v}");
    }
    out.push_str(SESSION_HEADER);
    out.push('\n');
    for s in &rec.samples {
        let _ = writeln!(out, "{},{},{},{}", s.t, s.x, s.y, s.z);
    }
    out
}

pub fn write_session(rec: &SessionRecording, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_session(rec)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub t: f64,
    pub bpm: f64,
}

/// Breaths-per-minute values at strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateSeries {
    entries: Vec<RatePoint>,
}

impl RateSeries {
    pub fn new(entries: Vec<RatePoint>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !(e.t.is_finite() && e.bpm.is_finite() && e.bpm > 0.0 && e.bpm < 120.0) {
                return Err(Error::validation(
                    None,
                    format!("rate entry {i} out of range: {} bpm at t={}", e.bpm, e.t),
                ));
            }
            if i > 0 && e.t <= entries[i - 1].t {
                return Err(Error::validation(None, format!("rate timestamps not increasing at entry {i}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(t, bpm)| RatePoint { t, bpm }).collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[RatePoint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.t)
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.bpm)
    }

    /// Keeps entries whose time lies in `[start, end)`.
    pub fn between(&self, start: f64, end: f64) -> impl Iterator<Item = &RatePoint> + '_ {
        self.entries.iter().filter(move |e| e.t >= start && e.t < end)
    }
}

pub fn read_rate_series(path: impl AsRef<Path>) -> Result<RateSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rate_series(&text)
}

pub fn parse_rate_series(text: &str) -> Result<RateSeries> {
    let mut entries = Vec::new();
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line.trim() != RATE_HEADER {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected header `{RATE_HEADER}`, found `{line}`"),
                });
            }
            seen_header = true;
            continue;
        }
        let [t, bpm] = parse_fields::<2>(line, line_no)?;
        if let Some(prev) = entries.last().map(|e: &RatePoint| e.t) {
            if t <= prev {
                return Err(Error::validation(
                    Some(line_no),
                    format!("timestamp {t} does not increase (previous {prev})"),
                ));
            }
        }
        if !(bpm > 0.0 && bpm < 120.0) {
            return Err(Error::validation(Some(line_no), format!("rate {bpm} outside (0, 120)")));
        }
        entries.push(RatePoint { t, bpm });
    }
    RateSeries::new(entries)
}

pub fn format_rate_series(series: &RateSeries) -> String {
    let mut out = String::from(RATE_HEADER);
    out.push('\n');
    for e in &series.entries {
        let _ = writeln!(out, "{},{}", e.t, e.bpm);
    }
    out
}

pub fn write_rate_series(series: &RateSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_rate_series(series)).map_err(|e| Error::io(path, e))
}
