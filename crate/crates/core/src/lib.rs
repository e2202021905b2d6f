//! Respiration-rate estimation from chest-mounted accelerometer recordings,
//! with signal-quality gating, reference baseline estimators, agreement
//! metrics, a synthetic ground-truth generator and a ResNet-1D + GRU
//! inference engine for per-session mindfulness-skill progression.
//!
//! The respiration pipeline runs in four stages:
//!
//! 1. jitter removal (zero-phase Butterworth low-pass, then resampling to
//!    the 10 Hz working rate),
//! 2. motion-artifact removal (local mean removal and a 13-point moving
//!    average),
//! 3. reliability assessment (IQR gating and flat-surface detection),
//! 4. instantaneous rate estimation (prominence-gated peaks, 7-cycle
//!    averaging, per-minute series and time in the 4–9 bpm zone).
//!
//! [`respiration::estimate_session`] composes all four.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod mind;
pub mod reliability;
pub mod respiration;
pub mod session;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use session::{AccelSample, RateSeries, SessionRecording};
pub use signal::Signal1D;
