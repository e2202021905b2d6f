//! `slowbreath`: batch respiration-rate estimation, evaluation,
//! benchmarking, synthetic corpora and skill classification.
//!
//! Exit codes: 0 success, 2 session gated by the reliability check, 1 error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use slowbreath::bench::{bench_table, format_bench_csv, run_corpus};
use slowbreath::eval::{self, AgreementReport, DEFAULT_PAIRING_TOLERANCE_S};
use slowbreath::feedback::FeedbackDocument;
use slowbreath::mind::{predict_session, read_weights, NetworkSpec, SkillBundles};
use slowbreath::reliability::QualityParams;
use slowbreath::respiration::{estimate_session, PeakParams, PipelineConfig};
use slowbreath::session::{read_rate_series, read_session, RatePoint};
use slowbreath::signal::AxisPolicy;
use slowbreath::synth::{self, Manifest, RateProfile, SynthProfile};

const WEIGHTS_ENV: &str = "SLOWBREATH_WEIGHTS_DIR";

#[derive(Parser)]
#[command(name = "slowbreath", version, about = "Slow-paced respiration rate estimation from chest accelerometry")]
struct Cli {
    /// Worker threads for corpus-level commands (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate respiration from a session CSV and write the feedback JSON.
    Process(ProcessArgs),
    /// Score estimates against a ground-truth rate series.
    Evaluate(EvaluateArgs),
    /// Compare the pipeline with the baselines on a synthetic corpus.
    Bench(BenchArgs),
    /// Write a synthetic corpus with ground truth and a manifest.
    Synth(SynthArgs),
    /// Predict skill progression and merge it into the feedback JSON.
    Classify(ClassifyArgs),
}

#[derive(Args, Clone)]
struct PipelineFlags {
    /// Axis policy.
    #[arg(long, value_enum, default_value_t = AxisFlag::MaxVariance)]
    axis: AxisFlag,
    #[arg(long, default_value_t = 20.0)]
    iqr_window_s: f64,
    #[arg(long, default_value_t = 0.8)]
    iqr_multiplier: f64,
    #[arg(long, default_value_t = 0.25)]
    compromise_threshold: f64,
    #[arg(long, default_value_t = 30.0)]
    flat_segment_s: f64,
    #[arg(long, default_value_t = 0.02)]
    flat_diff_threshold: f64,
    #[arg(long, default_value_t = 0.30)]
    flat_variation_fraction: f64,
    #[arg(long, default_value_t = 2.0)]
    min_spacing_s: f64,
    #[arg(long, default_value_t = 0.5)]
    prominence_fraction: f64,
    #[arg(long, default_value_t = 7)]
    averaging_cycles: usize,
    #[arg(long, default_value_t = 4.0)]
    min_bpm: f64,
    #[arg(long, default_value_t = 30.0)]
    max_bpm: f64,
    /// Embed the effective parameter set in the output.
    #[arg(long)]
    params_json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisFlag {
    MaxVariance,
    Z,
}

impl PipelineFlags {
    fn config(&self) -> Result<PipelineConfig> {
        let quality = QualityParams {
            iqr_window_s: self.iqr_window_s,
            iqr_multiplier: self.iqr_multiplier,
            compromise_threshold: self.compromise_threshold,
            flat_segment_s: self.flat_segment_s,
            flat_diff_threshold: self.flat_diff_threshold,
            flat_variation_fraction: self.flat_variation_fraction,
        };
        quality.validate()?;
        let peaks = PeakParams {
            min_spacing_s: self.min_spacing_s,
            prominence_fraction: self.prominence_fraction,
            averaging_cycles: self.averaging_cycles,
            rate_band_bpm: (self.min_bpm, self.max_bpm),
        };
        peaks.validate()?;
        Ok(PipelineConfig {
            axis: match self.axis {
                AxisFlag::MaxVariance => AxisPolicy::MaxVariance,
                AxisFlag::Z => AxisPolicy::FixedZ,
            },
            quality,
            peaks,
            ..PipelineConfig::default()
        })
    }
}

#[derive(Args)]
struct ProcessArgs {
    session: PathBuf,
    /// Output path (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeriesFlag {
    /// The smoothed breath-by-breath series.
    Instantaneous,
    /// One value per minute, stamped at the minute center.
    PerMinute,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth CSV (`t,rate_bpm`), or a directory of `<id>_gt.csv`.
    #[arg(long)]
    gt: PathBuf,
    /// Feedback JSON or `t,rate_bpm` CSV, or a directory of `<id>.json`.
    #[arg(long)]
    est: PathBuf,
    /// Which series of a feedback JSON to score.
    #[arg(long, value_enum, default_value_t = SeriesFlag::PerMinute)]
    series: SeriesFlag,
    #[arg(long, default_value_t = DEFAULT_PAIRING_TOLERANCE_S)]
    tolerance_s: f64,
    /// Report JSON path (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-band CSV table.
    #[arg(long)]
    bands_csv: Option<PathBuf>,
    /// Dump Bland–Altman (mean, diff) pairs as CSV.
    #[arg(long)]
    bland_altman_points: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Corpus directory containing `manifest.json`.
    corpus: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusFlag {
    Sweep,
    Noisy,
    Decoys,
    Genuine,
    /// One session built from the profile flags.
    Single,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = CorpusFlag::Sweep)]
    corpus: CorpusFlag,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Added to every profile seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Session count for decoy and genuine corpora.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// JSON file with a list of profiles; overrides `--corpus`.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 6.0)]
    bpm: f64,
    #[arg(long, default_value_t = 300.0)]
    duration_s: f64,
    #[arg(long)]
    jitter_rms_g: Option<f64>,
    #[arg(long)]
    flat_decoy: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    session: PathBuf,
    /// Directory holding concentration.bkw, sensory_clarity.bkw, equanimity.bkw.
    #[arg(long, env = WEIGHTS_ENV)]
    weights_dir: Option<PathBuf>,
    #[arg(long, requires_all = ["sensory_clarity", "equanimity"], conflicts_with = "weights_dir")]
    concentration: Option<PathBuf>,
    #[arg(long)]
    sensory_clarity: Option<PathBuf>,
    #[arg(long)]
    equanimity: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

fn main() -> ExitCode {
    // Usage errors exit 1 like any other error; 2 is reserved for gating.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Process(a) => process(a),
        Command::Evaluate(a) => evaluate(a).map(|_| 0),
        Command::Bench(a) => bench(a).map(|_| 0),
        Command::Synth(a) => synth_cmd(a).map(|_| 0),
        Command::Classify(a) => classify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", error_line(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain on one line, skipping causes a parent already quotes.
fn error_line(e: &anyhow::Error) -> String {
    let mut line = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !line.contains(&msg) {
            if !line.is_empty() {
                line.push_str(": ");
            }
            line.push_str(&msg);
        }
    }
    line.replace('\n', " ")
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn params_value(cfg: &PipelineConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

fn process(a: ProcessArgs) -> Result<u8> {
    let cfg = a.pipeline.config()?;
    let rec = read_session(&a.session).with_context(|| a.session.display().to_string())?;
    let (report, estimate) = estimate_session(&rec, &cfg)?;
    let mut doc = FeedbackDocument::new(rec.session_id(), &report, estimate.as_ref(), None)?;
    if a.pipeline.params_json {
        doc = doc.with_params(params_value(&cfg)?);
    }
    emit(&(doc.to_json()? + "\n"), a.output.as_deref())?;
    Ok(if report.verdict.is_ok() { 0 } else { 2 })
}

/// Estimate points from a feedback JSON or a `t,rate_bpm` CSV.
fn load_estimate(path: &Path, series: SeriesFlag) -> Result<Vec<RatePoint>> {
    if path.extension().is_some_and(|e| e == "csv") {
        return Ok(read_rate_series(path)?.entries().to_vec());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: FeedbackDocument =
        serde_json::from_str(&text).with_context(|| format!("parsing feedback JSON {}", path.display()))?;
    let Some(rates) = doc.rates else {
        bail!("{}: gated session ({}) carries no rates", path.display(), doc.message);
    };
    Ok(match series {
        SeriesFlag::Instantaneous => rates.instantaneous,
        SeriesFlag::PerMinute => rates
            .per_minute_bpm
            .iter()
            .enumerate()
            .filter_map(|(m, v)| v.map(|bpm| RatePoint { t: 60.0 * m as f64 + 30.0, bpm }))
            .collect(),
    })
}

fn pairs_for(gt: &Path, est: &Path, series: SeriesFlag, tol: f64) -> Result<Vec<eval::Pair>> {
    let gt_series = read_rate_series(gt)?;
    let points = load_estimate(est, series)?;
    Ok(eval::align(gt_series.entries(), &points, tol)?.pairs)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let pairs = if a.gt.is_dir() {
        if !a.est.is_dir() {
            bail!("--gt is a directory, so --est must be one too");
        }
        let mut ids: Vec<String> = fs::read_dir(&a.gt)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_suffix("_gt.csv").map(str::to_string))
            .collect();
        ids.sort();
        if ids.is_empty() {
            bail!("no *_gt.csv files in {}", a.gt.display());
        }
        let mut all = Vec::new();
        for id in ids {
            let est = a.est.join(format!("{id}.json"));
            if !est.exists() {
                bail!("missing estimate {}", est.display());
            }
            all.extend(pairs_for(&a.gt.join(format!("{id}_gt.csv")), &est, a.series, a.tolerance_s)?);
        }
        all
    } else {
        pairs_for(&a.gt, &a.est, a.series, a.tolerance_s)?
    };
    let report: AgreementReport = eval::agreement(&pairs)?;
    if let Some(p) = &a.bands_csv {
        let mut csv = String::from("band,n,mae\n");
        for (band, s) in &report.per_band {
            csv.push_str(&format!("{band},{},{}\n", s.n, s.mae.map(|m| format!("{m:.6}")).unwrap_or_default()));
        }
        emit(&csv, Some(p))?;
    }
    if let Some(p) = &a.bland_altman_points {
        let mut csv = String::from("mean,diff\n");
        for (m, d) in eval::bland_altman_points(&pairs) {
            csv.push_str(&format!("{m},{d}\n"));
        }
        emit(&csv, Some(p))?;
    }
    emit(&(serde_json::to_string_pretty(&report)? + "\n"), a.output.as_deref())
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = a.pipeline.config()?;
    let manifest = Manifest::read(&a.corpus)?;
    if manifest.sessions.is_empty() {
        bail!("corpus {} is empty", a.corpus.display());
    }
    let sessions = (0..manifest.sessions.len())
        .into_par_iter()
        .map(|i| {
            let rec = read_session(manifest.session_path(&a.corpus, i))?;
            let gt = read_rate_series(manifest.ground_truth_path(&a.corpus, i))?;
            Ok((rec, gt))
        })
        .collect::<slowbreath::Result<Vec<_>>>()?;
    let runs = run_corpus(&sessions, &cfg)?;
    let csv = format_bench_csv(&bench_table(&runs)?);
    emit(&csv, a.output.as_deref())?;
    if a.pipeline.params_json {
        let side = match &a.output {
            Some(p) => p.with_extension("params.json"),
            None => bail!("--params-json with bench needs --output for the sidecar file"),
        };
        emit(&(serde_json::to_string_pretty(&params_value(&cfg)?)? + "\n"), Some(&side))?;
    }
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let mut profiles = if let Some(p) = &a.profiles {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str::<Vec<SynthProfile>>(&text)?
    } else {
        match a.corpus {
            CorpusFlag::Sweep => synth::rate_sweep_corpus(),
            CorpusFlag::Noisy => synth::noisy_corpus(),
            CorpusFlag::Decoys => synth::flat_decoy_corpus(a.count),
            CorpusFlag::Genuine => synth::genuine_corpus(a.count),
            CorpusFlag::Single => {
                let base = SynthProfile::default();
                vec![SynthProfile {
                    id: "session".into(),
                    duration_s: a.duration_s,
                    rate_profile: RateProfile::Constant { bpm: a.bpm },
                    jitter_rms_g: a.jitter_rms_g.unwrap_or(base.jitter_rms_g),
                    flat_decoy: a.flat_decoy,
                    ..base
                }]
            }
        }
    };
    for p in &mut profiles {
        p.seed = p.seed.wrapping_add(a.seed);
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let manifest = synth::generate_corpus(&profiles, &a.out)?;
    eprintln!("wrote {} sessions to {}", manifest.sessions.len(), a.out.display());
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<u8> {
    let bundles = match (&a.concentration, &a.sensory_clarity, &a.equanimity) {
        (Some(c), Some(s), Some(e)) => SkillBundles {
            concentration: read_weights(c)?,
            sensory_clarity: read_weights(s)?,
            equanimity: read_weights(e)?,
        },
        _ => {
            let Some(dir) = &a.weights_dir else {
                bail!("no weights: pass --weights-dir, set {WEIGHTS_ENV}, or give all three bundle paths");
            };
            SkillBundles::from_dir(dir)?
        }
    };
    let spec: NetworkSpec = bundles.concentration.spec.clone();
    let cfg = a.pipeline.config()?;
    let rec = read_session(&a.session).with_context(|| a.session.display().to_string())?;
    let skills = predict_session(&rec, &spec, &bundles)?;
    let (report, estimate) = estimate_session(&rec, &cfg)?;
    let mut doc = FeedbackDocument::new(rec.session_id(), &report, estimate.as_ref(), Some(&skills))?;
    if a.pipeline.params_json {
        doc = doc.with_params(json!({ "pipeline": params_value(&cfg)?, "network": spec }));
    }
    emit(&(doc.to_json()? + "\n"), a.output.as_deref())?;
    Ok(if report.verdict.is_ok() { 0 } else { 2 })
}
