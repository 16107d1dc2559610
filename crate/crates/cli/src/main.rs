//! `nfb`: calibrate, stream, serve, evaluate, report and sonify neurofeedback
//! sessions. Exit codes: 0 success, 2 data error, 3 config or usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neurofeedback::eval::physionet::physionet_cohort;
use neurofeedback::eval::{evaluate, render_table, synthetic_cohort, EvalConfig};
use neurofeedback::report::{generate_report, summarize, ENDPOINT_ENV};
use neurofeedback::session::{
    load_session, persist_session, run_calibration, run_stream_with, ConfigError, PipelineConfig, SessionError,
    SessionRecord, StreamOptions,
};
use neurofeedback::signal_io::{parse_annotations_csv, parse_csv, read_edf, write_edf, Recording};
use neurofeedback::sonification::{synthesize, write_wav, FRAME_DURATION_S};
use neurofeedback::synthetic::{mi_recording, SyntheticParams};
use neurofeedback::telemetry::{ReportSettings, TelemetryHooks, TelemetryServer};

#[derive(Parser)]
#[command(name = "nfb", version, about = "Explainable motor-imagery neurofeedback")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit fusion weights and the artifact veto on an annotated recording.
    Calibrate {
        #[command(flatten)]
        input: Input,
        /// Pipeline config (TOML); defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides veto.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a recording through a calibrated session and save the frame log.
    Stream {
        #[arg(long)]
        session: PathBuf,
        #[command(flatten)]
        input: Input,
        /// Pace frames at wall-clock hop intervals and measure latency.
        #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
        realtime: bool,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[command(flatten)]
        report: ReportArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream while publishing frames as NDJSON over TCP and taking commands.
    Serve {
        #[arg(long)]
        session: PathBuf,
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        realtime: bool,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Stay paused until a client sends {"cmd":"start"}.
        #[arg(long)]
        wait_for_start: bool,
        #[command(flatten)]
        report: ReportArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate the CSP+LDA baseline against the explainable pipeline.
    Eval {
        /// PhysioNet eegmmidb directory (S001/S001R04.edf or flat).
        #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Subject numbers, e.g. 1,2,7.
        #[arg(long, value_delimiter = ',', requires = "data")]
        subjects: Vec<u32>,
        /// Use this many generated subjects instead of files.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, value_enum, default_value_t = Profile::Realistic)]
        profile: Profile,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        responsive_threshold: Option<f64>,
        /// Evaluation config (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON result; the text table goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a session report (rule-based, or remote with fallback).
    Report {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, env = ENDPOINT_ENV)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 2000)]
        timeout_ms: u64,
        /// Also save the session with the report appended.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a session's sonification to a 16-bit WAV file.
    Sonify {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic motor-imagery recording as EDF+.
    Synth {
        #[arg(long, value_enum, default_value_t = Profile::Realistic)]
        profile: Profile,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trials_per_class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Input {
    /// Recording: .edf (EDF/EDF+) or .csv (one column per channel).
    #[arg(long)]
    data: PathBuf,
    /// Sample rate for CSV input.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Annotations for CSV input: onset_s,duration_s,label.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Skip the end-of-session report.
    #[arg(long)]
    no_report: bool,
    #[arg(long, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 2000)]
    timeout_ms: u64,
}

impl ReportArgs {
    fn settings(&self) -> ReportSettings {
        ReportSettings {
            endpoint: self.endpoint.clone(),
            timeout: Duration::from_millis(self.timeout_ms),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Separable,
    Realistic,
}

impl Profile {
    fn params(self) -> SyntheticParams {
        match self {
            Profile::Separable => SyntheticParams::separable(),
            Profile::Realistic => SyntheticParams::realistic(),
        }
    }
}

enum Failure {
    Data(String),
    Config(String),
}

impl Failure {
    fn data(e: impl std::fmt::Display) -> Self {
        Failure::Data(e.to_string())
    }

    fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Config(_) => Failure::config(e),
            _ => Failure::data(e),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

type Outcome = Result<(), Failure>;

fn load_recording(input: &Input) -> Result<Recording, Failure> {
    let ext = input.data.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let rec = match ext.as_deref() {
        Some("edf") => read_edf(&input.data).map_err(|e| Failure::Data(format!("{}: {e}", input.data.display())))?,
        Some("csv") => {
            let fs = input
                .sample_rate
                .ok_or_else(|| Failure::config("--sample-rate is required for CSV input"))?;
            let text = read_text(&input.data)?;
            parse_csv(&text, fs).map_err(|e| Failure::Data(format!("{}: {e}", input.data.display())))?
        }
        _ => return Err(Failure::Config(format!("{}: expected a .edf or .csv file", input.data.display()))),
    };
    let Some(events) = &input.events else {
        return Ok(rec);
    };
    let annotations = parse_annotations_csv(&read_text(events)?).map_err(|e| Failure::Data(format!("{}: {e}", events.display())))?;
    let (fs, channels, samples, _) = rec.into_parts();
    Recording::new(fs, channels, samples, annotations).map_err(Failure::data)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn append_report(record: &mut SessionRecord, args: &ReportArgs) {
    if args.no_report {
        return;
    }
    match summarize(record) {
        Ok(summary) => {
            let s = args.settings();
            record.reports.push(generate_report(&summary, s.endpoint.as_deref(), s.timeout));
        }
        Err(e) => log::warn!("no report: {e}"),
    }
}

fn calibrate(input: &Input, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Outcome {
    let mut cfg = match config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.veto.seed = seed;
    }
    let rec = load_recording(input)?;
    let session = run_calibration(&rec, &cfg)?;
    log::info!(
        "calibrated on {} windows, training accuracy {:.3}",
        session.calibration.n_windows,
        session.calibration.training_accuracy
    );
    persist_session(&session, out)?;
    Ok(())
}

fn serve(
    session: &Path,
    input: &Input,
    bind: &str,
    options: StreamOptions,
    wait_for_start: bool,
    report: &ReportArgs,
    out: Option<&Path>,
) -> Outcome {
    let session = load_session(session)?;
    let rec = load_recording(input)?;
    let server = TelemetryServer::bind(bind).map_err(Failure::config)?;
    eprintln!("telemetry on {}", server.local_addr());
    let mut hooks = TelemetryHooks::new(&server, report.settings()).wait_for_start(wait_for_start);
    let mut record = run_stream_with(&session, &rec, &options, &mut hooks)?;
    append_report(&mut record, report);
    if let Some(r) = record.reports.last() {
        server.broadcast(serde_json::json!({ "report": r }).to_string());
    }
    if let Some(out) = out {
        persist_session(&record, out)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    data: Option<&Path>,
    subjects: &[u32],
    synthetic: Option<usize>,
    profile: Profile,
    folds: Option<usize>,
    seed: Option<u64>,
    responsive_threshold: Option<f64>,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Outcome {
    let mut cfg = match config {
        Some(p) => EvalConfig::from_toml_str(&fs::read_to_string(p).map_err(Failure::config)?)?,
        None => EvalConfig::default(),
    };
    if let Some(k) = folds {
        if k < 2 {
            return Err(Failure::config("--folds must be at least 2"));
        }
        cfg.folds = k;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.responsive_threshold = responsive_threshold.or(cfg.responsive_threshold);

    let cohort = match (data, synthetic) {
        (Some(dir), _) => {
            if subjects.is_empty() {
                return Err(Failure::config("--subjects is required with --data"));
            }
            physionet_cohort(dir, subjects, &cfg).map_err(Failure::data)?
        }
        (None, Some(n)) => synthetic_cohort(n, &profile.params(), cfg.seed, &cfg).map_err(Failure::data)?,
        (None, None) => return Err(Failure::config("either --data or --synthetic is required")),
    };
    let result = evaluate(&cohort, &cfg).map_err(Failure::data)?;
    print!("{}", render_table(&result));
    if let Some(out) = out {
        let json = serde_json::to_string_pretty(&result).map_err(Failure::data)? + "\n";
        fs::write(out, json).map_err(Failure::data)?;
    }
    Ok(())
}

fn report(session: &Path, endpoint: Option<&str>, timeout_ms: u64, out: Option<&Path>) -> Outcome {
    let mut record = load_session(session)?;
    let summary = summarize(&record).map_err(Failure::data)?;
    let report = generate_report(&summary, endpoint, Duration::from_millis(timeout_ms));
    println!("{}", report.body);
    if let Some(out) = out {
        record.reports.push(report);
        persist_session(&record, out)?;
    }
    Ok(())
}

fn sonify(session: &Path, out: &Path) -> Outcome {
    let record = load_session(session)?;
    let mut phase = 0.0;
    let frames: Vec<_> = record
        .frames
        .iter()
        .map(|f| {
            let (audio, next) = synthesize(&f.sonification, FRAME_DURATION_S, phase);
            phase = next;
            audio
        })
        .collect();
    write_wav(&frames, out).map_err(Failure::data)?;
    log::info!("wrote {} frames of audio to {}", frames.len(), out.display());
    Ok(())
}

fn synth(profile: Profile, seed: u64, trials_per_class: Option<usize>, out: &Path) -> Outcome {
    let mut params = profile.params();
    if let Some(n) = trials_per_class {
        params.trials_per_class = n;
    }
    let bytes = write_edf(&mi_recording(&params, seed)).map_err(Failure::data)?;
    fs::write(out, bytes).map_err(Failure::data)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Cmd::Calibrate { input, config, seed, out } => calibrate(&input, config.as_deref(), seed, &out),
        Cmd::Stream {
            session,
            input,
            realtime,
            speed,
            report,
            out,
        } => {
            if !(speed > 0.0 && speed.is_finite()) {
                return Err(Failure::config("--speed must be positive"));
            }
            let s = load_session(&session)?;
            let rec = load_recording(&input)?;
            let mut record = run_stream_with(&s, &rec, &StreamOptions { realtime, speed }, &mut ())?;
            append_report(&mut record, &report);
            persist_session(&record, &out)?;
            Ok(())
        }
        Cmd::Serve {
            session,
            input,
            bind,
            realtime,
            speed,
            wait_for_start,
            report,
            out,
        } => {
            if !(speed > 0.0 && speed.is_finite()) {
                return Err(Failure::config("--speed must be positive"));
            }
            serve(&session, &input, &bind, StreamOptions { realtime, speed }, wait_for_start, &report, out.as_deref())
        }
        Cmd::Eval {
            data,
            subjects,
            synthetic,
            profile,
            folds,
            seed,
            responsive_threshold,
            config,
            out,
        } => eval(
            data.as_deref(),
            &subjects,
            synthetic,
            profile,
            folds,
            seed,
            responsive_threshold,
            config.as_deref(),
            out.as_deref(),
        ),
        Cmd::Report {
            session,
            endpoint,
            timeout_ms,
            out,
        } => report(&session, endpoint.as_deref(), timeout_ms, out.as_deref()),
        Cmd::Sonify { session, out } => sonify(&session, &out),
        Cmd::Synth {
            profile,
            seed,
            trials_per_class,
            out,
        } => synth(profile, seed, trials_per_class, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(3)
        }
    }
}
