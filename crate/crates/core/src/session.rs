//! Calibration, the streaming frame loop and the persisted session document.

use std::collections::VecDeque;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaos::{higuchi_hfd, ChaosConfig, HfdPair};
use crate::fusion::{self, decide, fuse, Decision, FeatureVector, FusionError, FusionWeights};
use crate::physics::{lateralization_index, PhysicsConfig};
use crate::quantum::{score_to_theta, update_state, QuantumConfig, QuantumState};
use crate::report::ClinicalReport;
use crate::signal_io::{
    bandpass, find_channel, window_schedule, Annotation, ButterworthBandpass, EpochWindow, FilterMode, FilterSpec,
    FilterState, MiClass, Recording, SignalError,
};
use crate::sonification::{encode_pcm16, SonificationParams, Sonifier};
use crate::veto::{
    calibrate_threshold, default_hidden_size, raw_window_features, train, veto, Autoencoder, FeatureNormalizer,
    TrainingParams, VetoError, VetoResult,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("insufficient calibration data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Veto(#[from] VetoError),
    #[error("session schema version {found:?} is not the supported version {expected}")]
    SchemaMismatch { found: Option<u64>, expected: u32 },
    #[error("session file is not valid: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("stream aborted: {0}")]
    StreamAborted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub filter: FilterSpec,
    pub physics: PhysicsConfig,
    pub chaos: ChaosConfig,
    pub quantum: QuantumConfig,
    pub veto: TrainingParams,
    /// Channels summarized for the artifact veto; empty means every channel.
    pub veto_channels: Vec<String>,
    /// Attach base64 PCM audio to each frame.
    pub include_audio: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_s: 1.0,
            hop_s: 0.125,
            filter: FilterSpec::default(),
            physics: PhysicsConfig::default(),
            chaos: ChaosConfig::default(),
            quantum: QuantumConfig::default(),
            veto: TrainingParams::default(),
            veto_channels: Vec::new(),
            include_audio: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return bad(format!("window_s must be positive, got {}", self.window_s));
        }
        if !(self.hop_s > 0.0 && self.hop_s.is_finite()) {
            return bad(format!("hop_s must be positive, got {}", self.hop_s));
        }
        if !(self.filter.low_hz > 0.0 && self.filter.low_hz < self.filter.high_hz) || self.filter.order == 0 {
            return bad(format!(
                "filter band {}-{} Hz of order {} is not valid",
                self.filter.low_hz, self.filter.high_hz, self.filter.order
            ));
        }
        if self.filter.mode != FilterMode::Causal {
            return bad("the streaming pipeline needs filter.mode = \"causal\"".into());
        }
        if !(self.physics.epsilon > 0.0) {
            return bad("physics.epsilon must be positive".into());
        }
        if self.chaos.k_max < 2 {
            return bad("chaos.k_max must be at least 2".into());
        }
        if !(self.quantum.omega_max > 0.0 && self.quantum.omega_max <= std::f64::consts::PI) {
            return bad(format!("quantum.omega_max must lie in (0, pi], got {}", self.quantum.omega_max));
        }
        if !(self.quantum.gain > 0.0 && self.quantum.gain.is_finite()) {
            return bad("quantum.gain must be positive".into());
        }
        if !(self.veto.learning_rate > 0.0) {
            return bad("veto.learning_rate must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInfo {
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    pub n_windows: usize,
    pub n_left: usize,
    pub n_right: usize,
    /// Fraction of calibration windows the fitted fusion puts on the right side.
    pub training_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackFrame {
    pub seq: u64,
    /// Time at which the window became available, seconds from stream start.
    pub t_s: f64,
    pub l_idx: f64,
    pub delta_hfd: f64,
    pub theta: f64,
    pub phi: f64,
    pub p_move: f64,
    pub decision: Decision,
    pub veto: VetoResult,
    pub sonification: SonificationParams,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<MiClass>,
    /// Base64 little-endian 16-bit PCM at 44.1 kHz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_pcm16: Option<String>,
}

impl FeedbackFrame {
    /// The frame with timing removed, for comparing runs.
    pub fn without_latency(&self) -> Self {
        Self {
            latency_ms: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub version: u32,
    pub config: PipelineConfig,
    pub calibration: CalibrationInfo,
    pub weights: FusionWeights,
    pub normalizer: FeatureNormalizer,
    pub autoencoder: Autoencoder,
    pub veto_threshold: f64,
    pub frames: Vec<FeedbackFrame>,
    pub reports: Vec<ClinicalReport>,
}

impl SessionRecord {
    pub fn to_json(&self) -> Result<String, SessionError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(serde_json::Value::as_u64);
        if found != Some(SCHEMA_VERSION as u64) {
            return Err(SessionError::SchemaMismatch {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

pub fn persist_session(record: &SessionRecord, path: impl AsRef<Path>) -> Result<(), SessionError> {
    fs::write(path, record.to_json()?)?;
    Ok(())
}

pub fn load_session(path: impl AsRef<Path>) -> Result<SessionRecord, SessionError> {
    SessionRecord::from_json(&fs::read_to_string(path)?)
}

/// Per-window engine outputs shared by calibration and streaming.
struct WindowFeatures {
    fv: FeatureVector,
    degenerate: bool,
    raw_veto: Vec<f64>,
}

fn window_features(c3: &[f64], c4: &[f64], veto_window: &EpochWindow, cfg: &PipelineConfig) -> WindowFeatures {
    let l_idx = lateralization_index(c3, c4, &cfg.physics);
    let hfd = higuchi_hfd(c3, &cfg.chaos).and_then(|a| higuchi_hfd(c4, &cfg.chaos).map(|b| HfdPair { c3: a, c4: b }));
    let degenerate = hfd.is_err() || !l_idx.is_finite();
    let fv = match hfd {
        Ok(pair) if l_idx.is_finite() => FeatureVector::new(l_idx, pair),
        Ok(pair) => FeatureVector::new(0.0, pair),
        Err(_) => FeatureVector {
            l_idx: if l_idx.is_finite() { l_idx } else { 0.0 },
            hfd_c3: 0.0,
            hfd_c4: 0.0,
            delta_hfd: 0.0,
        },
    };
    WindowFeatures {
        fv,
        degenerate,
        raw_veto: raw_window_features(veto_window),
    }
}

fn veto_indices(channels: &[String], picks: &[String]) -> Result<Vec<usize>, SignalError> {
    if picks.is_empty() {
        return Ok((0..channels.len()).collect());
    }
    picks
        .iter()
        .map(|p| find_channel(channels, p).ok_or_else(|| SignalError::MissingChannel(p.clone())))
        .collect()
}

fn require(channels: &[String], label: &str) -> Result<usize, SignalError> {
    find_channel(channels, label).ok_or_else(|| SignalError::MissingChannel(label.into()))
}

fn labelled_class(annotations: &[Annotation], start_s: f64, end_s: f64) -> Option<MiClass> {
    annotations.iter().find_map(|a| {
        let class = MiClass::from_annotation(&a.label);
        let inside = a.onset_s <= start_s + 1e-9 && end_s <= a.onset_s + a.duration_s + 1e-9;
        (class != MiClass::Rest && inside).then_some(class)
    })
}

/// Fits fusion weights, the artifact autoencoder and its threshold on the
/// windows that lie entirely inside Left or Right annotations. The recording
/// is filtered causally, exactly as the stream will see it.
pub fn run_calibration(recording: &Recording, config: &PipelineConfig) -> Result<SessionRecord, SessionError> {
    config.validate()?;
    let channels = recording.channels();
    let (i3, i4) = (require(channels, "C3")?, require(channels, "C4")?);
    let vidx = veto_indices(channels, &config.veto_channels)?;
    let fs = recording.sample_rate_hz();
    let filtered = bandpass(recording, &config.filter)?;
    let schedule = window_schedule(recording.n_samples(), fs, config.window_s, config.hop_s)?;
    let w = schedule.window_samples;

    let mut examples = Vec::new();
    let mut raw = Vec::new();
    for &start in &schedule.starts {
        let start_s = start as f64 / fs;
        let Some(class) = labelled_class(recording.annotations(), start_s, (start + w) as f64 / fs) else {
            continue;
        };
        let rows = filtered.samples();
        let veto_window = EpochWindow {
            start_s,
            channels: vidx.iter().map(|&i| channels[i].clone()).collect(),
            data: vidx.iter().map(|&i| rows[i][start..start + w].to_vec()).collect(),
            sample_rate_hz: fs,
            label: Some(class),
        };
        let f = window_features(&rows[i3][start..start + w], &rows[i4][start..start + w], &veto_window, config);
        if f.degenerate || f.raw_veto.iter().any(|v| !v.is_finite()) {
            continue;
        }
        examples.push((f.fv, class));
        raw.push(f.raw_veto);
    }
    if examples.is_empty() {
        return Err(SessionError::InsufficientData(
            "no usable windows inside Left/Right annotations".into(),
        ));
    }

    let weights = fusion::calibrate(&examples)?;
    let training_accuracy = fusion::training_accuracy(&weights, &examples);

    let normalizer = FeatureNormalizer::fit(&raw)?;
    let feats: Vec<Vec<f64>> = raw.iter().map(|r| normalizer.apply(r)).collect();
    let d_in = feats[0].len();
    let d_hidden = config.veto.d_hidden.unwrap_or_else(|| default_hidden_size(d_in));
    let autoencoder = train(&feats, d_hidden, config.veto.epochs, config.veto.learning_rate, config.veto.seed)?;
    let veto_threshold = calibrate_threshold(&autoencoder, &feats)?;

    let n_left = examples.iter().filter(|(_, c)| *c == MiClass::Left).count();
    Ok(SessionRecord {
        version: SCHEMA_VERSION,
        config: config.clone(),
        calibration: CalibrationInfo {
            sample_rate_hz: fs,
            channels: channels.to_vec(),
            n_windows: examples.len(),
            n_left,
            n_right: examples.len() - n_left,
            training_accuracy,
        },
        weights,
        normalizer,
        autoencoder,
        veto_threshold,
        frames: Vec::new(),
        reports: Vec::new(),
    })
}

/// Incremental frame producer: feed samples as they arrive, get a frame each
/// time a scheduled window completes.
pub struct FramePipeline {
    config: PipelineConfig,
    weights: FusionWeights,
    normalizer: FeatureNormalizer,
    autoencoder: Autoencoder,
    threshold: f64,
    fs: f64,
    /// Recording channel indices held in the ring buffers.
    picks: Vec<usize>,
    pick_names: Vec<String>,
    c3: usize,
    c4: usize,
    veto_rows: Vec<usize>,
    filters: Vec<FilterState>,
    rings: Vec<VecDeque<f64>>,
    window_samples: usize,
    n_seen: usize,
    next_window: u64,
    annotations: Vec<Annotation>,
    quantum: QuantumState,
    sonifier: Sonifier,
    measure_latency: bool,
}

impl FramePipeline {
    pub fn new(session: &SessionRecord, channels: &[String], sample_rate_hz: f64) -> Result<Self, SessionError> {
        let cfg = &session.config;
        let i3 = require(channels, "C3")?;
        let i4 = require(channels, "C4")?;
        let vidx = veto_indices(channels, &cfg.veto_channels)?;
        if vidx.len() * 3 != session.autoencoder.d_in() {
            return Err(SessionError::Signal(SignalError::InvalidRecording(format!(
                "{} veto channels do not match the calibrated autoencoder input of {}",
                vidx.len(),
                session.autoencoder.d_in()
            ))));
        }
        let mut picks = vec![i3, i4];
        for &i in &vidx {
            if !picks.contains(&i) {
                picks.push(i);
            }
        }
        let pos = |i: usize| picks.iter().position(|&p| p == i).expect("picked");
        let veto_rows = vidx.iter().map(|&i| pos(i)).collect();
        let design = ButterworthBandpass::design(&cfg.filter, sample_rate_hz)?;
        let window_samples = (cfg.window_s * sample_rate_hz).round() as usize;
        if window_samples == 0 {
            return Err(SessionError::Signal(SignalError::InvalidWindow("window shorter than one sample".into())));
        }
        Ok(Self {
            config: cfg.clone(),
            weights: session.weights,
            normalizer: session.normalizer.clone(),
            autoencoder: session.autoencoder.clone(),
            threshold: session.veto_threshold,
            fs: sample_rate_hz,
            pick_names: picks.iter().map(|&i| channels[i].clone()).collect(),
            c3: 0,
            c4: 1,
            veto_rows,
            filters: picks.iter().map(|_| design.state()).collect(),
            rings: picks.iter().map(|_| VecDeque::with_capacity(window_samples)).collect(),
            picks,
            window_samples,
            n_seen: 0,
            next_window: 0,
            annotations: Vec::new(),
            quantum: QuantumState::neutral(),
            sonifier: Sonifier::new(),
            measure_latency: false,
        })
    }

    /// Label frames by the annotation at each window centre.
    pub fn with_annotations(mut self, annotations: Vec<Annotation>) -> Self {
        self.annotations = annotations;
        self
    }

    pub fn measure_latency(mut self, on: bool) -> Self {
        self.measure_latency = on;
        self
    }

    fn window_end(&self, j: u64) -> usize {
        (j as f64 * self.config.hop_s * self.fs).round() as usize + self.window_samples
    }

    /// Feeds `range` of every channel of `samples` (channel-major, all
    /// recording channels). Latency counts from entry to each frame's completion.
    pub fn push_range(&mut self, samples: &[Vec<f64>], range: Range<usize>) -> Vec<FeedbackFrame> {
        let t0 = Instant::now();
        let mut out = Vec::new();
        for t in range {
            for (k, &ch) in self.picks.iter().enumerate() {
                let y = self.filters[k].process(samples[ch][t]);
                let ring = &mut self.rings[k];
                if ring.len() == self.window_samples {
                    ring.pop_front();
                }
                ring.push_back(y);
            }
            self.n_seen += 1;
            if self.n_seen == self.window_end(self.next_window) {
                let mut frame = self.emit();
                if self.measure_latency {
                    frame.latency_ms = t0.elapsed().as_secs_f64() * 1e3;
                }
                out.push(frame);
                self.next_window += 1;
            }
        }
        out
    }

    pub fn push(&mut self, chunk: &[Vec<f64>]) -> Vec<FeedbackFrame> {
        let n = chunk.first().map_or(0, Vec::len);
        self.push_range(chunk, 0..n)
    }

    fn emit(&mut self) -> FeedbackFrame {
        let cfg = &self.config;
        let rows: Vec<Vec<f64>> = self.rings.iter().map(|r| r.iter().copied().collect()).collect();
        let start_s = (self.n_seen - self.window_samples) as f64 / self.fs;
        let t_s = self.n_seen as f64 / self.fs;
        let veto_window = EpochWindow {
            start_s,
            channels: self.veto_rows.iter().map(|&r| self.pick_names[r].clone()).collect(),
            data: self.veto_rows.iter().map(|&r| rows[r].clone()).collect(),
            sample_rate_hz: self.fs,
            label: None,
        };
        let f = window_features(&rows[self.c3], &rows[self.c4], &veto_window, cfg);

        let veto_result = if f.raw_veto.iter().all(|v| v.is_finite()) {
            veto(&self.autoencoder, &self.normalizer.apply(&f.raw_veto), self.threshold)
        } else {
            VetoResult {
                reconstruction_error: f64::MAX,
                threshold: self.threshold,
                rejected: true,
            }
        };

        // vetoed or degenerate evidence never moves the state
        if !f.degenerate && !veto_result.rejected {
            let target = score_to_theta(fuse(&f.fv, &self.weights), self.weights.quantum_gain);
            self.quantum = update_state(&self.quantum, target, &cfg.quantum);
        }
        self.quantum = self.quantum.with_delta_hfd(f.fv.delta_hfd);
        let decision = decide(self.quantum.p_move, &veto_result, f.degenerate);
        let (sonification, audio) = self.sonifier.next_frame(&decision, &f.fv);

        let label = (!self.annotations.is_empty()).then(|| {
            let centre = start_s + self.window_samples as f64 / self.fs / 2.0;
            self.annotations
                .iter()
                .find(|a| a.covers(centre))
                .map_or(MiClass::Rest, |a| MiClass::from_annotation(&a.label))
        });

        FeedbackFrame {
            seq: self.next_window,
            t_s,
            l_idx: f.fv.l_idx,
            delta_hfd: f.fv.delta_hfd,
            theta: self.quantum.theta,
            phi: self.quantum.phi,
            p_move: self.quantum.p_move,
            decision,
            veto: veto_result,
            sonification,
            latency_ms: 0.0,
            label,
            audio_pcm16: cfg.include_audio.then(|| encode_pcm16(&audio)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamOptions {
    /// Pace frames at wall-clock hop intervals and measure latency.
    pub realtime: bool,
    /// Replay speed multiplier for realtime pacing.
    pub speed: f64,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            realtime: false,
            speed: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaceControl {
    pub speed: f64,
    pub paused: bool,
    pub abort: bool,
}

/// Observers of a running stream. `poll` may change pacing; it never sees
/// or alters frame values.
pub trait StreamHooks {
    fn on_frame(&mut self, _frame: &FeedbackFrame) {}
    fn poll(&mut self, _control: &mut PaceControl) {}
}

impl StreamHooks for () {}

const POLL_INTERVAL: Duration = Duration::from_millis(2);

pub fn run_stream(
    session: &SessionRecord,
    recording: &Recording,
    options: &StreamOptions,
) -> Result<SessionRecord, SessionError> {
    run_stream_with(session, recording, options, &mut ())
}

/// Replays `recording` through a [`FramePipeline`], one frame per hop.
pub fn run_stream_with(
    session: &SessionRecord,
    recording: &Recording,
    options: &StreamOptions,
    hooks: &mut dyn StreamHooks,
) -> Result<SessionRecord, SessionError> {
    let fs = recording.sample_rate_hz();
    let cfg = &session.config;
    let schedule = window_schedule(recording.n_samples(), fs, cfg.window_s, cfg.hop_s)?;
    let mut pipeline = FramePipeline::new(session, recording.channels(), fs)?
        .with_annotations(recording.annotations().to_vec())
        .measure_latency(options.realtime);

    let mut control = PaceControl {
        speed: if options.speed > 0.0 { options.speed } else { 1.0 },
        paused: false,
        abort: false,
    };
    let mut out = session.clone();
    out.frames.clear();
    let mut fed = 0;
    let mut deadline = Instant::now();
    for &start in &schedule.starts {
        let end = start + schedule.window_samples;
        hooks.poll(&mut control);
        if options.realtime {
            deadline += Duration::from_secs_f64((end - fed) as f64 / fs / control.speed.max(1e-6));
            loop {
                if control.abort {
                    break;
                }
                let now = Instant::now();
                if control.paused {
                    deadline = now;
                } else if now >= deadline {
                    break;
                }
                thread::sleep(deadline.saturating_duration_since(now).clamp(Duration::from_micros(100), POLL_INTERVAL));
                hooks.poll(&mut control);
            }
        }
        if control.abort {
            return Err(SessionError::StreamAborted(format!("stopped after {} frames", out.frames.len())));
        }
        for frame in pipeline.push_range(recording.samples(), fed..end) {
            hooks.on_frame(&frame);
            out.frames.push(frame);
        }
        fed = end;
    }
    Ok(out)
}
