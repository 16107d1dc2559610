//! EEG ingestion: recordings, the 8-30 Hz preprocessing filter and epoch windows.

mod csv;
mod edf;
mod epoch;
mod filter;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{parse_annotations_csv, parse_csv};
pub use self::edf::{parse_edf, read_edf, write_edf, EDF_ANNOTATIONS_LABEL};
pub use self::epoch::{epoch_at, epoch_stream, window_schedule, WindowSchedule};
pub use self::filter::{bandpass, Biquad, ButterworthBandpass, FilterMode, FilterSpec, FilterState};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("malformed EDF header: {0}")]
    MalformedHeader(String),
    #[error("unsupported EDF variant: {0}")]
    UnsupportedVariant(String),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("ragged CSV row {row}: expected {expected} cells, found {found}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("non-numeric CSV cell at row {row}, column {col}: {value:?}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("invalid filter spec: {0}")]
    InvalidFilterSpec(String),
    #[error("unstable filter design: {0}")]
    UnstableDesign(String),
    #[error("channel {0:?} not present")]
    MissingChannel(String),
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("invalid window request: {0}")]
    InvalidWindow(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
}

/// Motor-imagery class tag attached to windows and trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MiClass {
    Left,
    Right,
    Rest,
}

impl MiClass {
    /// Maps an annotation text to a class.
    ///
    /// Accepts the PhysioNet motor-imagery codes (`T1` left fist, `T2` right
    /// fist, `T0` rest, valid for the left/right runs 3, 4, 7, 8, 11, 12) as well
    /// as plain `left` / `right`. Anything else is `Rest`.
    pub fn from_annotation(label: &str) -> Self {
        match label.trim().to_ascii_lowercase().as_str() {
            "t1" | "left" | "l" => MiClass::Left,
            "t2" | "right" | "r" => MiClass::Right,
            _ => MiClass::Rest,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MiClass::Left => "Left",
            MiClass::Right => "Right",
            MiClass::Rest => "Rest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub onset_s: f64,
    pub duration_s: f64,
    pub label: String,
}

impl Annotation {
    pub fn new(onset_s: f64, duration_s: f64, label: impl Into<String>) -> Self {
        Self {
            onset_s,
            duration_s,
            label: label.into(),
        }
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.onset_s && t < self.onset_s + self.duration_s
    }
}

/// A multichannel recording held channel-major, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    sample_rate_hz: f64,
    channels: Vec<String>,
    samples: Vec<Vec<f64>>,
    annotations: Vec<Annotation>,
}

impl Recording {
    pub fn new(
        sample_rate_hz: f64,
        channels: Vec<String>,
        samples: Vec<Vec<f64>>,
        annotations: Vec<Annotation>,
    ) -> Result<Self, SignalError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SignalError::InvalidRecording(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channels.len() != samples.len() {
            return Err(SignalError::InvalidRecording(format!(
                "{} channel labels for {} sample rows",
                channels.len(),
                samples.len()
            )));
        }
        let n = samples.first().map_or(0, Vec::len);
        if let Some((i, row)) = samples.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(SignalError::InvalidRecording(format!(
                "channel {} has {} samples, expected {n}",
                channels[i],
                row.len()
            )));
        }
        let duration = n as f64 / sample_rate_hz;
        if let Some(a) = annotations
            .iter()
            .find(|a| !(a.onset_s >= 0.0 && a.onset_s <= duration))
        {
            return Err(SignalError::InvalidRecording(format!(
                "annotation {:?} onset {} outside [0, {duration}]",
                a.label, a.onset_s
            )));
        }
        Ok(Self {
            sample_rate_hz,
            channels,
            samples,
            annotations,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    /// Finds a channel by label. Matching ignores case, surrounding whitespace
    /// and the trailing dots PhysioNet pads its labels with (`"C3.."`).
    pub fn channel_index(&self, label: &str) -> Option<usize> {
        find_channel(&self.channels, label)
    }

    pub fn channel(&self, label: &str) -> Option<&[f64]> {
        self.channel_index(label).map(|i| self.samples[i].as_slice())
    }

    /// Class of the annotation covering time `t`, `Rest` when none does.
    pub fn class_at(&self, t: f64) -> MiClass {
        self.annotations
            .iter()
            .find(|a| a.covers(t))
            .map_or(MiClass::Rest, |a| MiClass::from_annotation(&a.label))
    }

    pub(crate) fn with_samples(&self, samples: Vec<Vec<f64>>) -> Self {
        Self {
            sample_rate_hz: self.sample_rate_hz,
            channels: self.channels.clone(),
            samples,
            annotations: self.annotations.clone(),
        }
    }

    pub fn into_parts(self) -> (f64, Vec<String>, Vec<Vec<f64>>, Vec<Annotation>) {
        (
            self.sample_rate_hz,
            self.channels,
            self.samples,
            self.annotations,
        )
    }
}

pub(crate) fn normalize_label(label: &str) -> String {
    label
        .trim()
        .trim_end_matches('.')
        .trim()
        .to_ascii_lowercase()
}

pub(crate) fn find_channel(channels: &[String], label: &str) -> Option<usize> {
    let wanted = normalize_label(label);
    channels.iter().position(|c| normalize_label(c) == wanted)
}

/// One fixed-length multichannel segment, the unit of per-frame computation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochWindow {
    pub start_s: f64,
    pub channels: Vec<String>,
    /// Channel-major, `channels.len()` rows of equal length.
    pub data: Vec<Vec<f64>>,
    pub sample_rate_hz: f64,
    pub label: Option<MiClass>,
}

impl EpochWindow {
    pub fn n_channels(&self) -> usize {
        self.data.len()
    }

    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn channel(&self, label: &str) -> Option<&[f64]> {
        find_channel(&self.channels, label).map(|i| self.data[i].as_slice())
    }

    pub fn require_channel(&self, label: &str) -> Result<&[f64], SignalError> {
        self.channel(label)
            .ok_or_else(|| SignalError::MissingChannel(label.to_string()))
    }

    /// Builds a window from C3/C4 rows; handy for engine tests and fixtures.
    pub fn from_c3_c4(c3: Vec<f64>, c4: Vec<f64>, sample_rate_hz: f64) -> Self {
        Self {
            start_s: 0.0,
            channels: vec!["C3".into(), "C4".into()],
            data: vec![c3, c4],
            sample_rate_hz,
            label: None,
        }
    }
}
