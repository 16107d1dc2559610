//! Continuous EDF / EDF+ reader and writer.
//!
//! Only the subset PhysioNet distributes is handled: 16-bit little-endian
//! samples, integer record durations, a single sample rate across the data
//! signals and an optional `EDF Annotations` signal carrying TALs. The writer
//! exists so fixtures and synthetic cohorts can be produced in the same format.

use std::path::Path;

use super::{Annotation, Recording, SignalError};

pub const EDF_ANNOTATIONS_LABEL: &str = "EDF Annotations";

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;
const DIGITAL_MIN: i32 = -32768;
const DIGITAL_MAX: i32 = 32767;

#[derive(Debug)]
struct SignalHeader {
    label: String,
    phys_min: f64,
    phys_max: f64,
    dig_min: f64,
    dig_max: f64,
    samples_per_record: usize,
}

impl SignalHeader {
    fn is_annotation(&self) -> bool {
        self.label == EDF_ANNOTATIONS_LABEL
    }

    fn to_physical(&self, digital: i16) -> f64 {
        self.phys_min
            + (f64::from(digital) - self.dig_min) * (self.phys_max - self.phys_min)
                / (self.dig_max - self.dig_min)
    }
}

fn ascii_field(bytes: &[u8], start: usize, len: usize) -> Result<&str, SignalError> {
    let raw = &bytes[start..start + len];
    std::str::from_utf8(raw)
        .map(str::trim)
        .map_err(|_| SignalError::MalformedHeader(format!("non-ASCII header field at byte {start}")))
}

fn number_field<T: std::str::FromStr>(
    bytes: &[u8],
    start: usize,
    len: usize,
    name: &str,
) -> Result<T, SignalError> {
    let text = ascii_field(bytes, start, len)?;
    text.parse()
        .map_err(|_| SignalError::MalformedHeader(format!("{name} is not a number: {text:?}")))
}

pub fn read_edf(path: impl AsRef<Path>) -> Result<Recording, SignalError> {
    let bytes = std::fs::read(path)?;
    parse_edf(&bytes)
}

pub fn parse_edf(bytes: &[u8]) -> Result<Recording, SignalError> {
    if bytes.len() < FIXED_HEADER {
        return Err(SignalError::MalformedHeader(format!(
            "{} bytes is shorter than the fixed header",
            bytes.len()
        )));
    }
    let version = ascii_field(bytes, 0, 8)?;
    if version != "0" {
        return Err(SignalError::MalformedHeader(format!("version field {version:?}")));
    }
    let header_bytes: usize = number_field(bytes, 184, 8, "header size")?;
    let reserved = ascii_field(bytes, 192, 44)?;
    let n_records: i64 = number_field(bytes, 236, 8, "record count")?;
    let record_duration: f64 = number_field(bytes, 244, 8, "record duration")?;
    let ns: usize = number_field(bytes, 252, 4, "signal count")?;

    if ns == 0 {
        return Err(SignalError::MalformedHeader("no signals".into()));
    }
    if header_bytes != FIXED_HEADER + ns * SIGNAL_HEADER {
        return Err(SignalError::MalformedHeader(format!(
            "header size {header_bytes} does not match {ns} signals"
        )));
    }
    if bytes.len() < header_bytes {
        return Err(SignalError::TruncatedData {
            expected: header_bytes,
            found: bytes.len(),
        });
    }
    if reserved.starts_with("EDF+D") {
        return Err(SignalError::UnsupportedVariant("discontinuous EDF+D".into()));
    }
    if !(record_duration > 0.0) || record_duration.fract() != 0.0 {
        return Err(SignalError::UnsupportedVariant(format!(
            "record duration {record_duration} s is not a positive integer"
        )));
    }

    let signals = (0..ns)
        .map(|i| {
            let base = FIXED_HEADER;
            let field = |offset: usize, width: usize| base + ns * offset + i * width;
            let header = SignalHeader {
                label: ascii_field(bytes, field(0, 16), 16)?.to_string(),
                phys_min: number_field(bytes, field(104, 8), 8, "physical minimum")?,
                phys_max: number_field(bytes, field(112, 8), 8, "physical maximum")?,
                dig_min: number_field(bytes, field(120, 8), 8, "digital minimum")?,
                dig_max: number_field(bytes, field(128, 8), 8, "digital maximum")?,
                samples_per_record: number_field(bytes, field(216, 8), 8, "samples per record")?,
            };
            if header.dig_max <= header.dig_min {
                return Err(SignalError::MalformedHeader(format!(
                    "signal {:?} has an empty digital range",
                    header.label
                )));
            }
            Ok(header)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let record_bytes: usize = signals.iter().map(|s| 2 * s.samples_per_record).sum();
    if record_bytes == 0 {
        return Err(SignalError::MalformedHeader("zero-length data records".into()));
    }
    let available = bytes.len() - header_bytes;
    let n_records = if n_records < 0 {
        available / record_bytes
    } else {
        let n = n_records as usize;
        if available < n * record_bytes {
            return Err(SignalError::TruncatedData {
                expected: header_bytes + n * record_bytes,
                found: bytes.len(),
            });
        }
        n
    };

    let data_signals: Vec<usize> = (0..ns).filter(|&i| !signals[i].is_annotation()).collect();
    let spr = data_signals
        .first()
        .map_or(0, |&i| signals[i].samples_per_record);
    if data_signals
        .iter()
        .any(|&i| signals[i].samples_per_record != spr)
    {
        return Err(SignalError::UnsupportedVariant(
            "data signals with differing sample rates".into(),
        ));
    }
    if spr == 0 {
        return Err(SignalError::MalformedHeader("no data signal samples".into()));
    }
    let sample_rate = spr as f64 / record_duration;

    let mut samples: Vec<Vec<f64>> = data_signals
        .iter()
        .map(|_| Vec::with_capacity(spr * n_records))
        .collect();
    let mut annotations = Vec::new();

    for r in 0..n_records {
        let mut offset = header_bytes + r * record_bytes;
        let mut row = 0;
        for signal in &signals {
            let len = 2 * signal.samples_per_record;
            let chunk = &bytes[offset..offset + len];
            offset += len;
            if signal.is_annotation() {
                parse_tals(chunk, &mut annotations);
                continue;
            }
            samples[row].extend(
                chunk
                    .chunks_exact(2)
                    .map(|b| signal.to_physical(i16::from_le_bytes([b[0], b[1]]))),
            );
            row += 1;
        }
    }

    let channels = data_signals
        .iter()
        .map(|&i| signals[i].label.clone())
        .collect();
    Recording::new(sample_rate, channels, samples, annotations)
}

/// Time-stamped annotation lists: `+onset[\x15duration]\x14text\x14...\x00`.
fn parse_tals(chunk: &[u8], out: &mut Vec<Annotation>) {
    for tal in chunk.split(|&b| b == 0).filter(|t| !t.is_empty()) {
        let mut parts = tal.split(|&b| b == 0x14);
        let Some(timing) = parts.next() else { continue };
        let mut timing = timing.split(|&b| b == 0x15);
        let onset = timing
            .next()
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.trim().parse::<f64>().ok());
        let Some(onset) = onset else { continue };
        let duration = timing
            .next()
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.trim().parse::<f64>().ok())
            .unwrap_or(0.0);
        for text in parts {
            let text = String::from_utf8_lossy(text);
            let text = text.trim();
            // empty texts are the per-record timekeeping stamps
            if !text.is_empty() {
                out.push(Annotation::new(onset, duration, text));
            }
        }
    }
}

fn pad_field(buf: &mut Vec<u8>, text: &str, width: usize) {
    let bytes = text.as_bytes();
    let n = bytes.len().min(width);
    buf.extend_from_slice(&bytes[..n]);
    buf.extend(std::iter::repeat_n(b' ', width - n));
}

/// Formats a number into at most 8 characters, losing precision if needed.
fn edf_number(value: f64) -> String {
    let plain = format!("{value}");
    if plain.len() <= 8 {
        return plain;
    }
    (0..=6)
        .rev()
        .map(|p| format!("{value:.p$}"))
        .find(|s| s.len() <= 8)
        .unwrap_or_else(|| format!("{}", value.round() as i64))
}

fn tal(onset: f64, duration: Option<f64>, text: &str) -> Vec<u8> {
    let mut out = format!("+{onset}").into_bytes();
    if let Some(d) = duration {
        out.push(0x15);
        out.extend_from_slice(format!("{d}").as_bytes());
    }
    out.push(0x14);
    out.extend_from_slice(text.as_bytes());
    out.push(0x14);
    out.push(0);
    out
}

/// Serializes a recording as EDF+C with one-second data records.
///
/// The sample rate must be a whole number of Hz. A trailing partial record is
/// zero-padded. Each channel's physical range is its data range widened by 1%,
/// so values survive at the 16-bit quantization resolution of that range.
pub fn write_edf(rec: &Recording) -> Result<Vec<u8>, SignalError> {
    let rate = rec.sample_rate_hz();
    if rate.fract() != 0.0 {
        return Err(SignalError::UnsupportedVariant(format!(
            "sample rate {rate} Hz does not fit one-second records"
        )));
    }
    let spr = rate as usize;
    let n = rec.n_samples();
    let n_records = n.div_ceil(spr).max(1);

    let mut record_tals: Vec<Vec<u8>> = (0..n_records).map(|r| tal(r as f64, None, "")).collect();
    for a in rec.annotations() {
        let r = (a.onset_s.floor() as usize).min(n_records - 1);
        record_tals[r].extend(tal(a.onset_s, Some(a.duration_s), &a.label));
    }
    let annot_spr = record_tals
        .iter()
        .map(|t| t.len().div_ceil(2))
        .max()
        .unwrap_or(0)
        .max(16);

    struct Scaled {
        label: String,
        phys_min: String,
        phys_max: String,
        digital: Vec<i16>,
    }

    let mut scaled = Vec::with_capacity(rec.channels().len());
    for (label, row) in rec.channels().iter().zip(rec.samples()) {
        let (lo, hi) = row
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (lo, hi) = if !lo.is_finite() || hi - lo <= 0.0 {
            let c = if lo.is_finite() { lo } else { 0.0 };
            (c - 1.0, c + 1.0)
        } else {
            let margin = 0.01 * (hi - lo);
            (lo - margin, hi + margin)
        };
        let phys_min = edf_number(lo);
        let phys_max = edf_number(hi);
        let pmin: f64 = phys_min.parse().expect("formatted number parses");
        let pmax: f64 = phys_max.parse().expect("formatted number parses");
        let span = f64::from(DIGITAL_MAX - DIGITAL_MIN);
        let digital = row
            .iter()
            .map(|&v| {
                let d = ((v - pmin) / (pmax - pmin) * span + f64::from(DIGITAL_MIN)).round();
                d.clamp(f64::from(DIGITAL_MIN), f64::from(DIGITAL_MAX)) as i16
            })
            .collect();
        scaled.push(Scaled {
            label: label.clone(),
            phys_min,
            phys_max,
            digital,
        });
    }

    let ns = scaled.len() + 1;
    let mut buf = Vec::new();
    pad_field(&mut buf, "0", 8);
    pad_field(&mut buf, "X X X X", 80);
    pad_field(&mut buf, "Startdate X X X X", 80);
    pad_field(&mut buf, "01.01.00", 8);
    pad_field(&mut buf, "00.00.00", 8);
    pad_field(&mut buf, &(FIXED_HEADER + ns * SIGNAL_HEADER).to_string(), 8);
    pad_field(&mut buf, "EDF+C", 44);
    pad_field(&mut buf, &n_records.to_string(), 8);
    pad_field(&mut buf, "1", 8);
    pad_field(&mut buf, &ns.to_string(), 4);

    let annot_min = "-1".to_string();
    let annot_max = "1".to_string();
    let labels: Vec<&str> = scaled
        .iter()
        .map(|s| s.label.as_str())
        .chain([EDF_ANNOTATIONS_LABEL])
        .collect();
    let mins: Vec<&String> = scaled.iter().map(|s| &s.phys_min).chain([&annot_min]).collect();
    let maxs: Vec<&String> = scaled.iter().map(|s| &s.phys_max).chain([&annot_max]).collect();
    let sprs: Vec<usize> = std::iter::repeat_n(spr, scaled.len())
        .chain([annot_spr])
        .collect();

    for l in &labels {
        pad_field(&mut buf, l, 16);
    }
    for _ in 0..ns {
        pad_field(&mut buf, "", 80);
    }
    for i in 0..ns {
        pad_field(&mut buf, if i < scaled.len() { "uV" } else { "" }, 8);
    }
    for m in &mins {
        pad_field(&mut buf, m, 8);
    }
    for m in &maxs {
        pad_field(&mut buf, m, 8);
    }
    for _ in 0..ns {
        pad_field(&mut buf, &DIGITAL_MIN.to_string(), 8);
    }
    for _ in 0..ns {
        pad_field(&mut buf, &DIGITAL_MAX.to_string(), 8);
    }
    for _ in 0..ns {
        pad_field(&mut buf, "", 80);
    }
    for s in &sprs {
        pad_field(&mut buf, &s.to_string(), 8);
    }
    for _ in 0..ns {
        pad_field(&mut buf, "", 32);
    }

    for (r, tals) in record_tals.iter().enumerate() {
        for s in &scaled {
            for i in r * spr..(r + 1) * spr {
                let d = s.digital.get(i).copied().unwrap_or(0);
                buf.extend_from_slice(&d.to_le_bytes());
            }
        }
        let mut annot = tals.clone();
        annot.resize(2 * annot_spr, 0);
        buf.extend_from_slice(&annot);
    }
    Ok(buf)
}
