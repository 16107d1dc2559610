//! Session reports: a deterministic rule-based renderer and a remote text
//! generator behind a fixed guardrail template. The remote path never fails
//! outward; any problem yields the rule-based report instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::DecisionReason;
use crate::session::{FeedbackFrame, SessionRecord};
use crate::signal_io::MiClass;

pub const ENDPOINT_ENV: &str = "NEUROFEEDBACK_LLM_ENDPOINT";
pub const TEMPLATE_ID: &str = "session-summary-v1";
pub const CONSTRAINTS: [&str; 3] = ["no-diagnosis", "advice-only", "cite-metrics"];

pub const VETO_RATE_LIMIT: f64 = 0.3;
pub const WEAK_LATERALIZATION: f64 = 0.1;
pub const AMBIGUITY_RATE_LIMIT: f64 = 0.5;

pub const HUMAN_VERIFICATION_FOOTER: &str =
    "This report requires human verification by a qualified clinician. It is advisory only and is not a diagnosis.";
pub const ARTIFACT_ADVICE: &str =
    "Many frames were rejected as artifacts: relax jaw/face muscles and keep the head still.";
pub const WEAK_LATERALIZATION_ADVICE: &str =
    "Hemispheric lateralization was weak: imagine one hand at a time and make the movement vivid.";
pub const CONSISTENCY_ADVICE: &str =
    "Many frames fell in the ambiguity zone: keep one imagery strategy consistent across trials.";

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("session has no frames")]
    EmptySession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub trial_count: usize,
    pub mean_l_idx: f64,
    pub mean_delta_hfd: f64,
    pub mean_p_move: f64,
    pub veto_rate: f64,
    pub ambiguity_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_accuracy: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportSource {
    RuleBased,
    RemoteLLM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalReport {
    pub body: String,
    pub source: ReportSource,
    /// Set only by a human reviewer, never at generation.
    pub verified: bool,
}

pub fn summarize(session: &SessionRecord) -> Result<MetricsSummary, ReportError> {
    summarize_frames(&session.frames)
}

/// Means over frames that were neither vetoed nor degenerate; rates over all
/// frames.
pub fn summarize_frames(frames: &[FeedbackFrame]) -> Result<MetricsSummary, ReportError> {
    if frames.is_empty() {
        return Err(ReportError::EmptySession);
    }
    let n = frames.len() as f64;
    let vetoed = frames.iter().filter(|f| f.veto.rejected).count();
    let ambiguous = frames
        .iter()
        .filter(|f| f.decision.reason == DecisionReason::AmbiguityZone)
        .count();
    let usable: Vec<&FeedbackFrame> = frames
        .iter()
        .filter(|f| !f.veto.rejected && f.decision.reason != DecisionReason::DegenerateSignal)
        .collect();
    let mean = |get: fn(&FeedbackFrame) -> f64| {
        if usable.is_empty() {
            0.0
        } else {
            usable.iter().map(|f| get(f)).sum::<f64>() / usable.len() as f64
        }
    };

    let mut per_class = BTreeMap::new();
    for class in [MiClass::Left, MiClass::Right] {
        let labelled: Vec<&FeedbackFrame> = frames.iter().filter(|f| f.label == Some(class)).collect();
        if !labelled.is_empty() {
            let hits = labelled.iter().filter(|f| f.decision.class.matches(class)).count();
            per_class.insert(class.as_str().to_string(), hits as f64 / labelled.len() as f64);
        }
    }

    Ok(MetricsSummary {
        trial_count: frames.len(),
        mean_l_idx: mean(|f| f.l_idx),
        mean_delta_hfd: mean(|f| f.delta_hfd),
        mean_p_move: mean(|f| f.p_move),
        veto_rate: vetoed as f64 / n,
        ambiguity_rate: ambiguous as f64 / n,
        per_class_accuracy: (!per_class.is_empty()).then_some(per_class),
    })
}

fn advice(summary: &MetricsSummary) -> Vec<&'static str> {
    let mut out = Vec::new();
    if summary.veto_rate > VETO_RATE_LIMIT {
        out.push(ARTIFACT_ADVICE);
    }
    if summary.mean_l_idx.abs() < WEAK_LATERALIZATION {
        out.push(WEAK_LATERALIZATION_ADVICE);
    }
    if summary.ambiguity_rate > AMBIGUITY_RATE_LIMIT {
        out.push(CONSISTENCY_ADVICE);
    }
    out
}

pub fn render_rule_report(summary: &MetricsSummary) -> ClinicalReport {
    let mut body = String::new();
    let _ = writeln!(body, "Neurofeedback session report");
    let _ = writeln!(body);
    let _ = writeln!(body, "Frames: {}", summary.trial_count);
    let _ = writeln!(body, "Artifact veto rate: {:.1}%", 100.0 * summary.veto_rate);
    let _ = writeln!(body, "Ambiguity rate: {:.1}%", 100.0 * summary.ambiguity_rate);
    let _ = writeln!(body, "Mean energy lateralization (L_idx): {:+.4}", summary.mean_l_idx);
    let _ = writeln!(body, "Mean complexity lateralization (dHFD): {:+.4}", summary.mean_delta_hfd);
    let _ = writeln!(body, "Mean move probability (P_move): {:.4}", summary.mean_p_move);
    if let Some(acc) = &summary.per_class_accuracy {
        for (class, a) in acc {
            let _ = writeln!(body, "Agreement on {class} trials: {:.1}%", 100.0 * a);
        }
    }
    let tips = advice(summary);
    if !tips.is_empty() {
        let _ = writeln!(body);
        let _ = writeln!(body, "Advice:");
        for tip in tips {
            let _ = writeln!(body, "- {tip}");
        }
    }
    let _ = writeln!(body);
    let _ = writeln!(body, "{HUMAN_VERIFICATION_FOOTER}");
    ClinicalReport {
        body,
        source: ReportSource::RuleBased,
        verified: false,
    }
}

#[derive(Serialize)]
struct ReportRequest<'a> {
    template_id: &'a str,
    metrics: &'a MetricsSummary,
    constraints: [&'a str; 3],
}

pub fn request_body(summary: &MetricsSummary) -> String {
    serde_json::to_string(&ReportRequest {
        template_id: TEMPLATE_ID,
        metrics: summary,
        constraints: CONSTRAINTS,
    })
    .expect("summary serializes")
}

fn post(endpoint: &str, body: String, timeout: Duration) -> Result<String, String> {
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .connect_timeout(timeout)
        .build()
        .map_err(|e| e.to_string())?;
    let resp = client
        .post(endpoint)
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(body)
        .send()
        .map_err(|e| e.to_string())?;
    let status = resp.status();
    if status != reqwest::StatusCode::OK {
        return Err(format!("status {status}"));
    }
    let text = resp.text().map_err(|e| e.to_string())?;
    if text.trim().is_empty() {
        return Err("empty response body".into());
    }
    Ok(text)
}

/// Posts the guardrail template to `endpoint`. Returns the remote text on
/// HTTP 200 and the rule-based report on anything else, within `timeout`
/// plus thread wake-up time.
pub fn request_llm_report(summary: &MetricsSummary, endpoint: &str, timeout: Duration) -> ClinicalReport {
    let (tx, rx) = mpsc::channel();
    let body = request_body(summary);
    let url = endpoint.to_string();
    // the request thread is detached; a late reply lands in a dropped channel
    thread::spawn(move || {
        let _ = tx.send(post(&url, body, timeout));
    });
    match rx.recv_timeout(timeout) {
        Ok(Ok(mut text)) => {
            if !text.contains(HUMAN_VERIFICATION_FOOTER) {
                if !text.ends_with('\n') {
                    text.push('\n');
                }
                text.push('\n');
                text.push_str(HUMAN_VERIFICATION_FOOTER);
                text.push('\n');
            }
            ClinicalReport {
                body: text,
                source: ReportSource::RemoteLLM,
                verified: false,
            }
        }
        Ok(Err(e)) => {
            log::warn!("report endpoint {endpoint} failed: {e}; using rule-based report");
            render_rule_report(summary)
        }
        Err(_) => {
            log::warn!("report endpoint {endpoint} timed out after {timeout:?}; using rule-based report");
            render_rule_report(summary)
        }
    }
}

/// Remote report when an endpoint is given, otherwise the rule-based one.
pub fn generate_report(summary: &MetricsSummary, endpoint: Option<&str>, timeout: Duration) -> ClinicalReport {
    match endpoint {
        Some(url) if !url.trim().is_empty() => request_llm_report(summary, url, timeout),
        _ => render_rule_report(summary),
    }
}
