//! PhysioNet EEG Motor Movement/Imagery layout: `S001/S001R04.edf`.
//!
//! Runs 4, 8 and 12 are left-versus-right fist imagery; `T1` marks the left
//! fist and `T2` the right fist.

use std::path::{Path, PathBuf};

use super::{extract_trials, EvalConfig, EvalError};
use crate::signal_io::EpochWindow;
use crate::signal_io::{read_edf, Recording};

pub const IMAGERY_RUNS: [u32; 3] = [4, 8, 12];

pub fn subject_id(subject: u32) -> String {
    format!("S{subject:03}")
}

/// Accepts both the nested layout and a flat directory of run files.
pub fn run_path(data_dir: &Path, subject: u32, run: u32) -> Option<PathBuf> {
    let id = subject_id(subject);
    let file = format!("{id}R{run:02}.edf");
    [data_dir.join(&id).join(&file), data_dir.join(&file)]
        .into_iter()
        .find(|p| p.is_file())
}

pub fn load_subject(data_dir: &Path, subject: u32) -> Result<Vec<Recording>, EvalError> {
    IMAGERY_RUNS
        .iter()
        .map(|&run| {
            let path = run_path(data_dir, subject, run).ok_or_else(|| {
                EvalError::Data(format!(
                    "missing {}R{run:02}.edf under {}",
                    subject_id(subject),
                    data_dir.display()
                ))
            })?;
            read_edf(&path).map_err(|e| EvalError::Data(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Trials of runs 4, 8 and 12 per subject, keyed `S###`.
pub fn physionet_cohort(
    data_dir: &Path,
    subjects: &[u32],
    cfg: &EvalConfig,
) -> Result<Vec<(String, Vec<EpochWindow>)>, EvalError> {
    subjects
        .iter()
        .map(|&s| {
            let mut trials = Vec::new();
            for rec in load_subject(data_dir, s)? {
                trials.extend(extract_trials(&rec, cfg)?);
            }
            Ok((subject_id(s), trials))
        })
        .collect()
}
