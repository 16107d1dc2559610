//! Explainable motor-imagery neurofeedback: interpretable engines, an artifact
//! veto, a safety gate, sonification, reports and an offline evaluation harness.

pub mod chaos;
pub mod eval;
pub mod fusion;
pub mod physics;
pub mod quantum;
pub mod report;
pub mod session;
pub mod signal_io;
pub mod sonification;
pub mod synthetic;
pub mod telemetry;
pub mod veto;
