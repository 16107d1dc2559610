//! Auditory feedback: confidence to pitch, complexity to timbre, energy
//! lateralization to loudness, with a bounded fade so Neutral never cuts hard.

mod wav;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::fusion::{Decision, DecisionClass, FeatureVector};

pub use wav::{encode_pcm16, write_wav, write_wav_to, WavError, BITS_PER_SAMPLE};

pub const SAMPLE_RATE_HZ: u32 = 44_100;
pub const FRAME_DURATION_S: f64 = 0.125;
/// Largest gain change per frame.
pub const FADE_STEP: f64 = 0.2;
pub const MIN_AUDIBLE_GAIN: f64 = 0.1;
/// `|delta_hfd|` at which the waveshaper is fully engaged.
pub const FULL_DISTORTION_DELTA_HFD: f64 = 0.5;
const SHAPER_DRIVE: f64 = 3.0;

/// MIDI numbers of C-major degrees from A3 (220 Hz) to A5 (880 Hz).
pub const SCALE_MIDI: [u8; 15] = [57, 59, 60, 62, 64, 65, 67, 69, 71, 72, 74, 76, 77, 79, 81];

pub fn midi_to_hz(note: u8) -> f64 {
    440.0 * 2f64.powf((note as f64 - 69.0) / 12.0)
}

/// Scale degree `round(p_move * 14)`.
pub fn pitch_for(p_move: f64) -> f64 {
    let top = (SCALE_MIDI.len() - 1) as f64;
    let idx = (p_move.clamp(0.0, 1.0) * top).round() as usize;
    midi_to_hz(SCALE_MIDI[idx])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SonificationParams {
    pub freq_hz: f64,
    pub distortion: f64,
    pub gain: f64,
}

pub fn target_gain(class: DecisionClass, l_idx: f64) -> f64 {
    if class == DecisionClass::Neutral {
        0.0
    } else {
        (l_idx.abs() / 2.0).clamp(MIN_AUDIBLE_GAIN, 1.0)
    }
}

/// One fade step from `prev` toward `target`. A remaining gap within the step
/// lands exactly on the target so silence is reached as 0.0, not 1e-17.
pub fn fade_toward(prev: f64, target: f64) -> f64 {
    let gap = target - prev;
    if gap.abs() <= FADE_STEP + 1e-9 {
        target
    } else {
        prev + FADE_STEP.copysign(gap)
    }
}

pub fn map_params(decision: &Decision, fv: &FeatureVector, prev_gain: f64) -> SonificationParams {
    let distortion = if fv.delta_hfd.is_finite() {
        (fv.delta_hfd.abs() / FULL_DISTORTION_DELTA_HFD).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let l_idx = if fv.l_idx.is_finite() { fv.l_idx } else { 0.0 };
    let target = target_gain(decision.class, l_idx);
    SonificationParams {
        freq_hz: pitch_for(decision.p_move),
        distortion,
        gain: fade_toward(prev_gain.clamp(0.0, 1.0), target),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioFrame {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioFrame {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

fn shape(x: f64, distortion: f64) -> f64 {
    (1.0 - distortion) * x + distortion * (SHAPER_DRIVE * x).tanh() / SHAPER_DRIVE.tanh()
}

/// Renders `duration_s * 44100` samples (ties to even, so 0.125 s is 5512)
/// starting at `phase_in` and returns the phase of the next sample, wrapped to `[0, 2pi)`.
pub fn synthesize(params: &SonificationParams, duration_s: f64, phase_in: f64) -> (AudioFrame, f64) {
    let fs = SAMPLE_RATE_HZ as f64;
    let n = (duration_s.max(0.0) * fs).round_ties_even() as usize;
    let step = TAU * params.freq_hz / fs;
    let gain = params.gain.clamp(0.0, 1.0);
    let d = params.distortion.clamp(0.0, 1.0);
    let samples = (0..n)
        .map(|i| {
            let s = gain * shape((phase_in + step * i as f64).sin(), d);
            s.clamp(-1.0, 1.0)
        })
        .collect();
    let phase_out = (phase_in + step * n as f64).rem_euclid(TAU);
    (
        AudioFrame {
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
        },
        phase_out,
    )
}

/// Frame-to-frame sonification state for one session.
#[derive(Debug, Clone, Default)]
pub struct Sonifier {
    gain: f64,
    phase: f64,
}

impl Sonifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn next_frame(&mut self, decision: &Decision, fv: &FeatureVector) -> (SonificationParams, AudioFrame) {
        let params = map_params(decision, fv, self.gain);
        let (frame, phase) = synthesize(&params, FRAME_DURATION_S, self.phase);
        self.gain = params.gain;
        self.phase = phase;
        (params, frame)
    }
}
