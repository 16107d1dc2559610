//! Seeded motor-imagery recordings for demos, tests and the offline harness
//! when no public data is at hand.
//!
//! Two mu-rhythm sources (left and right sensorimotor cortex) are mixed into a
//! small montage over coloured background noise. Imagining a hand suppresses
//! the contralateral source (event-related desynchronization): left-hand trials
//! damp the C4 source, right-hand trials the C3 source.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::signal_io::{Annotation, Recording};

pub const MONTAGE: [&str; 8] = ["FC3", "FC4", "C3", "Cz", "C4", "CP3", "CP4", "Pz"];

/// (left source, right source) weight per montage channel.
const MIXING: [(f64, f64); 8] = [
    (0.6, 0.1),
    (0.1, 0.6),
    (1.0, 0.2),
    (0.4, 0.4),
    (0.2, 1.0),
    (0.6, 0.1),
    (0.1, 0.6),
    (0.15, 0.15),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub sample_rate_hz: f64,
    pub trials_per_class: usize,
    pub imagery_s: f64,
    pub rest_s: f64,
    /// Peak mu amplitude, microvolts.
    pub mu_amplitude: f64,
    pub mu_freq_hz: f64,
    /// Fraction of the contralateral mu amplitude removed during imagery.
    pub erd_depth: f64,
    /// Background noise scale, microvolts.
    pub noise: f64,
    /// Chance per trial of a broadband muscle burst on every channel.
    pub artifact_rate: f64,
}

impl SyntheticParams {
    /// Deep ERD over quiet background: every trial is separable.
    pub fn separable() -> Self {
        Self {
            sample_rate_hz: 160.0,
            trials_per_class: 15,
            imagery_s: 4.0,
            rest_s: 2.0,
            mu_amplitude: 10.0,
            mu_freq_hz: 10.5,
            erd_depth: 0.8,
            noise: 1.0,
            artifact_rate: 0.0,
        }
    }

    /// Shallower ERD, louder background and occasional artifacts.
    pub fn realistic() -> Self {
        Self {
            mu_amplitude: 6.0,
            erd_depth: 0.45,
            noise: 3.0,
            artifact_rate: 0.05,
            ..Self::separable()
        }
    }
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self::realistic()
    }
}

/// Slowly wandering mu oscillation: random-walk phase, jittered envelope.
fn mu_source(n: usize, fs: f64, freq: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut phase = rng.random_range(0.0..TAU);
    let mut env = 1.0;
    (0..n)
        .map(|_| {
            let jitter: f64 = StandardNormal.sample(rng);
            phase += TAU * freq / fs + 0.02 * jitter;
            let e: f64 = StandardNormal.sample(rng);
            env = 0.995 * env + 0.005 * (1.0 + 0.5 * e);
            env.max(0.2) * phase.sin()
        })
        .collect()
}

fn ar1_noise(n: usize, coef: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = (1.0 - coef * coef).sqrt();
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            x = coef * x + scale * w;
            x
        })
        .collect()
}

/// Gain over time for one source given the trial plan; ramps over 0.25 s.
fn erd_envelope(n: usize, fs: f64, trials: &[(f64, f64, bool)], depth: f64) -> Vec<f64> {
    let ramp = 0.25;
    let mut gain = vec![1.0; n];
    for &(onset, dur, suppress) in trials {
        if !suppress {
            continue;
        }
        let lo = (onset * fs) as usize;
        let hi = (((onset + dur) * fs) as usize).min(n);
        for (i, g) in gain.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / fs - onset;
            let w = (t / ramp).min((dur - t) / ramp).clamp(0.0, 1.0);
            *g = 1.0 - depth * w;
        }
    }
    gain
}

/// One subject's run: rest, then alternating rest and imagery blocks in a
/// shuffled balanced order, annotated `T0` (rest), `T1` (left), `T2` (right).
pub fn mi_recording(params: &SyntheticParams, seed: u64) -> Recording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = params.sample_rate_hz;

    let mut classes: Vec<bool> = (0..2 * params.trials_per_class)
        .map(|i| i < params.trials_per_class)
        .collect();
    classes.shuffle(&mut rng);

    let mut annotations = Vec::new();
    // (onset, duration, is_left)
    let mut plan = Vec::new();
    let mut t = 0.0;
    for &is_left in &classes {
        let rest = params.rest_s + rng.random_range(0.0..0.5);
        annotations.push(Annotation::new(t, rest, "T0"));
        t += rest;
        annotations.push(Annotation::new(t, params.imagery_s, if is_left { "T1" } else { "T2" }));
        plan.push((t, params.imagery_s, is_left));
        t += params.imagery_s;
    }
    annotations.push(Annotation::new(t, params.rest_s, "T0"));
    t += params.rest_s;
    let n = (t * fs).ceil() as usize;

    let left_src = mu_source(n, fs, params.mu_freq_hz, &mut rng);
    let right_src = mu_source(n, fs, params.mu_freq_hz * 1.03, &mut rng);
    // right-hand imagery suppresses the left hemisphere and vice versa
    let right_trials: Vec<_> = plan.iter().map(|&(o, d, l)| (o, d, !l)).collect();
    let left_gain = erd_envelope(n, fs, &right_trials, params.erd_depth);
    let right_gain = erd_envelope(n, fs, &plan, params.erd_depth);

    let mut bursts = Vec::new();
    for &(onset, dur, _) in &plan {
        if rng.random::<f64>() < params.artifact_rate {
            let start = onset + rng.random_range(0.0..(dur - 0.5).max(1e-3));
            bursts.push(((start * fs) as usize, ((start + 0.5) * fs) as usize));
        }
    }

    let samples = MIXING
        .iter()
        .map(|&(wl, wr)| {
            let bg = ar1_noise(n, 0.9, &mut rng);
            let mut row: Vec<f64> = (0..n)
                .map(|i| {
                    params.mu_amplitude * (wl * left_gain[i] * left_src[i] + wr * right_gain[i] * right_src[i])
                        + params.noise * bg[i]
                })
                .collect();
            for &(lo, hi) in &bursts {
                for v in row.iter_mut().take(hi.min(n)).skip(lo) {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    *v += 20.0 * params.mu_amplitude * w;
                }
            }
            row
        })
        .collect();

    Recording::new(fs, MONTAGE.iter().map(|s| s.to_string()).collect(), samples, annotations)
        .expect("generator produces a consistent recording")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::population_variance;
    use crate::signal_io::MiClass;

    #[test]
    fn layout() {
        let p = SyntheticParams::separable();
        let rec = mi_recording(&p, 1);
        assert_eq!(rec.channels().len(), 8);
        let lefts = rec.annotations().iter().filter(|a| MiClass::from_annotation(&a.label) == MiClass::Left).count();
        let rights = rec.annotations().iter().filter(|a| MiClass::from_annotation(&a.label) == MiClass::Right).count();
        assert_eq!((lefts, rights), (15, 15));
        assert!(rec.duration_s() > 30.0 * (p.imagery_s + p.rest_s));
    }

    #[test]
    fn deterministic() {
        let p = SyntheticParams::realistic();
        assert_eq!(mi_recording(&p, 9), mi_recording(&p, 9));
        assert_ne!(mi_recording(&p, 9), mi_recording(&p, 10));
    }

    #[test]
    fn contralateral_suppression() {
        let rec = mi_recording(&SyntheticParams::separable(), 3);
        let fs = rec.sample_rate_hz();
        let (c3, c4) = (rec.channel("C3").unwrap(), rec.channel("C4").unwrap());
        for a in rec.annotations() {
            let class = MiClass::from_annotation(&a.label);
            if class == MiClass::Rest {
                continue;
            }
            let lo = ((a.onset_s + 0.5) * fs) as usize;
            let hi = ((a.onset_s + 3.5) * fs) as usize;
            let ratio = (population_variance(&c4[lo..hi]) / population_variance(&c3[lo..hi])).ln();
            match class {
                MiClass::Left => assert!(ratio < 0.0, "{ratio}"),
                _ => assert!(ratio > 0.0, "{ratio}"),
            }
        }
    }
}
