//! Geometric confidence on the Bloch sphere.
//!
//! A fused evidence score sets a polar target angle; the displayed state walks
//! toward it at a bounded angular speed, and the move probability is the
//! squared overlap with the |1> pole, `sin^2(theta / 2)`. The azimuth only
//! carries the complexity lateralization for display.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumConfig {
    /// Largest polar step per frame, radians.
    pub omega_max: f64,
    /// Score-to-angle steepness.
    pub gain: f64,
}

impl Default for QuantumConfig {
    fn default() -> Self {
        Self {
            omega_max: 0.15,
            gain: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumState {
    pub theta: f64,
    pub phi: f64,
    pub p_move: f64,
}

impl QuantumState {
    pub fn new(theta: f64, phi: f64) -> Self {
        let theta = theta.clamp(0.0, PI);
        Self {
            theta,
            phi: phi.rem_euclid(TAU),
            p_move: p_move(theta),
        }
    }

    /// Equator: no evidence either way, `p_move = 0.5`.
    pub fn neutral() -> Self {
        Self::new(PI / 2.0, 0.0)
    }

    /// Sets the display azimuth from a complexity lateralization;
    /// `[-1, 1]` spans the full circle, zero sits at `pi`.
    pub fn with_delta_hfd(mut self, delta_hfd: f64) -> Self {
        self.phi = (PI * (delta_hfd.clamp(-1.0, 1.0) + 1.0)).rem_euclid(TAU);
        self
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `pi * logistic(gain * score)`: strictly increasing, `pi/2` at zero.
pub fn score_to_theta(score: f64, gain: f64) -> f64 {
    PI * logistic(gain * score)
}

/// `sin^2(theta / 2)`, evaluated as `(1 + sin(theta - pi/2)) / 2` so that the
/// float anchors `0`, `FRAC_PI_2` and `PI` map to exactly 0, 0.5 and 1.
pub fn p_move(theta: f64) -> f64 {
    0.5 + 0.5 * (theta - FRAC_PI_2).sin()
}

/// Moves `theta` toward the target by at most `omega_max`; the azimuth is kept.
pub fn update_state(prev: &QuantumState, theta_target: f64, cfg: &QuantumConfig) -> QuantumState {
    let target = theta_target.clamp(0.0, PI);
    let gap = target - prev.theta;
    let theta = if gap.abs() <= cfg.omega_max {
        target
    } else {
        prev.theta + cfg.omega_max.copysign(gap)
    };
    QuantumState::new(theta, prev.phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn theta_mapping() {
        assert_eq!(score_to_theta(0.0, 2.0), PI / 2.0);
        assert!((score_to_theta(1e6, 1.0) - PI).abs() < 1e-12);
        let expected = PI / (1.0 + (-1.0f64).exp());
        assert!((score_to_theta(1.0, 1.0) - expected).abs() < 1e-15);
        assert!((score_to_theta(1.0, 1.0) - 2.296_688_259_967_819).abs() < 1e-12);
    }

    #[test]
    fn p_move_poles() {
        assert_eq!(p_move(0.0), 0.0);
        assert_eq!(p_move(PI), 1.0);
        assert_eq!(p_move(PI / 2.0), 0.5);
        for t in [0.3, 1.1, 2.0, 3.0] {
            assert!((p_move(t) - (t / 2.0).sin().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn clamped_step() {
        let cfg = QuantumConfig { omega_max: 0.1, gain: 1.0 };
        let s = update_state(&QuantumState::new(0.0, 0.0), PI, &cfg);
        assert_eq!(s.theta, 0.1);
        let s = update_state(&QuantumState::new(1.0, 0.0), 1.05, &cfg);
        assert_eq!(s.theta, 1.05);
    }

    #[test]
    fn closed_form_approach() {
        let cfg = QuantumConfig { omega_max: 0.1, gain: 1.0 };
        let (theta0, target) = (0.2, 2.9);
        let mut s = QuantumState::new(theta0, 0.0);
        for n in 1..=50 {
            s = update_state(&s, target, &cfg);
            let expected = ((theta0 - target).abs() - n as f64 * 0.1).max(0.0);
            assert!(((s.theta - target).abs() - expected).abs() < 1e-12, "n = {n}");
            assert_eq!(s.p_move, p_move(s.theta));
        }
    }

    #[test]
    fn idempotent_at_target() {
        let s = QuantumState::new(1.3, 2.0);
        assert_eq!(update_state(&s, 1.3, &QuantumConfig::default()), s);
    }

    #[test]
    fn phi_display_rule() {
        assert_eq!(QuantumState::neutral().with_delta_hfd(0.0).phi, PI);
        assert_eq!(QuantumState::neutral().with_delta_hfd(-1.0).phi, 0.0);
        assert_eq!(QuantumState::neutral().with_delta_hfd(1.0).phi, 0.0);
        let s = QuantumState::new(1.0, 0.0).with_delta_hfd(0.5);
        assert_eq!(s.p_move, p_move(1.0));
    }

    proptest! {
        #[test]
        fn bounded_change(theta in 0.0..PI, target in 0.0..PI) {
            let cfg = QuantumConfig::default();
            let prev = QuantumState::new(theta, 0.0);
            let next = update_state(&prev, target, &cfg);
            prop_assert!((next.p_move - prev.p_move).abs() <= 0.075);
            prop_assert!((next.p_move - p_move(next.theta)).abs() < 1e-12);
            prop_assert!((0.0..=PI).contains(&next.theta));
        }

        #[test]
        fn score_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0) {
            prop_assume!(a < b);
            prop_assert!(score_to_theta(a, 2.0) <= score_to_theta(b, 2.0));
        }
    }
}
