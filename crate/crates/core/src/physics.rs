//! Energy lateralization between the motor-cortex electrodes.

use serde::{Deserialize, Serialize};

use crate::signal_io::{EpochWindow, SignalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Variance guard, in microvolts squared.
    pub epsilon: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { epsilon: 1e-10 }
    }
}

/// Population (1/N) variance.
pub fn population_variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// `ln((Var(C4) + eps) / (Var(C3) + eps))`.
///
/// Positive values mean more power over the right hemisphere (C4).
pub fn lateralization_index(c3: &[f64], c4: &[f64], cfg: &PhysicsConfig) -> f64 {
    let v3 = population_variance(c3) + cfg.epsilon;
    let v4 = population_variance(c4) + cfg.epsilon;
    v4.ln() - v3.ln()
}

pub fn compute_l_idx(window: &EpochWindow, cfg: &PhysicsConfig) -> Result<f64, SignalError> {
    let c3 = window.require_channel("C3")?;
    let c4 = window.require_channel("C4")?;
    Ok(lateralization_index(c3, c4, cfg))
}
