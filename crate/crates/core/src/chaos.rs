//! Higuchi fractal dimension and its C3/C4 lateralization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal_io::{EpochWindow, SignalError};

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("series of {len} samples is too short for k_max = {k_max} (need {needed})")]
    SeriesTooShort { len: usize, k_max: usize, needed: usize },
    #[error("degenerate series: curve length vanishes at scale k = {k}")]
    DegenerateSeries { k: usize },
    #[error("k_max must be at least 2, got {0}")]
    InvalidScale(usize),
    #[error("series contains non-finite samples")]
    NonFinite,
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosConfig {
    pub k_max: usize,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self { k_max: 10 }
    }
}

/// Mean normalized curve length `L(k)` over the `k` offsets.
fn curve_length(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for m in 0..k {
        // zero-based offset m covers x[m], x[m+k], ...
        let steps = (n - 1 - m) / k;
        let sum: f64 = (1..=steps)
            .map(|i| (x[m + i * k] - x[m + (i - 1) * k]).abs())
            .sum();
        total += sum * (n - 1) as f64 / (steps * k * k) as f64;
    }
    total / k as f64
}

/// Least-squares slope of `ln L(k)` against `ln(1/k)` over `k = 1..=k_max`.
pub fn higuchi_hfd(series: &[f64], cfg: &ChaosConfig) -> Result<f64, ChaosError> {
    let k_max = cfg.k_max;
    if k_max < 2 {
        return Err(ChaosError::InvalidScale(k_max));
    }
    let needed = 2 * k_max + 2;
    if series.len() < needed {
        return Err(ChaosError::SeriesTooShort {
            len: series.len(),
            k_max,
            needed,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ChaosError::NonFinite);
    }

    let mut xs = Vec::with_capacity(k_max);
    let mut ys = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let length = curve_length(series, k);
        if !(length > 0.0) {
            return Err(ChaosError::DegenerateSeries { k });
        }
        xs.push(-(k as f64).ln());
        ys.push(length.ln());
    }

    let n = k_max as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (sxy, sxx) = xs
        .iter()
        .zip(&ys)
        .fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
            (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
        });
    Ok(sxy / sxx)
}

/// Per-channel dimensions and their difference `HFD(C3) - HFD(C4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfdPair {
    pub c3: f64,
    pub c4: f64,
}

impl HfdPair {
    pub fn delta(&self) -> f64 {
        self.c3 - self.c4
    }
}

pub fn hfd_pair(window: &EpochWindow, cfg: &ChaosConfig) -> Result<HfdPair, ChaosError> {
    let c3 = higuchi_hfd(window.require_channel("C3")?, cfg)?;
    let c4 = higuchi_hfd(window.require_channel("C4")?, cfg)?;
    Ok(HfdPair { c3, c4 })
}

pub fn delta_hfd(window: &EpochWindow, cfg: &ChaosConfig) -> Result<f64, ChaosError> {
    hfd_pair(window, cfg).map(|p| p.delta())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Direct transcription of the one-based definition, no shared helpers.
    fn naive_hfd(x: &[f64], k_max: usize) -> f64 {
        let n = x.len();
        let mut pts = Vec::new();
        for k in 1..=k_max {
            let mut acc = 0.0;
            for m in 1..=k {
                let count = (n - m) / k;
                let mut s = 0.0;
                for i in 1..=count {
                    s += (x[m + i * k - 1] - x[m + (i - 1) * k - 1]).abs();
                }
                acc += (n as f64 - 1.0) / (count as f64 * (k * k) as f64) * s;
            }
            pts.push(((1.0 / k as f64).ln(), (acc / k as f64).ln()));
        }
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        (m * sxy - sx * sy) / (m * sxx - sx * sx)
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn sine(n: usize, freq: f64, fs: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect()
    }

    #[test]
    fn line_has_dimension_one() {
        let line: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let hfd = higuchi_hfd(&line, &ChaosConfig { k_max: 10 }).unwrap();
        assert!((0.99..=1.01).contains(&hfd), "{hfd}");
        assert!((hfd - naive_hfd(&line, 10)).abs() < 1e-9);
    }

    #[test]
    fn white_noise_has_dimension_two() {
        let x = noise(4096, 7);
        let hfd = higuchi_hfd(&x, &ChaosConfig::default()).unwrap();
        assert!((1.9..=2.05).contains(&hfd), "{hfd}");
        assert!((hfd - naive_hfd(&x, 10)).abs() < 1e-9);
    }

    #[test]
    fn constant_is_degenerate() {
        assert!(matches!(
            higuchi_hfd(&[4.2; 100], &ChaosConfig::default()),
            Err(ChaosError::DegenerateSeries { k: 1 })
        ));
    }

    #[test]
    fn short_series() {
        assert!(matches!(
            higuchi_hfd(&[0.0, 1.0, 2.0], &ChaosConfig::default()),
            Err(ChaosError::SeriesTooShort { needed: 22, .. })
        ));
        assert!(matches!(higuchi_hfd(&[0.0; 50], &ChaosConfig { k_max: 1 }), Err(ChaosError::InvalidScale(1))));
    }

    #[test]
    fn complexity_ordering() {
        let cfg = ChaosConfig::default();
        let line: Vec<f64> = (0..4096).map(|i| i as f64).collect();
        let l = higuchi_hfd(&line, &cfg).unwrap();
        let s = higuchi_hfd(&sine(4096, 10.0, 160.0), &cfg).unwrap();
        let w = higuchi_hfd(&noise(4096, 3), &cfg).unwrap();
        assert!(l < s && s < w, "{l} {s} {w}");
    }

    #[test]
    fn amplitude_invariance() {
        let cfg = ChaosConfig::default();
        let x = noise(512, 11);
        let base = higuchi_hfd(&x, &cfg).unwrap();
        for c in [-3.0, 0.001, 2.5, 1e4] {
            let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
            assert!((higuchi_hfd(&scaled, &cfg).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn agrees_with_naive_reference() {
        for seed in 0..50 {
            let x = noise(512, 1000 + seed);
            let fast = higuchi_hfd(&x, &ChaosConfig::default()).unwrap();
            assert!((fast - naive_hfd(&x, 10)).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn delta_hfd_cases() {
        let cfg = ChaosConfig::default();
        let x = noise(160, 5);
        let same = EpochWindow::from_c3_c4(x.clone(), x.clone(), 160.0);
        assert_eq!(delta_hfd(&same, &cfg).unwrap(), 0.0);

        let s = sine(160, 10.0, 160.0);
        let w = EpochWindow::from_c3_c4(x.clone(), s.clone(), 160.0);
        let d = delta_hfd(&w, &cfg).unwrap();
        assert!(d > 0.0);
        assert!((d - (naive_hfd(&x, 10) - naive_hfd(&s, 10))).abs() < 1e-9);

        let swapped = EpochWindow::from_c3_c4(s, x, 160.0);
        assert_eq!(delta_hfd(&swapped, &cfg).unwrap(), -d);
    }
}
