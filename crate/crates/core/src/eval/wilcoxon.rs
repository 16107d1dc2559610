//! Wilcoxon signed-rank test, two-sided.
//!
//! Exact null distribution for up to 25 non-zero differences, counted over
//! doubled ranks so tied mid-ranks stay integral; normal approximation with
//! continuity and tie correction above that.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

pub const MIN_NONZERO_PAIRS: usize = 5;
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    /// Sum of ranks of positive differences `b - a`.
    pub w_plus: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Mid-ranks of `values` (1-based), exact ties share their average rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments reaching each doubled rank sum.
fn null_counts(doubled: &[usize]) -> Vec<f64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

pub fn wilcoxon_signed_rank(paired: &[(f64, f64)]) -> Result<WilcoxonResult, EvalError> {
    let diffs: Vec<f64> = paired.iter().map(|(a, b)| b - a).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n < MIN_NONZERO_PAIRS {
        return Err(EvalError::TooFewPairs { got: n, needed: MIN_NONZERO_PAIRS });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = null_counts(&doubled);
        let observed = (2.0 * w_plus).round() as usize;
        let total = 2f64.powi(n as i32);
        let lower: f64 = counts[..=observed].iter().sum::<f64>() / total;
        let upper: f64 = counts[observed..].iter().sum::<f64>() / total;
        return Ok(WilcoxonResult {
            n,
            w_plus,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(WilcoxonResult {
        n,
        w_plus,
        p_value: (2.0 * normal.sf(z)).min(1.0),
        exact: false,
    })
}
