//! Common spatial patterns.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::signal_io::EpochWindow;

/// Ridge added to each class covariance, as a fraction of its mean eigenvalue.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspModel {
    /// One spatial filter per row, `n_channels` weights each.
    pub filters: Vec<Vec<f64>>,
    /// Generalized eigenvalue of each kept filter, same order.
    pub eigenvalues: Vec<f64>,
}

/// Trace-normalized spatial covariance of one demeaned trial.
fn normalized_covariance(w: &EpochWindow) -> DMatrix<f64> {
    let (c, n) = (w.n_channels(), w.n_samples());
    let x = DMatrix::from_fn(c, n, |i, j| w.data[i][j]);
    let means = x.column_mean();
    let centred = DMatrix::from_fn(c, n, |i, j| x[(i, j)] - means[i]);
    let cov = &centred * centred.transpose();
    let tr = cov.trace();
    if tr > 0.0 {
        cov / tr
    } else {
        cov
    }
}

fn class_covariance(trials: &[EpochWindow], n_channels: usize) -> DMatrix<f64> {
    let mut sum = DMatrix::zeros(n_channels, n_channels);
    for t in trials {
        sum += normalized_covariance(t);
    }
    sum /= trials.len() as f64;
    let ridge = COVARIANCE_RIDGE * sum.trace() / n_channels as f64;
    for i in 0..n_channels {
        sum[(i, i)] += ridge;
    }
    sum
}

/// Solves `S_a w = lambda (S_a + S_b) w` by whitening the composite covariance
/// and keeps `n_components / 2` filters from each end of the spectrum.
pub fn csp_fit(trials_a: &[EpochWindow], trials_b: &[EpochWindow], n_components: usize) -> Result<CspModel, EvalError> {
    for (trials, which) in [(trials_a, "a"), (trials_b, "b")] {
        if trials.len() < 2 {
            return Err(EvalError::InsufficientTrials(format!(
                "CSP needs at least 2 trials in class {which}, got {}",
                trials.len()
            )));
        }
    }
    let c = trials_a[0].n_channels();
    if trials_a.iter().chain(trials_b).any(|t| t.n_channels() != c) {
        return Err(EvalError::ChannelMismatch);
    }
    if n_components == 0 || n_components % 2 != 0 || n_components > c {
        return Err(EvalError::InvalidComponents { requested: n_components, channels: c });
    }

    let sa = class_covariance(trials_a, c);
    let sb = class_covariance(trials_b, c);
    let composite = SymmetricEigen::new(&sa + &sb);
    let max_ev = composite.eigenvalues.max();
    if !(max_ev > 0.0) || composite.eigenvalues.iter().any(|&d| !(d > max_ev * 1e-14)) {
        return Err(EvalError::SingularCovariance);
    }
    let inv_sqrt = DMatrix::from_diagonal(&composite.eigenvalues.map(|d| 1.0 / d.sqrt()));
    let whiten = inv_sqrt * composite.eigenvectors.transpose();
    let s = &whiten * &sa * whiten.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);

    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let half = n_components / 2;
    let keep: Vec<usize> = order[..half].iter().chain(&order[c - half..]).copied().collect();

    let all = eig.eigenvectors.transpose() * whiten;
    Ok(CspModel {
        filters: keep.iter().map(|&k| all.row(k).iter().copied().collect()).collect(),
        eigenvalues: keep.iter().map(|&k| eig.eigenvalues[k]).collect(),
    })
}

/// Every generalized eigenvalue, descending; used by diagnostics and tests.
pub fn csp_spectrum(trials_a: &[EpochWindow], trials_b: &[EpochWindow]) -> Result<Vec<f64>, EvalError> {
    let c = trials_a.first().ok_or(EvalError::InsufficientTrials("no trials".into()))?.n_channels();
    csp_fit(trials_a, trials_b, c - c % 2).map(|m| {
        let mut ev = m.eigenvalues;
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    })
}

impl CspModel {
    /// Normalized log-variance of each filtered component.
    pub fn features(&self, w: &EpochWindow) -> Vec<f64> {
        let vars: Vec<f64> = self
            .filters
            .iter()
            .map(|f| {
                let y: Vec<f64> = (0..w.n_samples())
                    .map(|t| f.iter().zip(&w.data).map(|(a, row)| a * row[t]).sum())
                    .collect();
                crate::physics::population_variance(&y)
            })
            .collect();
        let total: f64 = vars.iter().sum();
        vars.iter().map(|v| (v / total).ln()).collect()
    }
}
