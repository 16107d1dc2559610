//! Two-class Fisher discriminant with a shrunk shared covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::signal_io::MiClass;

pub const DEFAULT_SHRINKAGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LdaModel {
    /// Positive values favour `Right`.
    pub fn discriminant(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> MiClass {
        if self.discriminant(x) > 0.0 {
            MiClass::Right
        } else {
            MiClass::Left
        }
    }

    /// The point where the discriminant crosses zero, for one-feature models.
    pub fn boundary_1d(&self) -> Option<f64> {
        (self.weights.len() == 1 && self.weights[0] != 0.0).then(|| -self.bias / self.weights[0])
    }
}

/// Pooled within-class covariance shrunk toward `trace/d * I`; the bias carries
/// the log prior ratio so equal means fall back to the larger class.
pub fn lda_fit(train: &[(Vec<f64>, MiClass)], shrinkage: f64) -> Result<LdaModel, EvalError> {
    let d = train.first().map_or(0, |(x, _)| x.len());
    if d == 0 || train.iter().any(|(x, _)| x.len() != d) {
        return Err(EvalError::Data("LDA features must be non-empty and equal length".into()));
    }
    let group = |c: MiClass| -> Vec<DVector<f64>> {
        train
            .iter()
            .filter(|(_, l)| *l == c)
            .map(|(x, _)| DVector::from_column_slice(x))
            .collect()
    };
    let (left, right) = (group(MiClass::Left), group(MiClass::Right));
    if left.is_empty() || right.is_empty() || left.len() + right.len() != train.len() {
        return Err(EvalError::InsufficientTrials("LDA needs Left and Right examples only".into()));
    }
    let mean = |g: &[DVector<f64>]| g.iter().fold(DVector::zeros(d), |acc, x| acc + x) / g.len() as f64;
    let (mu_l, mu_r) = (mean(&left), mean(&right));

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (g, mu) in [(&left, &mu_l), (&right, &mu_r)] {
        for x in g.iter() {
            let c = x - mu;
            cov += &c * c.transpose();
        }
    }
    cov /= (train.len().saturating_sub(2)).max(1) as f64;
    let target = cov.trace() / d as f64;
    let mut shrunk = cov * (1.0 - shrinkage);
    for i in 0..d {
        shrunk[(i, i)] += shrinkage * target;
    }
    let chol = shrunk.cholesky().ok_or(EvalError::SingularCovariance)?;
    let w = chol.solve(&(&mu_r - &mu_l));
    let prior = (right.len() as f64 / left.len() as f64).ln();
    let bias = prior - w.dot(&((&mu_l + &mu_r) * 0.5));
    Ok(LdaModel {
        weights: w.iter().copied().collect(),
        bias,
    })
}

pub fn lda_fit_predict(train: &[(Vec<f64>, MiClass)], test: &[Vec<f64>], shrinkage: f64) -> Result<Vec<MiClass>, EvalError> {
    let model = lda_fit(train, shrinkage)?;
    Ok(test.iter().map(|x| model.predict(x)).collect())
}
