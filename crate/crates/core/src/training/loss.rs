//! Losses and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::tasks::TaskKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Mean squared error over every step and output of a sequence.
    StepMse,
    /// Softmax cross-entropy of the final-step output.
    TerminalCrossEntropy,
}

impl LossKind {
    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Regression => LossKind::StepMse,
            TaskKind::Classification => LossKind::TerminalCrossEntropy,
        }
    }
}

/// `Σ(pred − target)² / Σ(target − mean(target))²`.
pub fn nmse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(format!(
            "prediction is {:?}, target is {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    nmse_slices(pred.as_slice(), target.as_slice())
}

pub(crate) fn nmse_slices(pred: &[f64], target: &[f64]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::UndefinedMetric("empty target".into()));
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let den: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    if den <= 0.0 {
        return Err(Error::UndefinedMetric("target has zero variance".into()));
    }
    let num: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(num / den)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Precondition("cross-entropy needs at least 2 classes".into()));
    }
    if label >= logits.len() {
        return Err(Error::Index {
            index: label,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// Index of the largest logit; ties go to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_examples() {
        let t = Matrix::column(&[1.0, -1.0]);
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        assert_eq!(nmse(&Matrix::column(&[0.0, 0.0]), &t).unwrap(), 1.0);
        let t = Matrix::column(&[1.0, 2.0, 6.0]);
        assert!((nmse(&Matrix::column(&[3.0; 3]), &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            nmse(&t, &Matrix::column(&[2.0; 3])),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(nmse(&t, &Matrix::column(&[2.0; 2])), Err(Error::Dimension(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        assert!((cross_entropy(&[0.3; 5], 2).unwrap() - 5f64.ln()).abs() < 1e-14);
        assert!(cross_entropy(&[1000.0, 0.0], 0).unwrap() < 1e-12);
        let e = |x: f64| x.exp();
        let want = -(e(3.0) / (e(1.0) + e(2.0) + e(3.0))).ln();
        assert!((cross_entropy(&[1.0, 2.0, 3.0], 2).unwrap() - want).abs() < 1e-14);
        assert!(matches!(
            cross_entropy(&[1.0, 2.0], 2),
            Err(Error::Index { index: 2, len: 2 })
        ));
        assert!(cross_entropy(&[1.0], 0).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(argmax(&p), 0);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }
}
