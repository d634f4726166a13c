//! Binary classification metrics: confusion counts, precision, recall, F1,
//! accuracy and area under the precision-recall curve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples")]
    Empty,
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("score {0} at index {1} outside [0, 1]")]
    Score(f64, usize),
    #[error("label {0} at index {1} is not 0 or 1")]
    Label(u8, usize),
    #[error("average precision is undefined without positive labels")]
    NoPositives,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn check(probs: &[f64], labels: &[u8]) -> Result<(), MetricsError> {
    if probs.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some((i, &p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(MetricsError::Score(p, i));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
        return Err(MetricsError::Label(l, i));
    }
    Ok(())
}

/// Counts with a sample predicted positive iff `prob >= threshold`.
pub fn confusion(probs: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion, MetricsError> {
    check(probs, labels)?;
    let mut c = Confusion::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Step-wise average precision, `sum (R_n - R_{n-1}) P_n` over descending
/// distinct scores; tied scores enter as one threshold.
pub fn auprc(probs: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    check(probs, labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = probs[order[i]];
        while i < order.len() && probs[order[i]] == score {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// `None` when the evaluated set has no positives.
    pub auprc: Option<f64>,
}

impl EvalReport {
    pub fn from_counts(counts: Confusion, auprc: Option<f64>) -> Self {
        Self {
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            accuracy: counts.accuracy(),
            auprc,
        }
    }

    pub fn compute(probs: &[f64], labels: &[u8], threshold: f64) -> Result<Self, MetricsError> {
        let counts = confusion(probs, labels, threshold)?;
        let ap = match auprc(probs, labels) {
            Ok(ap) => Some(ap),
            Err(MetricsError::NoPositives) => None,
            Err(e) => return Err(e),
        };
        Ok(Self::from_counts(counts, ap))
    }

    /// Fixed-order human-readable summary.
    pub fn summary(&self) -> String {
        let ap = self.auprc.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
        format!(
            "f1        {:.4}\nrecall    {:.4}\nprecision {:.4}\naccuracy  {:.4}\nauprc     {}\ntp {} fp {} tn {} fn {}",
            self.f1, self.recall, self.precision, self.accuracy, ap, self.counts.tp, self.counts.fp, self.counts.tn,
            self.counts.fn_
        )
    }
}
