use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(truth: &[usize], pred: &[usize]) -> Self {
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == 1, p == 1) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Binary scores, positive class = 1 (fog). Undefined ratios are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Result<Self> {
        let n = c.total();
        if n == 0 {
            return Err(Error::Config("metrics over an empty set".into()));
        }
        let (p1, r1) = (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_));
        let (p0, r0) = (ratio(c.tn, c.tn + c.fn_), ratio(c.tn, c.tn + c.fp));
        let (w1, w0) = (ratio(c.tp + c.fn_, n), ratio(c.tn + c.fp, n));
        Ok(Metrics {
            confusion: c,
            accuracy: ratio(c.tp + c.tn, n),
            precision: p1,
            recall: r1,
            f1: f1(p1, r1),
            weighted_precision: w1 * p1 + w0 * p0,
            weighted_recall: w1 * r1 + w0 * r0,
            weighted_f1: w1 * f1(p1, r1) + w0 * f1(p0, r0),
        })
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!("{} labels vs {} predictions", truth.len(), pred.len())));
        }
        Metrics::from_confusion(Confusion::from_predictions(truth, pred))
    }

    /// Named scores in a fixed order, for aggregation and tables.
    pub fn scores(&self) -> [(&'static str, f64); 7] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("weighted_precision", self.weighted_precision),
            ("weighted_recall", self.weighted_recall),
            ("weighted_f1", self.weighted_f1),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let t = [1, 0, 1, 1, 0];
        let m = Metrics::from_predictions(&t, &t).unwrap();
        for (_, v) in m.scores() {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn always_negative_on_thirty_percent_positive() {
        let truth: Vec<usize> = (0..10).map(|i| usize::from(i < 3)).collect();
        let m = Metrics::from_predictions(&truth, &[0; 10]).unwrap();
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn empty_is_config_error() {
        assert!(matches!(Metrics::from_predictions(&[], &[]), Err(Error::Config(_))));
    }
}
