use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

/// Soft-voting threshold.
pub const DEFAULT_TAU: f64 = 0.5;

/// Result of soft voting over one patient's frame probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub mean: f64,
    pub label: u8,
    pub n_frames: usize,
}

/// Mean frame probability, thresholded inclusively at `tau`.
pub fn aggregate_patient(probs: &[f64], tau: f64) -> Result<Vote, AnalyticsError> {
    if probs.is_empty() {
        return Err(AnalyticsError::EmptyFrameSet);
    }
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    Ok(Vote {
        mean,
        label: (mean >= tau) as u8,
        n_frames: probs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientPrediction {
    pub patient_id: String,
    /// True label.
    pub label: u8,
    pub mean_probability: f64,
    pub predicted: u8,
    pub n_frames: usize,
}

/// Binary confusion-matrix metrics. Precision, recall and F1 are `None`
/// where their denominators vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Metrics from (predicted, actual) pairs.
pub fn confusion_metrics(pairs: &[(u8, u8)]) -> Metrics {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for &(p, y) in pairs {
        match (p, y) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let n = pairs.len();
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Metrics {
        n,
        tp,
        fp,
        tn,
        fn_,
        accuracy: if n > 0 { (tp + tn) as f64 / n as f64 } else { 0.0 },
        precision,
        recall,
        f1,
    }
}

/// Patient-level metrics; both maps must cover the same patient ids.
pub fn patient_metrics(
    predictions: &BTreeMap<String, u8>,
    labels: &BTreeMap<String, u8>,
) -> Result<Metrics, AnalyticsError> {
    if let Some(id) = predictions
        .keys()
        .find(|k| !labels.contains_key(*k))
        .or_else(|| labels.keys().find(|k| !predictions.contains_key(*k)))
    {
        return Err(AnalyticsError::IdMismatch(id.clone()));
    }
    let pairs: Vec<(u8, u8)> = predictions.iter().map(|(k, &p)| (p, labels[k])).collect();
    Ok(confusion_metrics(&pairs))
}

impl Metrics {
    pub fn from_predictions(preds: &[PatientPrediction]) -> Metrics {
        let pairs: Vec<(u8, u8)> = preds.iter().map(|p| (p.predicted, p.label)).collect();
        confusion_metrics(&pairs)
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => Some(self.accuracy),
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn soft_vote_examples() {
        let v = aggregate_patient(&[0.9, 0.2, 0.6], 0.5).unwrap();
        assert!((v.mean - 1.7 / 3.0).abs() < 1e-12);
        assert_eq!(v.label, 1);
        assert_eq!(aggregate_patient(&[0.5], 0.5).unwrap().label, 1);
        assert_eq!(aggregate_patient(&[], 0.5), Err(AnalyticsError::EmptyFrameSet));
    }

    #[test]
    fn metric_examples() {
        let m = confusion_metrics(&[(1, 1), (1, 0), (0, 0), (0, 1)]);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.precision, Some(0.5));
        assert_eq!(m.recall, Some(0.5));
        assert_eq!(m.f1, Some(0.5));

        let m = confusion_metrics(&[(1, 1), (0, 0)]);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, Some(1.0), Some(1.0), Some(1.0)));

        let m = confusion_metrics(&[(0, 1), (0, 0)]);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn id_mismatch() {
        let p: BTreeMap<String, u8> = [("a".to_string(), 1)].into();
        let l: BTreeMap<String, u8> = [("b".to_string(), 1)].into();
        assert!(matches!(patient_metrics(&p, &l), Err(AnalyticsError::IdMismatch(_))));
    }

    proptest! {
        #[test]
        fn vote_matches_explicit_loop(probs in proptest::collection::vec(0.0f64..=1.0, 1..40), tau in 0.0f64..=1.0) {
            let mut s = 0.0;
            for p in &probs { s += p; }
            let mean = s / probs.len() as f64;
            let v = aggregate_patient(&probs, tau).unwrap();
            prop_assert!((v.mean - mean).abs() < 1e-12);
            prop_assert_eq!(v.label, if mean >= tau { 1 } else { 0 });
        }

        #[test]
        fn metric_bounds(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..50)) {
            let m = confusion_metrics(&pairs);
            prop_assert_eq!(m.tp + m.fp + m.tn + m.fn_, pairs.len());
            for v in [Some(m.accuracy), m.precision, m.recall, m.f1].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
