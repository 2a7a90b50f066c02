use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Metric};
use crate::eval::{EvaluationResult, Regime};

/// Directional single-population transfer: rows are training populations,
/// columns are test populations; the diagonal is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub regime: Regime,
    pub metric: Metric,
    pub populations: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl TransferMatrix {
    pub fn get(&self, train: usize, test: usize) -> Option<f64> {
        self.cells[train][test]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("train\\test\t{}\n", self.populations.join("\t"));
        for (i, row) in self.cells.iter().enumerate() {
            out.push_str(&self.populations[i]);
            for cell in row {
                out.push('\t');
                out.push_str(&fmt_opt(*cell));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.4}"))
}

pub fn build_transfer_matrix(
    results: &[EvaluationResult],
    populations: &[String],
    regime: Regime,
    metric: Metric,
) -> Result<TransferMatrix, AnalyticsError> {
    let mut cells = vec![vec![None; populations.len()]; populations.len()];
    for (i, a) in populations.iter().enumerate() {
        for (j, b) in populations.iter().enumerate() {
            if i == j {
                continue;
            }
            let r = results
                .iter()
                .find(|r| r.train_populations.len() == 1 && &r.train_populations[0] == a && &r.test_population == b)
                .and_then(|r| r.regime(regime))
                .ok_or_else(|| AnalyticsError::MissingPlan {
                    train: a.clone(),
                    test: b.clone(),
                })?;
            cells[i][j] = r.metrics.get(metric);
        }
    }
    Ok(TransferMatrix {
        regime,
        metric,
        populations: populations.to_vec(),
        cells,
    })
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n_plans: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; undefined below two plans.
    pub sd: Option<f64>,
}

/// Mean and sample standard deviation of a metric over all plans per
/// n-gram level.
pub fn level_summary(results: &[EvaluationResult], regime: Regime, metric: Metric) -> Vec<LevelSummary> {
    let mut by_level: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in results {
        let entry = by_level.entry(r.plan.ngram_level).or_default();
        if let Some(v) = r.regime(regime).and_then(|x| x.metrics.get(metric)) {
            entry.push(v);
        }
    }
    by_level
        .into_iter()
        .map(|(level, v)| {
            let (mean, sd) = mean_sd(&v);
            LevelSummary {
                level,
                n_plans: v.len(),
                mean,
                sd,
            }
        })
        .collect()
}

/// Accuracy standard deviation per n-gram level.
pub fn stability(results: &[EvaluationResult], regime: Regime) -> Vec<(usize, Option<f64>)> {
    level_summary(results, regime, Metric::Accuracy)
        .into_iter()
        .map(|s| (s.level, s.sd))
        .collect()
}

/// One cell group of the per-test-population table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub test_population: String,
    pub level: usize,
    pub regime: Regime,
    pub n_plans: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

/// Metric mean and spread per (test population, n-gram level, regime).
pub fn level_table(
    results: &[EvaluationResult],
    populations: &[String],
    regimes: &[Regime],
    metric: Metric,
) -> Vec<LevelRow> {
    let mut rows = Vec::new();
    let max_level = results.iter().map(|r| r.plan.ngram_level).max().unwrap_or(0);
    for t in populations {
        for level in 1..=max_level {
            let plans: Vec<&EvaluationResult> = results
                .iter()
                .filter(|r| &r.test_population == t && r.plan.ngram_level == level)
                .collect();
            if plans.is_empty() {
                continue;
            }
            for &regime in regimes {
                let v: Vec<f64> = plans
                    .iter()
                    .filter_map(|r| r.regime(regime).and_then(|x| x.metrics.get(metric)))
                    .collect();
                let (mean, sd) = mean_sd(&v);
                rows.push(LevelRow {
                    test_population: t.clone(),
                    level,
                    regime,
                    n_plans: v.len(),
                    mean,
                    sd,
                });
            }
        }
    }
    rows
}
