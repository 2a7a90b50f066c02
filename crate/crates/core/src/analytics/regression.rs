use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{AnalyticsError, Metric};
use crate::eval::{EvaluationResult, Regime};

/// Simple linear regression `y = intercept + slope * x` with 95% intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci: [f64; 2],
    pub intercept_ci: [f64; 2],
    /// Residual standard error.
    pub sigma: f64,
    pub x_mean: f64,
    pub sxx: f64,
    /// Two-sided 97.5% Student-t quantile with n - 2 degrees of freedom.
    pub t_quantile: f64,
}

impl OlsFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// 95% confidence band for the mean response at `x`.
    pub fn band(&self, x: f64) -> [f64; 2] {
        let y = self.predict(x);
        let half = self.t_quantile
            * self.sigma
            * (1.0 / self.n as f64 + (x - self.x_mean).powi(2) / self.sxx).sqrt();
        [y - half, y + half]
    }
}

pub fn ols(points: &[(f64, f64)]) -> Result<OlsFit, AnalyticsError> {
    let n = points.len();
    if n < 3 {
        return Err(AnalyticsError::TooFewPoints(n));
    }
    let nf = n as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - x_mean).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(AnalyticsError::DegenerateDesign);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - x_mean) * (p.1 - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let sigma = (sse / (nf - 2.0)).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let se_slope = sigma / sxx.sqrt();
    let se_intercept = sigma * (1.0 / nf + x_mean * x_mean / sxx).sqrt();
    Ok(OlsFit {
        n,
        slope,
        intercept,
        slope_ci: [slope - t * se_slope, slope + t * se_slope],
        intercept_ci: [intercept - t * se_intercept, intercept + t * se_intercept],
        sigma,
        x_mean,
        sxx,
        t_quantile: t,
    })
}

/// (training patient count, metric) per plan; undefined metrics are skipped.
pub fn scaling_points(results: &[EvaluationResult], regime: Regime, metric: Metric) -> Vec<(f64, f64)> {
    results
        .iter()
        .filter_map(|r| {
            let m = r.regime(regime)?.metrics.get(metric)?;
            Some((r.n_train_patients as f64, m))
        })
        .collect()
}

/// OLS of a metric against the training patient count, pooled over plans.
/// Requires plans from at least two n-gram levels and three distinct
/// training sizes.
pub fn scaling_regression(
    results: &[EvaluationResult],
    regime: Regime,
    metric: Metric,
) -> Result<OlsFit, AnalyticsError> {
    let levels: BTreeSet<usize> = results.iter().map(|r| r.plan.ngram_level).collect();
    if levels.len() < 2 {
        return Err(AnalyticsError::InsufficientDesign(format!(
            "results span {} n-gram level(s)",
            levels.len()
        )));
    }
    let points = scaling_points(results, regime, metric);
    let sizes: BTreeSet<u64> = points.iter().map(|p| p.0.to_bits()).collect();
    if sizes.len() < 3 {
        return Err(AnalyticsError::InsufficientDesign(format!(
            "{} distinct training sizes",
            sizes.len()
        )));
    }
    ols(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_line() {
        let f = ols(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-12);
        assert_eq!(f.sigma, 0.0);
    }

    #[test]
    fn constant_metric_has_zero_slope_in_ci() {
        let f = ols(&[(10.0, 0.7), (20.0, 0.7), (30.0, 0.7), (45.0, 0.7)]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert!(f.slope_ci[0] <= 0.0 && f.slope_ci[1] >= 0.0);
    }

    #[test]
    fn degenerate_and_short_designs() {
        assert_eq!(ols(&[(5.0, 1.0), (5.0, 2.0), (5.0, 0.0)]), Err(AnalyticsError::DegenerateDesign));
        assert_eq!(ols(&[(1.0, 1.0), (2.0, 2.0)]), Err(AnalyticsError::TooFewPoints(2)));
    }

    #[test]
    fn t_quantile_reference_value() {
        // Tabulated t_{0.975, 3} = 3.182446.
        let f = ols(&[(0.0, 0.0), (1.0, 1.5), (2.0, 1.0), (3.0, 3.5), (4.0, 3.0)]).unwrap();
        assert!((f.t_quantile - 3.182446).abs() < 1e-5);
        let b = f.band(f.x_mean);
        assert!((b[0] + b[1] - 2.0 * f.predict(f.x_mean)).abs() < 1e-12);
    }
}
