//! Cross-population evaluation: plan enumeration, nested patient-level
//! folds, inner-loop channel ranking and outer evaluation per channel regime.

mod corpus;
mod folds;
mod plans;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{Metrics, PatientPrediction};
use crate::classifier::ClassifierError;
use crate::cohort::CohortError;
use crate::montage::MontageError;
use crate::signal::SignalError;

pub use corpus::{Corpus, PatientData, PopulationData};
pub use folds::make_inner_folds;
pub use plans::{count_plans, enumerate_plans};
pub use run::{rank_channels, run_plan, EvalConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} training patients, found {found}")]
    TooFewPatients { needed: usize, found: usize },
    #[error("population {0} has patients of a single class")]
    SingleClassPopulation(String),
    #[error("data leakage: {0}")]
    LeakageDetected(String),
    #[error("patient {0} has no frames to score")]
    NoFrames(String),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Montage(#[from] MontageError),
}

/// One outer evaluation: train on populations `train`, test on `test`.
/// Populations are referred to by their index in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub plan_index: usize,
    pub ngram_level: usize,
    pub train: Vec<usize>,
    pub test: usize,
}

impl EvaluationPlan {
    /// Total patient count of the training populations, given the patient
    /// count of every population.
    pub fn n_train(&self, population_sizes: &[usize]) -> usize {
        self.train.iter().map(|&p| population_sizes[p]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// 1-based fold number.
    pub fold: usize,
    pub train_patients: Vec<usize>,
    pub val_patients: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRanking {
    /// Active channels in montage order.
    pub active: Vec<usize>,
    /// Mean inner-fold accuracy per montage channel; `None` if inactive.
    pub mean_accuracy: Vec<Option<f64>>,
    /// `fold_accuracy[f][c]`: validation accuracy of channel `c` in fold `f + 1`.
    pub fold_accuracy: Vec<Vec<Option<f64>>>,
    /// Active channels by descending mean accuracy, ties by montage index.
    pub order: Vec<usize>,
    /// Per-fold top channels (size of the selection regime).
    pub fold_top: Vec<Vec<usize>>,
}

impl ChannelRanking {
    /// The top-`k` prefix of the ranking.
    pub fn top(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }
}

/// Channel regime used at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Regime {
    /// Every channel the patient actually has.
    All,
    /// The top-K ranked channels.
    Top(usize),
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::All => f.write_str("all"),
            Regime::Top(k) => write!(f, "top{k}"),
        }
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(Regime::All);
        }
        s.strip_prefix("top")
            .and_then(|k| k.parse().ok())
            .filter(|&k: &usize| k > 0)
            .map(Regime::Top)
            .ok_or_else(|| format!("unknown regime {s:?}"))
    }
}

impl From<Regime> for String {
    fn from(r: Regime) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Regime {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeResult {
    pub regime: Regime,
    /// Inference channels; empty for [`Regime::All`] (per-patient).
    pub channels: Vec<usize>,
    pub checkpoint_epoch: usize,
    pub checkpoint_val_accuracy: f64,
    pub predictions: Vec<PatientPrediction>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub plan: EvaluationPlan,
    pub train_populations: Vec<String>,
    pub test_population: String,
    /// Total patients across the training populations.
    pub n_train_patients: usize,
    pub plan_seed: u64,
    pub fold_seeds: Vec<u64>,
    pub folds: Vec<FoldAssignment>,
    pub ranking: ChannelRanking,
    pub regimes: Vec<RegimeResult>,
}

impl EvaluationResult {
    pub fn regime(&self, regime: Regime) -> Option<&RegimeResult> {
        self.regimes.iter().find(|r| r.regime == regime)
    }
}
