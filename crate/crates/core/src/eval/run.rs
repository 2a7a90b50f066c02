use std::collections::BTreeSet;
use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    make_inner_folds, ChannelRanking, Corpus, EvalError, EvaluationPlan, EvaluationResult, FoldAssignment, Regime,
    RegimeResult,
};
use crate::analytics::{aggregate_patient, Metrics, PatientPrediction, DEFAULT_TAU};
use crate::classifier::{patient_accuracy, train, ClassifierError, ModelSpec, Sample, TrainSchedule};
use crate::montage::{ChannelMask, N_CHANNELS};
use crate::seed::{derive_seed, mix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub base_seed: u64,
    pub k_folds: usize,
    /// Subset sizes evaluated besides the all-channel baseline.
    pub top_k: Vec<usize>,
    /// Subset size used for checkpoint selection and channel maps.
    pub selection_k: usize,
    pub ranking_model: ModelSpec,
    pub final_model: ModelSpec,
    pub schedule: TrainSchedule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            base_seed: crate::seed::DEFAULT_BASE_SEED,
            k_folds: 5,
            top_k: vec![2, 4, 8],
            selection_k: 4,
            ranking_model: ModelSpec::band_logistic(),
            final_model: ModelSpec::band_logistic(),
            schedule: TrainSchedule::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k_folds < 2 {
            return Err(EvalError::Config("k_folds must be at least 2".into()));
        }
        if self.selection_k == 0 || self.top_k.contains(&0) {
            return Err(EvalError::Config("channel subset sizes must be positive".into()));
        }
        self.ranking_model.validate()?;
        self.final_model.validate()?;
        self.schedule.validate()?;
        Ok(())
    }

    pub fn regimes(&self) -> Vec<Regime> {
        std::iter::once(Regime::All)
            .chain(self.top_k.iter().map(|&k| Regime::Top(k)))
            .collect()
    }

    /// Model specs the corpus must be encoded for.
    pub fn specs(&self) -> Vec<ModelSpec> {
        let mut v = vec![self.ranking_model.clone()];
        if self.final_model != self.ranking_model {
            v.push(self.final_model.clone());
        }
        v
    }
}

fn collect_samples<'a>(
    corpus: &'a Corpus,
    enc: usize,
    patients: &[usize],
    channels: impl Fn(usize) -> ChannelMask,
) -> Vec<&'a Sample> {
    let mut out = Vec::new();
    for &p in patients {
        for c in channels(p).iter() {
            out.extend(corpus.channel_samples(enc, p, c));
        }
    }
    out
}

fn check_leakage(
    plan: &EvaluationPlan,
    corpus: &Corpus,
    folds: &[FoldAssignment],
) -> Result<(), EvalError> {
    let test: BTreeSet<usize> = corpus.populations[plan.test].patients.iter().copied().collect();
    let training: BTreeSet<usize> = plan
        .train
        .iter()
        .flat_map(|&p| corpus.populations[p].patients.iter().copied())
        .collect();
    if plan.train.contains(&plan.test) {
        return Err(EvalError::LeakageDetected(format!("plan {} tests on a training population", plan.plan_index)));
    }
    let mut seen_val = BTreeSet::new();
    for f in folds {
        for &p in f.train_patients.iter().chain(&f.val_patients) {
            if test.contains(&p) {
                return Err(EvalError::LeakageDetected(format!(
                    "held-out patient {} in fold {} of plan {}",
                    corpus.patients[p].patient_id, f.fold, plan.plan_index
                )));
            }
            if !training.contains(&p) {
                return Err(EvalError::LeakageDetected(format!(
                    "patient {} in fold {} is outside the training populations",
                    corpus.patients[p].patient_id, f.fold
                )));
            }
        }
        let tr: BTreeSet<usize> = f.train_patients.iter().copied().collect();
        if let Some(&p) = f.val_patients.iter().find(|p| tr.contains(p)) {
            return Err(EvalError::LeakageDetected(format!(
                "patient {} in both train and validation of fold {}",
                corpus.patients[p].patient_id, f.fold
            )));
        }
        for &p in &f.val_patients {
            if !seen_val.insert(p) {
                return Err(EvalError::LeakageDetected(format!(
                    "patient {} validated in more than one fold",
                    corpus.patients[p].patient_id
                )));
            }
        }
    }
    if seen_val != training {
        return Err(EvalError::LeakageDetected("validation folds do not cover the training patients".into()));
    }
    Ok(())
}

/// Descending by key, ties by ascending montage index.
fn rank_by(channels: &[usize], key: impl Fn(usize) -> (f64, f64)) -> Vec<usize> {
    let mut v = channels.to_vec();
    v.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        kb.0.partial_cmp(&ka.0)
            .unwrap_or(Ordering::Equal)
            .then(kb.1.partial_cmp(&ka.1).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    v
}

/// Inner-loop channel ranking: one model per (fold, active channel), scored
/// by patient-level validation accuracy on that channel alone.
pub fn rank_channels(
    plan: &EvaluationPlan,
    folds: &[FoldAssignment],
    corpus: &Corpus,
    cfg: &EvalConfig,
) -> Result<ChannelRanking, EvalError> {
    let enc = corpus
        .spec_index(&cfg.ranking_model)
        .ok_or_else(|| EvalError::Config("corpus not encoded for the ranking model".into()))?;
    let active_mask = plan
        .train
        .iter()
        .flat_map(|&p| corpus.populations[p].patients.iter())
        .fold(ChannelMask::default(), |m, &k| m.union(corpus.patients[k].present));
    let active: Vec<usize> = active_mask.iter().collect();

    let jobs: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| active.iter().map(move |&c| (f, c)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(f, c)| {
            let fold = &folds[f];
            let one = |_| ChannelMask::from_indices([c]);
            let tr = collect_samples(corpus, enc, &fold.train_patients, one);
            let va = collect_samples(corpus, enc, &fold.val_patients, one);
            let seed = mix(derive_seed(cfg.base_seed, plan.plan_index, fold.fold), c as u64);
            match train(&tr, &va, None, &cfg.ranking_model, &cfg.schedule, seed) {
                Ok(out) => Ok(out.checkpoint.val_accuracy),
                Err(ClassifierError::SingleClassTraining | ClassifierError::EmptyTraining) => {
                    // Nothing to learn from: score the untrained model.
                    let model = cfg.ranking_model.build(seed);
                    Ok(patient_accuracy(model.as_ref(), &va))
                }
                Err(e) => Err(EvalError::from(e)),
            }
        })
        .collect::<Result<_, EvalError>>()?;

    let mut fold_accuracy = vec![vec![None; N_CHANNELS]; folds.len()];
    for (&(f, c), &a) in jobs.iter().zip(&scores) {
        fold_accuracy[f][c] = Some(a);
    }
    let mut mean_accuracy = vec![None; N_CHANNELS];
    for &c in &active {
        let sum: f64 = fold_accuracy.iter().map(|row| row[c].unwrap()).sum();
        mean_accuracy[c] = Some(sum / folds.len() as f64);
    }
    let mean = |c: usize| mean_accuracy[c].unwrap_or(f64::NEG_INFINITY);
    let order = rank_by(&active, |c| (mean(c), 0.0));
    let fold_top = fold_accuracy
        .iter()
        .map(|row| {
            let mut r = rank_by(&active, |c| (row[c].unwrap(), mean(c)));
            r.truncate(cfg.selection_k);
            r
        })
        .collect();
    Ok(ChannelRanking {
        active,
        mean_accuracy,
        fold_accuracy,
        order,
        fold_top,
    })
}

/// Runs one outer evaluation: folds, ranking, one final model per regime
/// (trained on fold 1's training split, checkpointed on its validation
/// split under the selection regime) and a single pass over the held-out
/// population.
pub fn run_plan(plan: &EvaluationPlan, corpus: &Corpus, cfg: &EvalConfig) -> Result<EvaluationResult, EvalError> {
    cfg.validate()?;
    let plan_seed = derive_seed(cfg.base_seed, plan.plan_index, 0);
    let folds = make_inner_folds(plan, corpus, cfg.k_folds, plan_seed)?;
    check_leakage(plan, corpus, &folds)?;
    let ranking = rank_channels(plan, &folds, corpus, cfg)?;

    let enc = corpus
        .spec_index(&cfg.final_model)
        .ok_or_else(|| EvalError::Config("corpus not encoded for the final model".into()))?;
    let selection = ChannelMask::from_indices(ranking.top(cfg.selection_k).iter().copied());
    let fold1 = &folds[0];
    let test_patients = &corpus.populations[plan.test].patients;

    let mut regimes = Vec::new();
    for regime in cfg.regimes() {
        let channels: Vec<usize> = match regime {
            Regime::All => Vec::new(),
            Regime::Top(k) => ranking.top(k).to_vec(),
        };
        let fixed = ChannelMask::from_indices(channels.iter().copied());
        let mask_for = |p: usize| match regime {
            Regime::All => corpus.patients[p].present,
            Regime::Top(_) => fixed,
        };
        let tr = collect_samples(corpus, enc, &fold1.train_patients, mask_for);
        let va = collect_samples(corpus, enc, &fold1.val_patients, |_| ChannelMask::all());
        let seed = mix(plan_seed, crate::seed::hash_str(&regime.to_string()));
        let out = train(&tr, &va, Some(&selection), &cfg.final_model, &cfg.schedule, seed)?;
        let model = out.checkpoint.model()?;

        let mut predictions = Vec::with_capacity(test_patients.len());
        for &p in test_patients {
            let samples = collect_samples(corpus, enc, &[p], mask_for);
            let probs: Vec<f64> = samples.iter().map(|s| model.predict(&s.x)).collect();
            let patient = &corpus.patients[p];
            let vote = aggregate_patient(&probs, DEFAULT_TAU)
                .map_err(|_| EvalError::NoFrames(patient.patient_id.clone()))?;
            predictions.push(PatientPrediction {
                patient_id: patient.patient_id.clone(),
                label: patient.label,
                mean_probability: vote.mean,
                predicted: vote.label,
                n_frames: vote.n_frames,
            });
        }
        regimes.push(RegimeResult {
            regime,
            channels,
            checkpoint_epoch: out.checkpoint.epoch,
            checkpoint_val_accuracy: out.checkpoint.val_accuracy,
            metrics: Metrics::from_predictions(&predictions),
            predictions,
        });
    }

    Ok(EvaluationResult {
        train_populations: plan.train.iter().map(|&p| corpus.populations[p].id.clone()).collect(),
        test_population: corpus.populations[plan.test].id.clone(),
        n_train_patients: plan.n_train(&corpus.populations.iter().map(|p| p.patients.len()).collect::<Vec<_>>()),
        plan_seed,
        fold_seeds: folds
            .iter()
            .map(|f| derive_seed(cfg.base_seed, plan.plan_index, f.fold))
            .collect(),
        folds,
        ranking,
        regimes,
        plan: plan.clone(),
    })
}
