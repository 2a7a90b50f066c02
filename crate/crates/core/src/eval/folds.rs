use rand::seq::SliceRandom;

use super::{Corpus, EvalError, EvaluationPlan, FoldAssignment};

/// Patient-level folds stratified by population and label. Each
/// (population, label) group is shuffled and dealt round-robin, with the
/// deal continuing across groups so fold sizes stay balanced.
pub fn make_inner_folds(
    plan: &EvaluationPlan,
    corpus: &Corpus,
    k: usize,
    seed: u64,
) -> Result<Vec<FoldAssignment>, EvalError> {
    let total: usize = plan.train.iter().map(|&p| corpus.populations[p].patients.len()).sum();
    if total < k || k < 2 {
        return Err(EvalError::TooFewPatients {
            needed: k.max(2),
            found: total,
        });
    }
    let mut rng = crate::seed::rng(seed);
    let mut val: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut deal = 0;
    for &p in &plan.train {
        let pop = &corpus.populations[p];
        for label in [0u8, 1] {
            let mut group: Vec<usize> = pop
                .patients
                .iter()
                .copied()
                .filter(|&key| corpus.patients[key].label == label)
                .collect();
            if group.is_empty() {
                return Err(EvalError::SingleClassPopulation(pop.id.clone()));
            }
            group.shuffle(&mut rng);
            for key in group {
                val[deal % k].push(key);
                deal += 1;
            }
        }
    }
    let all: Vec<usize> = {
        let mut v: Vec<usize> = val.concat();
        v.sort_unstable();
        v
    };
    Ok(val
        .into_iter()
        .enumerate()
        .map(|(f, mut v)| {
            v.sort_unstable();
            let train = all.iter().copied().filter(|p| v.binary_search(p).is_err()).collect();
            FoldAssignment {
                fold: f + 1,
                train_patients: train,
                val_patients: v,
            }
        })
        .collect())
}
