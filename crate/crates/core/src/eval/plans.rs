use super::EvaluationPlan;

/// Number of plans for `d` populations: sum over n of C(d, n) * (d - n).
pub fn count_plans(d: usize) -> usize {
    let mut total = 0;
    let mut binom = 1usize; // C(d, n)
    for n in 1..d {
        binom = binom * (d - n + 1) / n;
        total += binom * (d - n);
    }
    total
}

/// Every (training set, test population) pair with 1 <= |S| <= d - 1,
/// ordered by level, then training set (lexicographic), then test index.
pub fn enumerate_plans(d: usize) -> Vec<EvaluationPlan> {
    assert!(d >= 2, "need at least two populations");
    let mut plans = Vec::with_capacity(count_plans(d));
    for n in 1..d {
        let mut combo: Vec<usize> = (0..n).collect();
        loop {
            for test in (0..d).filter(|t| !combo.contains(t)) {
                plans.push(EvaluationPlan {
                    plan_index: plans.len(),
                    ngram_level: n,
                    train: combo.clone(),
                    test,
                });
            }
            // Next combination in lexicographic order.
            let Some(i) = (0..n).rev().find(|&i| combo[i] < d - n + i) else {
                break;
            };
            combo[i] += 1;
            for j in i + 1..n {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    plans
}
