use serde::{Deserialize, Serialize};

use crate::eval::EvaluationResult;
use crate::montage::N_CHANNELS;

/// How often each channel enters a per-fold top-4 when a population is
/// trained alone (solo) or as part of any training set (mixed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMap {
    pub population: String,
    pub solo_counts: Vec<usize>,
    pub mixed_counts: Vec<usize>,
    pub solo: Vec<f64>,
    pub mixed: Vec<f64>,
    /// `solo - mixed`, componentwise in [-1, 1].
    pub difference: Vec<f64>,
}

/// Min-max scaling to [0, 1]. A constant vector maps to all zeros.
pub fn min_max_normalize(counts: &[usize]) -> Vec<f64> {
    let (Some(&lo), Some(&hi)) = (counts.iter().min(), counts.iter().max()) else {
        return Vec::new();
    };
    if hi == lo {
        log::warn!("channel counts are all equal ({lo}); normalized map set to zeros");
        return vec![0.0; counts.len()];
    }
    let span = (hi - lo) as f64;
    counts.iter().map(|&c| (c - lo) as f64 / span).collect()
}

pub fn channel_maps(results: &[EvaluationResult], populations: &[String]) -> Vec<ChannelMap> {
    populations
        .iter()
        .map(|p| {
            let mut solo = vec![0usize; N_CHANNELS];
            let mut mixed = vec![0usize; N_CHANNELS];
            for r in results.iter().filter(|r| r.train_populations.contains(p)) {
                let is_solo = r.train_populations.len() == 1;
                for top in &r.ranking.fold_top {
                    for &c in top {
                        mixed[c] += 1;
                        if is_solo {
                            solo[c] += 1;
                        }
                    }
                }
            }
            let solo_n = min_max_normalize(&solo);
            let mixed_n = min_max_normalize(&mixed);
            let difference = solo_n.iter().zip(&mixed_n).map(|(a, b)| a - b).collect();
            ChannelMap {
                population: p.clone(),
                solo_counts: solo,
                mixed_counts: mixed,
                solo: solo_n,
                mixed: mixed_n,
                difference,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(min_max_normalize(&[2, 5, 8]), vec![0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[3, 3]), vec![0.0, 0.0]);
        assert!(min_max_normalize(&[]).is_empty());
    }
}
