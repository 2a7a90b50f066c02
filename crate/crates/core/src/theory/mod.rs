//! Exact computations on small finite instances: populations over
//! `X = {0,1}^k`, hypothesis classes given as truth tables, mixture risk,
//! transfer gaps, the discrepancy bound, epsilon-good sets and the
//! channel-restriction bound.
//!
//! A point `x` is a bitmask over `k <= 4` binary channels; a hypothesis is a
//! `u16` whose bit `x` is its prediction at `x`.

mod suite;

use thiserror::Error;

pub use suite::{
    contraction_suite, projection_suite, bound_suite, run_theory, SuiteResult, TheoryReport,
};

pub const MAX_CHANNELS: usize = 4;
pub const MAX_CLASS: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("hypothesis class has {0} members, cap is {MAX_CLASS}")]
    ClassTooLarge(usize),
    #[error("hypothesis class is empty")]
    EmptyClass,
    #[error("at most {MAX_CHANNELS} channels are supported, got {0}")]
    TooManyChannels(usize),
    #[error("probabilities must be nonnegative and sum to 1")]
    InvalidDistribution,
    #[error("mixture weights must be nonnegative, sum to 1 and match the populations")]
    InvalidMixture,
    #[error("first population set is not a subset of the second")]
    NotASubsetPair,
}

pub type Hypothesis = u16;

/// Joint distribution over `X x {0,1}`: `p[x][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    pub k: usize,
    pub p: Vec<[f64; 2]>,
}

impl FinitePopulation {
    pub fn new(k: usize, p: Vec<[f64; 2]>) -> Result<Self, TheoryError> {
        if k > MAX_CHANNELS {
            return Err(TheoryError::TooManyChannels(k));
        }
        let total: f64 = p.iter().map(|q| q[0] + q[1]).sum();
        if p.len() != 1 << k || p.iter().flatten().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(TheoryError::InvalidDistribution);
        }
        Ok(FinitePopulation { k, p })
    }

    pub fn n_points(&self) -> usize {
        1 << self.k
    }

    pub fn marginal(&self) -> Vec<f64> {
        self.p.iter().map(|q| q[0] + q[1]).collect()
    }

    /// Pushes the distribution forward onto the channels in `channels`
    /// (bitmask), re-indexing the kept coordinates densely.
    pub fn project(&self, channels: u8) -> FinitePopulation {
        let kept: Vec<usize> = (0..self.k).filter(|&c| channels >> c & 1 == 1).collect();
        let mut p = vec![[0.0; 2]; 1 << kept.len()];
        for (x, q) in self.p.iter().enumerate() {
            let z = project_point(x, &kept);
            p[z][0] += q[0];
            p[z][1] += q[1];
        }
        FinitePopulation { k: kept.len(), p }
    }
}

fn project_point(x: usize, kept: &[usize]) -> usize {
    kept.iter()
        .enumerate()
        .fold(0, |z, (i, &c)| z | ((x >> c & 1) << i))
}

/// Deduplicated, nonempty set of hypotheses over `{0,1}^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisClass {
    pub k: usize,
    pub members: Vec<Hypothesis>,
}

impl HypothesisClass {
    pub fn new(k: usize, members: impl IntoIterator<Item = Hypothesis>) -> Result<Self, TheoryError> {
        if k > MAX_CHANNELS {
            return Err(TheoryError::TooManyChannels(k));
        }
        let valid: Hypothesis = if k == 4 { u16::MAX } else { (1u16 << (1 << k)) - 1 };
        let mut members: Vec<Hypothesis> = members.into_iter().map(|h| h & valid).collect();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(TheoryError::EmptyClass);
        }
        if members.len() > MAX_CLASS {
            return Err(TheoryError::ClassTooLarge(members.len()));
        }
        Ok(HypothesisClass { k, members })
    }

    /// Every function `{0,1}^k -> {0,1}`.
    pub fn all(k: usize) -> Result<Self, TheoryError> {
        let n = 1usize << (1usize << k.min(MAX_CHANNELS));
        if n > MAX_CLASS {
            return Err(TheoryError::ClassTooLarge(n));
        }
        HypothesisClass::new(k, (0..n).map(|h| h as Hypothesis))
    }

    /// Every function of `{0,1}^k` that depends only on the channels in
    /// `channels`, expressed on the full domain.
    pub fn restricted(k: usize, channels: u8) -> Result<Self, TheoryError> {
        let kept: Vec<usize> = (0..k).filter(|&c| channels >> c & 1 == 1).collect();
        let n = 1usize << (1usize << kept.len());
        if n > MAX_CLASS {
            return Err(TheoryError::ClassTooLarge(n));
        }
        let members = (0..n).map(|g| {
            (0..1usize << k).fold(0 as Hypothesis, |h, x| {
                h | ((((g >> project_point(x, &kept)) & 1) as Hypothesis) << x)
            })
        });
        HypothesisClass::new(k, members)
    }

    /// Functions on the projected domain `{0,1}^|channels|` matching
    /// members of this class that depend only on `channels`.
    pub fn project(&self, channels: u8) -> Option<HypothesisClass> {
        let kept: Vec<usize> = (0..self.k).filter(|&c| channels >> c & 1 == 1).collect();
        let mut out = Vec::new();
        'h: for &h in &self.members {
            let mut g: Hypothesis = 0;
            let mut seen: u16 = 0;
            for x in 0..1usize << self.k {
                let z = project_point(x, &kept);
                let v = h >> x & 1;
                if seen >> z & 1 == 1 {
                    if g >> z & 1 != v {
                        continue 'h;
                    }
                } else {
                    seen |= 1 << z;
                    g |= v << z;
                }
            }
            out.push(g);
        }
        HypothesisClass::new(kept.len(), out).ok()
    }
}

/// Expected 0-1 loss of `f` under `p`.
pub fn risk(f: Hypothesis, p: &FinitePopulation) -> f64 {
    p.p.iter()
        .enumerate()
        .map(|(x, q)| if f >> x & 1 == 1 { q[0] } else { q[1] })
        .sum()
}

/// Weighted population mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub populations: Vec<usize>,
    pub weights: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(populations: Vec<usize>, weights: Vec<f64>) -> Result<Self, TheoryError> {
        let sum: f64 = weights.iter().sum();
        if populations.is_empty()
            || populations.len() != weights.len()
            || weights.iter().any(|&w| !(w >= 0.0))
            || (sum - 1.0).abs() > 1e-12
        {
            return Err(TheoryError::InvalidMixture);
        }
        Ok(MixtureSpec { populations, weights })
    }

    pub fn uniform(populations: Vec<usize>) -> Result<Self, TheoryError> {
        let w = 1.0 / populations.len() as f64;
        let n = populations.len();
        MixtureSpec::new(populations, vec![w; n])
    }

    /// The mixed joint distribution.
    pub fn distribution(&self, pops: &[FinitePopulation]) -> FinitePopulation {
        let k = pops[self.populations[0]].k;
        let mut p = vec![[0.0; 2]; 1 << k];
        for (&d, &a) in self.populations.iter().zip(&self.weights) {
            for (acc, q) in p.iter_mut().zip(&pops[d].p) {
                acc[0] += a * q[0];
                acc[1] += a * q[1];
            }
        }
        FinitePopulation { k, p }
    }
}

/// `sum_d alpha_d R_d(f)`.
pub fn mixture_risk(f: Hypothesis, pops: &[FinitePopulation], mix: &MixtureSpec) -> f64 {
    mix.populations
        .iter()
        .zip(&mix.weights)
        .map(|(&d, &a)| a * risk(f, &pops[d]))
        .sum()
}

/// `R_t(f) - R_S(f)`.
pub fn transfer_gap(f: Hypothesis, pops: &[FinitePopulation], mix: &MixtureSpec, t: usize) -> f64 {
    risk(f, &pops[t]) - mixture_risk(f, pops, mix)
}

/// Discrepancy over the class and the ideal joint risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscLambda {
    /// `sup_{h,h'} |P_S(h != h') - P_t(h != h')|`, half the H-delta-H
    /// divergence.
    pub disc: f64,
    /// `min_f R_S(f) + R_t(f)`.
    pub lambda: f64,
}

/// Distinct disagreement regions `h xor h'` over all pairs of the class.
fn disagreement_masks(class: &HypothesisClass) -> Vec<Hypothesis> {
    let mut seen = vec![0u64; 1 << 10];
    let mut out = Vec::new();
    for (i, &a) in class.members.iter().enumerate() {
        for &b in &class.members[i..] {
            let m = (a ^ b) as usize;
            if seen[m >> 6] >> (m & 63) & 1 == 0 {
                seen[m >> 6] |= 1 << (m & 63);
                out.push(m as Hypothesis);
            }
        }
    }
    out
}

pub fn disc_and_lambda(source: &FinitePopulation, target: &FinitePopulation, class: &HypothesisClass) -> DiscLambda {
    let (ms, mt) = (source.marginal(), target.marginal());
    let diff: Vec<f64> = ms.iter().zip(&mt).map(|(a, b)| a - b).collect();
    let disc = disagreement_masks(class)
        .into_iter()
        .map(|m| {
            diff.iter()
                .enumerate()
                .filter(|(x, _)| m >> x & 1 == 1)
                .map(|(_, d)| d)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max);
    let lambda = class
        .members
        .iter()
        .map(|&f| risk(f, source) + risk(f, target))
        .fold(f64::INFINITY, f64::min);
    DiscLambda { disc, lambda }
}

/// `{f in class : R(f) <= eps}`.
pub fn epsilon_good_set(p: &FinitePopulation, class: &HypothesisClass, eps: f64) -> Vec<Hypothesis> {
    class.members.iter().copied().filter(|&f| risk(f, p) <= eps).collect()
}

/// Hypotheses that are epsilon-good on every population in `set`.
pub fn joint_good_set(pops: &[FinitePopulation], set: &[usize], class: &HypothesisClass, eps: f64) -> Vec<Hypothesis> {
    class
        .members
        .iter()
        .copied()
        .filter(|&f| set.iter().all(|&d| risk(f, &pops[d]) <= eps))
        .collect()
}

/// Whether the joint good set of `s2` is contained in that of `s1`.
pub fn check_contraction(
    pops: &[FinitePopulation],
    s1: &[usize],
    s2: &[usize],
    class: &HypothesisClass,
    eps: f64,
) -> Result<bool, TheoryError> {
    if !s1.iter().all(|d| s2.contains(d)) {
        return Err(TheoryError::NotASubsetPair);
    }
    let h1 = joint_good_set(pops, s1, class, eps);
    Ok(joint_good_set(pops, s2, class, eps)
        .iter()
        .all(|f| h1.binary_search(f).is_ok()))
}

/// Terms of the channel-restriction bound for one hypothesis of the
/// restricted class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionTerms {
    pub target_risk: f64,
    pub empirical_source_risk: f64,
    /// `sup_f |R_S(f) - R_hat_S(f)|` over the restricted class.
    pub complexity: f64,
    pub disc: f64,
    pub lambda: f64,
}

impl ProjectionTerms {
    pub fn bound(&self) -> f64 {
        self.empirical_source_risk + self.complexity + self.disc + self.lambda
    }

    pub fn holds(&self) -> bool {
        self.target_risk <= self.bound() + 1e-12
    }
}

/// Evaluates the restricted bound for every member of the class of
/// functions depending only on `channels`. `empirical` is the empirical
/// measure of a sample from the source mixture. Disc and lambda are computed
/// on the projected distributions.
pub fn check_projection_bound(
    source: &FinitePopulation,
    empirical: &FinitePopulation,
    target: &FinitePopulation,
    channels: u8,
) -> Result<Vec<(Hypothesis, ProjectionTerms)>, TheoryError> {
    let (ps, pe, pt) = (source.project(channels), empirical.project(channels), target.project(channels));
    let class = HypothesisClass::all(ps.k)?;
    let complexity = class
        .members
        .iter()
        .map(|&f| (risk(f, &ps) - risk(f, &pe)).abs())
        .fold(0.0, f64::max);
    let dl = disc_and_lambda(&ps, &pt, &class);
    Ok(class
        .members
        .iter()
        .map(|&f| {
            (
                f,
                ProjectionTerms {
                    target_risk: risk(f, &pt),
                    empirical_source_risk: risk(f, &pe),
                    complexity,
                    disc: dl.disc,
                    lambda: dl.lambda,
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deterministic(k: usize, labels: impl Fn(usize) -> u8) -> FinitePopulation {
        let n = 1 << k;
        let p = (0..n)
            .map(|x| {
                let mut q = [0.0; 2];
                q[labels(x) as usize] = 1.0 / n as f64;
                q
            })
            .collect();
        FinitePopulation::new(k, p).unwrap()
    }

    #[test]
    fn bayes_and_constant_risks() {
        let p = deterministic(2, |x| (x & 1) as u8);
        let bayes: Hypothesis = 0b1010;
        assert_eq!(risk(bayes, &p), 0.0);
        assert_eq!(risk(0, &p), 0.5);
    }

    #[test]
    fn mixture_edge_cases() {
        let a = deterministic(2, |x| (x & 1) as u8);
        let b = deterministic(2, |x| (x >> 1) as u8);
        let pops = vec![a.clone(), b];
        let first = MixtureSpec::new(vec![0, 1], vec![1.0, 0.0]).unwrap();
        for f in 0..16 {
            assert_eq!(mixture_risk(f, &pops, &first), risk(f, &a));
        }
        let same = vec![a.clone(), a.clone()];
        let u = MixtureSpec::uniform(vec![0, 1]).unwrap();
        for f in 0..16 {
            assert!((mixture_risk(f, &same, &u) - risk(f, &a)).abs() < 1e-15);
            assert!(transfer_gap(f, &same, &u, 0).abs() < 1e-15);
        }
        assert!(MixtureSpec::new(vec![0], vec![0.5]).is_err());
    }

    #[test]
    fn disc_identical_and_disjoint() {
        let a = deterministic(2, |x| (x & 1) as u8);
        let class = HypothesisClass::all(2).unwrap();
        let dl = disc_and_lambda(&a, &a, &class);
        assert_eq!(dl.disc, 0.0);
        assert_eq!(dl.lambda, 0.0);

        // Supports {0,1} and {2,3}.
        let s = FinitePopulation::new(2, vec![[0.5, 0.0], [0.0, 0.5], [0.0; 2], [0.0; 2]]).unwrap();
        let t = FinitePopulation::new(2, vec![[0.0; 2], [0.0; 2], [0.5, 0.0], [0.0, 0.5]]).unwrap();
        assert_eq!(disc_and_lambda(&s, &t, &class).disc, 1.0);
    }

    #[test]
    fn class_caps() {
        assert_eq!(HypothesisClass::all(3).unwrap().members.len(), 256);
        assert_eq!(HypothesisClass::all(4), Err(TheoryError::ClassTooLarge(65536)));
        assert_eq!(HypothesisClass::new(2, []), Err(TheoryError::EmptyClass));
        assert_eq!(HypothesisClass::new(2, [1, 1, 17]).unwrap().members, vec![1]);
    }

    #[test]
    fn restricted_class_depends_only_on_channels() {
        // Channel 0 only, k = 3: four functions of one bit.
        let c = HypothesisClass::restricted(3, 0b001).unwrap();
        assert_eq!(c.members.len(), 4);
        for &h in &c.members {
            for x in 0..8 {
                assert_eq!(h >> x & 1, h >> (x & 1) & 1);
            }
        }
        let full = HypothesisClass::restricted(3, 0b111).unwrap();
        assert_eq!(full, HypothesisClass::all(3).unwrap());
        let back = c.project(0b001).unwrap();
        assert_eq!(back, HypothesisClass::all(1).unwrap());
    }

    #[test]
    fn good_sets_and_contraction() {
        let a = deterministic(2, |x| (x & 1) as u8);
        let b = deterministic(2, |x| (x >> 1) as u8);
        let pops = vec![a.clone(), b];
        let class = HypothesisClass::all(2).unwrap();
        assert_eq!(epsilon_good_set(&a, &class, 1.0).len(), 16);
        assert_eq!(epsilon_good_set(&a, &class, 0.0), vec![0b1010]);
        assert_eq!(check_contraction(&pops, &[0], &[0], &class, 0.3), Ok(true));
        assert_eq!(check_contraction(&pops, &[0], &[0, 1], &class, 0.3), Ok(true));
        assert_eq!(
            check_contraction(&pops, &[0, 1], &[1], &class, 0.3),
            Err(TheoryError::NotASubsetPair)
        );
    }

    #[test]
    fn dropping_nuisance_channel_does_not_raise_disc() {
        // Channel 1 is a site marker independent of the label, which
        // follows channel 0.
        let site = |bit: usize| {
            let p = (0..4)
                .map(|x| {
                    let mut q = [0.0; 2];
                    if x >> 1 == bit {
                        q[x & 1] = 0.5;
                    }
                    q
                })
                .collect();
            FinitePopulation::new(2, p).unwrap()
        };
        let (s, t) = (site(0), site(1));
        let full = disc_and_lambda(&s, &t, &HypothesisClass::all(2).unwrap());
        let cls = HypothesisClass::all(1).unwrap();
        let proj = disc_and_lambda(&s.project(0b01), &t.project(0b01), &cls);
        assert_eq!(full.disc, 1.0);
        assert_eq!(proj.disc, 0.0);
        assert!(proj.disc <= full.disc);
    }
}
