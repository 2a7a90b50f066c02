//! Randomized instance suites for the theory checks.

use std::fmt::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    check_contraction, check_projection_bound, disc_and_lambda, mixture_risk, risk, FinitePopulation, Hypothesis,
    HypothesisClass, MixtureSpec,
};
use crate::seed::{mix, rng};

const MAX_COUNTEREXAMPLES: usize = 10;
const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub instances: usize,
    pub checks: usize,
    pub violations: usize,
    pub counterexamples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl TheoryReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.violations == 0)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("seed\t{}\n", self.seed);
        for s in &self.suites {
            let _ = writeln!(
                out,
                "{}\tinstances={}\tchecks={}\tviolations={}\t{}",
                s.name,
                s.instances,
                s.checks,
                s.violations,
                if s.violations == 0 { "PASS" } else { "FAIL" }
            );
            for c in &s.counterexamples {
                let _ = writeln!(out, "  counterexample: {c}");
            }
        }
        let _ = writeln!(out, "overall\t{}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

fn random_population(r: &mut ChaCha8Rng, k: usize) -> FinitePopulation {
    loop {
        let mut p: Vec<[f64; 2]> = (0..1usize << k)
            .map(|_| {
                let mut cell = || if r.random_bool(0.3) { 0.0 } else { r.random::<f64>() };
                [cell(), cell()]
            })
            .collect();
        let total: f64 = p.iter().map(|q| q[0] + q[1]).sum();
        if total <= 0.0 {
            continue;
        }
        for q in &mut p {
            q[0] /= total;
            q[1] /= total;
        }
        // Renormalization can leave the sum a few ulps off 1.
        if let Ok(pop) = FinitePopulation::new(k, p) {
            return pop;
        }
    }
}

fn random_class(r: &mut ChaCha8Rng, k: usize) -> HypothesisClass {
    if k <= 3 && r.random_bool(0.5) {
        return HypothesisClass::all(k).expect("small class");
    }
    let domain: u32 = 1 << (1 << k);
    let size = r.random_range(1..=if k == 4 { 512 } else { 64 });
    let members: Vec<Hypothesis> = (0..size).map(|_| r.random_range(0..domain) as Hypothesis).collect();
    HypothesisClass::new(k, members).expect("nonempty capped class")
}

fn random_subset(r: &mut ChaCha8Rng, from: &[usize]) -> Vec<usize> {
    loop {
        let s: Vec<usize> = from.iter().copied().filter(|_| r.random_bool(0.5)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

fn random_mixture(r: &mut ChaCha8Rng, populations: Vec<usize>) -> MixtureSpec {
    let raw: Vec<f64> = populations.iter().map(|_| r.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    MixtureSpec::new(populations, w).unwrap_or_else(|_| {
        let n = raw.len();
        MixtureSpec::new((0..n).collect(), vec![1.0 / n as f64; n]).expect("uniform weights")
    })
}

struct Outcome {
    checks: usize,
    violations: usize,
    example: Option<String>,
}

fn run_suite(name: &str, seed: u64, n: usize, f: impl Fn(&mut ChaCha8Rng) -> Outcome + Sync) -> SuiteResult {
    if n == 0 {
        log::warn!("{name}: zero instances requested, passing vacuously");
    }
    let tag = crate::seed::hash_str(name);
    let outcomes: Vec<Outcome> = (0..n)
        .into_par_iter()
        .map(|i| f(&mut rng(mix(mix(seed, tag), i as u64))))
        .collect();
    let mut result = SuiteResult {
        name: name.to_string(),
        instances: n,
        checks: 0,
        violations: 0,
        counterexamples: Vec::new(),
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        result.checks += o.checks;
        result.violations += o.violations;
        if let Some(e) = o.example {
            if result.counterexamples.len() < MAX_COUNTEREXAMPLES {
                result.counterexamples.push(format!("instance {i}: {e}"));
            }
        }
    }
    result
}

fn population_setup(r: &mut ChaCha8Rng, k: usize) -> (Vec<FinitePopulation>, MixtureSpec, usize) {
    let d = r.random_range(2..=4);
    let pops: Vec<FinitePopulation> = (0..d).map(|_| random_population(r, k)).collect();
    let t = r.random_range(0..d);
    let others: Vec<usize> = (0..d).filter(|&x| x != t).collect();
    let s = random_subset(r, &others);
    (pops, random_mixture(r, s), t)
}

/// `R_t(f) <= R_S(f) + disc + lambda` for every hypothesis of random classes.
pub fn bound_suite(seed: u64, n: usize) -> SuiteResult {
    run_suite("bound", seed, n, |r| {
        let k = r.random_range(1..=4);
        let class = random_class(r, k);
        let (pops, mixture, t) = population_setup(r, k);
        let source = mixture.distribution(&pops);
        let dl = disc_and_lambda(&source, &pops[t], &class);
        let mut out = Outcome {
            checks: 0,
            violations: 0,
            example: None,
        };
        for &f in &class.members {
            let (rt, rs) = (risk(f, &pops[t]), mixture_risk(f, &pops, &mixture));
            out.checks += 1;
            if rt > rs + dl.disc + dl.lambda + TOLERANCE {
                out.violations += 1;
                out.example.get_or_insert_with(|| {
                    format!("f={f:#06x} R_t={rt:?} R_S={rs:?} disc={:?} lambda={:?}", dl.disc, dl.lambda)
                });
            }
        }
        out
    })
}

/// Joint epsilon-good sets contract when populations are added.
pub fn contraction_suite(seed: u64, n: usize) -> SuiteResult {
    run_suite("contraction", seed, n, |r| {
        let k = r.random_range(1..=4);
        let class = random_class(r, k);
        let d = r.random_range(2..=5);
        let pops: Vec<FinitePopulation> = (0..d).map(|_| random_population(r, k)).collect();
        let s2 = random_subset(r, &(0..d).collect::<Vec<_>>());
        let s1 = random_subset(r, &s2);
        let eps = r.random_range(0.0..0.6);
        let ok = check_contraction(&pops, &s1, &s2, &class, eps).expect("s1 drawn from s2");
        Outcome {
            checks: 1,
            violations: (!ok) as usize,
            example: (!ok).then(|| format!("S1={s1:?} S2={s2:?} eps={eps:?}")),
        }
    })
}

/// Channel-restricted bound with an empirical source sample.
pub fn projection_suite(seed: u64, n: usize) -> SuiteResult {
    run_suite("projection", seed, n, |r| {
        let k = r.random_range(1..=4);
        let (pops, mixture, t) = population_setup(r, k);
        let source = mixture.distribution(&pops);
        let channels: u8 = loop {
            let c = r.random_range(1..(1u8 << k));
            if c.count_ones() <= 3 {
                break c;
            }
        };
        let m = r.random_range(20..=200);
        let cells: Vec<f64> = source.p.iter().flat_map(|q| [q[0], q[1]]).collect();
        let dist = WeightedIndex::new(&cells).expect("positive mass");
        let mut counts = vec![[0.0; 2]; source.n_points()];
        for _ in 0..m {
            let i = dist.sample(r);
            counts[i / 2][i % 2] += 1.0 / m as f64;
        }
        let empirical = FinitePopulation { k, p: counts };
        let terms = check_projection_bound(&source, &empirical, &pops[t], channels).expect("at most 3 channels");
        let mut out = Outcome {
            checks: terms.len(),
            violations: 0,
            example: None,
        };
        for (f, term) in terms {
            if !term.holds() {
                out.violations += 1;
                out.example.get_or_insert_with(|| format!("channels={channels:#b} f={f:#06x} {term:?}"));
            }
        }
        out
    })
}

/// All three suites; counts default to 1000 / 500 / 200 at the CLI.
pub fn run_theory(seed: u64, n_bound: usize, n_contraction: usize, n_projection: usize) -> TheoryReport {
    TheoryReport {
        seed,
        suites: vec![
            bound_suite(seed, n_bound),
            contraction_suite(seed, n_contraction),
            projection_suite(seed, n_projection),
        ],
    }
}
