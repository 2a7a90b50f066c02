//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::beta::beta_reg;
use xpop_core::analytics::{aggregate_patient, confusion_metrics, min_max_normalize, ols};
use xpop_core::classifier::gradient_check;
use xpop_core::cohort::load_manifest;
use xpop_core::eval::{enumerate_plans, make_inner_folds, Corpus};
use xpop_core::montage::{AlignedRecording, N_CHANNELS};
use xpop_core::runner::{self, load_results};
use xpop_core::seed::derive_seed;
use xpop_core::signal::{preprocess, stft_power};
use xpop_core::theory::run_theory;
use xpop_core::{
    build_reference_montage, ChannelMask, EvaluationResult, ModelSpec, PipelineConfig, Regime, RunConfig,
    SyntheticConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// ---------------------------------------------------------------- fixtures

struct RunDir {
    cfg: RunConfig,
    elapsed: Duration,
}

fn end_to_end(root: &Path, name: &str, synthetic: SyntheticConfig, parallelism: usize) -> RunDir {
    let cfg = RunConfig {
        corpus_dir: root.join(name).join("corpus"),
        output_dir: root.join(name).join("out"),
        parallelism,
        synthetic: Some(synthetic),
        ..RunConfig::default()
    };
    let t = Instant::now();
    runner::synthesize(&cfg).expect("synth");
    runner::run(&cfg).expect("run");
    runner::report(&cfg.output_path()).expect("report");
    RunDir {
        cfg,
        elapsed: t.elapsed(),
    }
}

fn results(run: &RunDir) -> Vec<EvaluationResult> {
    load_results(&run.cfg.output_path()).expect("complete run").1
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

// ---------------------------------------------------------------- criteria

fn enumeration() -> Outcome {
    let t = Instant::now();
    let plans = enumerate_plans(5);
    let elapsed = t.elapsed();
    let mut levels = [0usize; 5];
    for p in &plans {
        levels[p.ngram_level] += 1;
    }
    // Independent enumerator: every non-empty subset of the other four
    // populations, for every test population.
    let mut brute = BTreeSet::new();
    for test in 0..5usize {
        for mask in 1u32..32 {
            if mask & (1 << test) == 0 {
                let train: Vec<usize> = (0..5).filter(|i| mask & (1 << i) != 0).collect();
                brute.insert((train, test));
            }
        }
    }
    let got: BTreeSet<(Vec<usize>, usize)> = plans.iter().map(|p| (p.train.clone(), p.test)).collect();
    let indices_ok = plans.iter().enumerate().all(|(i, p)| p.plan_index == i && p.ngram_level == p.train.len());
    let pass = plans.len() == 75
        && levels[1..] == [20, 30, 20, 5]
        && got == brute
        && got.len() == plans.len()
        && indices_ok
        && within(elapsed, 1.0);
    outcome(
        pass,
        format!(
            "{} plans, levels {:?}, brute-force match {}, {:?}",
            plans.len(),
            &levels[1..],
            got == brute,
            elapsed
        ),
    )
}

fn leakage(run: &RunDir, res: &[EvaluationResult]) -> Outcome {
    let t = Instant::now();
    let cfg = &run.cfg;
    let manifests = runner::load_corpus_manifests(cfg).unwrap();
    let corpus = Corpus::load(&manifests, &build_reference_montage(), &cfg.pipeline, &cfg.eval.specs()).unwrap();
    let plans = enumerate_plans(corpus.populations.len());
    let mut violations = 0usize;
    let mut checked = 0usize;
    for (plan, r) in plans.iter().zip(res) {
        let seed = derive_seed(cfg.eval.base_seed, plan.plan_index, 0);
        let folds = make_inner_folds(plan, &corpus, cfg.eval.k_folds, seed).unwrap();
        if folds != r.folds || r.plan != *plan {
            violations += 1;
        }
        let held_out: BTreeSet<usize> = corpus.populations[plan.test].patients.iter().copied().collect();
        let held_ids: BTreeSet<&str> = held_out.iter().map(|&k| corpus.patients[k].patient_id.as_str()).collect();
        let mut val_union = BTreeSet::new();
        for f in &r.folds {
            let tr: BTreeSet<usize> = f.train_patients.iter().copied().collect();
            let va: BTreeSet<usize> = f.val_patients.iter().copied().collect();
            violations += tr.intersection(&held_out).count();
            violations += va.intersection(&held_out).count();
            violations += tr.intersection(&va).count();
            violations += f
                .train_patients
                .iter()
                .chain(&f.val_patients)
                .filter(|&&k| !plan.train.contains(&corpus.patients[k].population))
                .count();
            val_union.extend(va);
            checked += 1;
        }
        let training: BTreeSet<usize> = plan
            .train
            .iter()
            .flat_map(|&p| corpus.populations[p].patients.iter().copied())
            .collect();
        if val_union != training {
            violations += 1;
        }
        for reg in &r.regimes {
            let ids: BTreeSet<&str> = reg.predictions.iter().map(|p| p.patient_id.as_str()).collect();
            if ids != held_ids {
                violations += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    outcome(
        violations == 0 && res.len() == 75 && within(elapsed, 60.0),
        format!("{} plans, {checked} folds, {violations} violations, {elapsed:?}", res.len()),
    )
}

fn parseval_ratio(window: &[f64], cfg: &PipelineConfig) -> f64 {
    let p = stft_power(window, cfg).unwrap();
    let n = cfg.n_fft as f64;
    let last = p.n_freq - 1;
    let mut spectral = 0.0;
    for j in 0..p.n_frames {
        let one_sided: f64 = (0..p.n_freq).map(|f| p.at(f, j)).sum();
        spectral += 2.0 * one_sided - p.at(0, j) - p.at(last, j);
    }
    spectral /= n;
    // Hann-squared overlap-add at this hop is constant: 3 n_fft / 8 / hop.
    let ola = 3.0 * n / 8.0 / cfg.stft_hop as f64;
    let energy: f64 = window.iter().map(|x| x * x).sum();
    spectral / (ola * energy)
}

fn pipeline_shape() -> Outcome {
    let t = Instant::now();
    let cfg = PipelineConfig::default();
    let montage = build_reference_montage();
    let rates = [64.0, 128.0, 160.0, 200.0, 256.0];
    let mut runner = TestRunner::new_with_rng(
        PropConfig {
            cases: 100,
            failure_persistence: None,
            ..PropConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let stats = std::cell::Cell::new((0usize, 0usize, 0.0f64));
    let strategy = (0usize..rates.len(), 200.0f64..600.0, 1usize..4, any::<u64>());
    let result = runner.run(&strategy, |(ri, seconds, n_present, seed)| {
        let rate = rates[ri];
        let n = (seconds * rate) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let present: Vec<usize> = (0..n_present).map(|_| rng.random_range(0..N_CHANNELS)).collect();
        let mut matrix = vec![0.0f32; N_CHANNELS * n];
        for &c in &present {
            let (a, f) = (rng.random_range(0.0..0.95), rng.random_range(1.0..20.0));
            let mut prev = 0.0f64;
            for i in 0..n {
                prev = a * prev + rng.random_range(-1.0..1.0);
                let tone = (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin();
                matrix[c * n + i] = (prev + 0.5 * tone) as f32;
            }
        }
        let rec = AlignedRecording {
            population_id: "Q".into(),
            patient_id: format!("q{seed}"),
            label: 0,
            sample_rate_hz: rate,
            n_samples: n,
            matrix,
            presence: ChannelMask::from_indices(present.iter().copied()),
        };
        let frames = preprocess(&rec, &montage, &cfg).unwrap();
        for f in &frames {
            prop_assert_eq!(f.shape(), (128, 256));
            if !f.absent {
                let lo = f.values.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = f.values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                prop_assert_eq!((lo, hi), (0.0, 1.0));
            } else {
                prop_assert!(!rec.presence.contains(f.channel_index));
            }
        }
        // Parseval on a raw window drawn from the same generator.
        let window: Vec<f64> = (0..cfg.window_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ratio = parseval_ratio(&window, &cfg);
        prop_assert!((ratio - 1.0).abs() < 0.05, "parseval ratio {}", ratio);
        let (k, present, dev) = stats.get();
        stats.set((
            k + 1,
            present + frames.iter().filter(|f| !f.absent).count(),
            dev.max((ratio - 1.0).abs()),
        ));
        Ok(())
    });
    let elapsed = t.elapsed();
    let (k, present, dev) = stats.get();
    let detail = format!("{k} recordings, {present} present frames, max Parseval deviation {dev:.4}, {elapsed:?}");
    match result {
        Ok(()) => outcome(within(elapsed, 30.0), detail),
        Err(e) => outcome(false, format!("{e}; {detail}")),
    }
}

fn determinism(a: &RunDir, b: &RunDir) -> Outcome {
    let root = |r: &RunDir| r.cfg.corpus_path().parent().unwrap().to_path_buf();
    let (ta, tb) = (tree(&root(a)), tree(&root(b)));
    let copy = Path::new("out").join(runner::CONFIG_COPY);
    let mut differing: Vec<String> = Vec::new();
    let keys: BTreeSet<&PathBuf> = ta.keys().chain(tb.keys()).collect();
    for k in keys {
        if *k == copy {
            continue;
        }
        if ta.get(k) != tb.get(k) {
            differing.push(k.display().to_string());
        }
    }
    // The config copies differ only in the recorded parallelism.
    let parse = |t: &BTreeMap<PathBuf, Vec<u8>>| {
        let mut c = RunConfig::from_toml(std::str::from_utf8(&t[&copy]).unwrap()).unwrap();
        c.parallelism = 0;
        c.corpus_dir = PathBuf::new();
        c.output_dir = PathBuf::new();
        c
    };
    let configs_match = parse(&ta) == parse(&tb);
    let total = a.elapsed + b.elapsed;
    outcome(
        differing.is_empty() && configs_match && ta.len() > 100 && within(total, 1200.0),
        format!(
            "{} files compared (parallelism {} vs {}), {} differ, config copies equivalent {configs_match}, {total:?}",
            ta.len(),
            a.cfg.parallelism,
            b.cfg.parallelism,
            differing.len()
        ),
    )
}

fn recovery(planted: &RunDir, planted_res: &[EvaluationResult], null: &RunDir) -> Outcome {
    let montage = build_reference_montage();
    let man = load_manifest(&planted.cfg.corpus_path().join("P1.json")).unwrap();
    let truth: BTreeSet<usize> = man
        .ground_truth
        .unwrap()
        .informative_channels
        .iter()
        .map(|l| montage.index_of(l).unwrap())
        .collect();
    let (mut pairs, mut exact, mut recall) = (0usize, 0usize, 0.0);
    for r in planted_res {
        for top in &r.ranking.fold_top {
            let got: BTreeSet<usize> = top.iter().copied().collect();
            pairs += 1;
            exact += (got == truth) as usize;
            recall += got.intersection(&truth).count() as f64 / truth.len() as f64;
        }
    }
    let rate = exact as f64 / pairs as f64;

    // Null corpus: each patient is held out exactly once at the top level.
    let null_res = results(null);
    let (mut correct, mut n) = (0u64, 0u64);
    for r in null_res.iter().filter(|r| r.plan.ngram_level == 4) {
        for p in &r.regime(Regime::Top(4)).unwrap().predictions {
            correct += (p.predicted == p.label) as u64;
            n += 1;
        }
    }
    let binom = Binomial::new(0.5, n).unwrap();
    let lo = (0..=n).find(|&k| binom.cdf(k) >= 0.025).unwrap();
    let hi = (0..=n).find(|&k| binom.cdf(k) >= 0.975).unwrap();
    let acc = correct as f64 / n as f64;
    let in_band = (lo..=hi).contains(&correct);
    outcome(
        rate >= 0.9 && in_band,
        format!(
            "exact top-4 recovery {exact}/{pairs} = {rate:.3} (mean recall {:.3}); null accuracy {acc:.3} over {n} patients, band [{:.3}, {:.3}]",
            recall / pairs as f64,
            lo as f64 / n as f64,
            hi as f64 / n as f64
        ),
    )
}

fn trend(res: &[EvaluationResult]) -> Outcome {
    let acc_at = |level: usize| -> Vec<f64> {
        res.iter()
            .filter(|r| r.plan.ngram_level == level)
            .map(|r| {
                let p = &r.regime(Regime::Top(4)).unwrap().predictions;
                p.iter().filter(|x| x.predicted == x.label).count() as f64 / p.len() as f64
            })
            .collect()
    };
    let (m1, s1) = mean_sd(&acc_at(1));
    let (m3, s3) = mean_sd(&acc_at(3));
    outcome(
        m3 >= m1 - 0.02 && s3 <= s1,
        format!("K=4 n=1 mean {m1:.4} sd {s1:.4}; n=3 mean {m3:.4} sd {s3:.4}"),
    )
}

fn t_quantile_oracle(df: f64) -> f64 {
    // Bisection on the Student-t CDF expressed through the incomplete beta.
    let cdf = |t: f64| 1.0 - 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < 0.975 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn metric_oracles() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    let mut fails = [0usize; 4];
    for case in 0..1000 {
        // Soft voting.
        let n = rng.random_range(1..60);
        let probs: Vec<f64> = if case % 50 == 0 {
            vec![0.5; n]
        } else {
            (0..n).map(|_| rng.random::<f64>()).collect()
        };
        let tau = if case % 2 == 0 { 0.5 } else { rng.random::<f64>() };
        let vote = aggregate_patient(&probs, tau).unwrap();
        let mut sum = 0.0;
        for p in probs.iter().rev() {
            sum += p;
        }
        let mean = sum / n as f64;
        let label = u8::from(mean >= tau);
        if !close(vote.mean, mean) || vote.label != label || vote.n_frames != n {
            fails[0] += 1;
        }

        // Confusion-matrix metrics.
        let m = rng.random_range(1..80);
        let pairs: Vec<(u8, u8)> = (0..m).map(|_| (rng.random_range(0..2), rng.random_range(0..2))).collect();
        let count = |p: u8, y: u8| pairs.iter().filter(|&&q| q == (p, y)).count();
        let (tp, fp, tn, fneg) = (count(1, 1), count(1, 0), count(0, 0), count(0, 1));
        let got = confusion_metrics(&pairs);
        let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
        let recall = (tp + fneg > 0).then(|| tp as f64 / (tp + fneg) as f64);
        let f1 = match (precision, recall) {
            (Some(_), Some(_)) => Some(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64),
            _ => None,
        };
        let opt_close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        if (got.tp, got.fp, got.tn, got.fn_) != (tp, fp, tn, fneg)
            || !close(got.accuracy, (tp + tn) as f64 / m as f64)
            || !opt_close(got.precision, precision)
            || !opt_close(got.recall, recall)
            || !opt_close(got.f1, f1)
        {
            fails[1] += 1;
        }

        // Min-max channel maps.
        let counts: Vec<usize> = if case % 100 == 0 {
            vec![3; N_CHANNELS]
        } else {
            (0..N_CHANNELS).map(|_| rng.random_range(0..25)).collect()
        };
        let lo = *counts.iter().min().unwrap() as f64;
        let hi = *counts.iter().max().unwrap() as f64;
        let want: Vec<f64> = counts
            .iter()
            .map(|&c| if hi > lo { (c as f64 - lo) / (hi - lo) } else { 0.0 })
            .collect();
        let got = min_max_normalize(&counts);
        if got.len() != want.len() || got.iter().zip(&want).any(|(a, b)| !close(*a, *b)) {
            fails[2] += 1;
        }

        // OLS through the normal equations by Cramer's rule.
        let k = rng.random_range(3..40);
        let (b0, b1) = (rng.random_range(-1.0..1.0), rng.random_range(-0.05..0.05));
        let pts: Vec<(f64, f64)> = (0..k)
            .map(|i| {
                let x = if i < 2 { i as f64 * 10.0 } else { rng.random_range(0.0..100.0) };
                (x, b0 + b1 * x + rng.random_range(-0.2..0.2))
            })
            .collect();
        let nf = k as f64;
        let (sx, sy) = (pts.iter().map(|p| p.0).sum::<f64>(), pts.iter().map(|p| p.1).sum::<f64>());
        let sxx = pts.iter().map(|p| p.0 * p.0).sum::<f64>();
        let sxy = pts.iter().map(|p| p.0 * p.1).sum::<f64>();
        let det = nf * sxx - sx * sx;
        let intercept = (sy * sxx - sx * sxy) / det;
        let slope = (nf * sxy - sx * sy) / det;
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let s2 = rss / (nf - 2.0);
        let tq = t_quantile_oracle(nf - 2.0);
        let se_slope = (s2 * nf / det).sqrt();
        let se_int = (s2 * sxx / det).sqrt();
        let fit = ols(&pts).unwrap();
        let ok = close(fit.slope, slope)
            && close(fit.intercept, intercept)
            && close(fit.slope_ci[0], slope - tq * se_slope)
            && close(fit.slope_ci[1], slope + tq * se_slope)
            && close(fit.intercept_ci[0], intercept - tq * se_int)
            && close(fit.intercept_ci[1], intercept + tq * se_int);
        if !ok {
            fails[3] += 1;
        }
    }
    let elapsed = t.elapsed();
    outcome(
        fails == [0; 4] && within(elapsed, 10.0),
        format!("1000 cases each; mismatches vote/confusion/minmax/ols = {fails:?}, {elapsed:?}"),
    )
}

fn theory_suite() -> Outcome {
    let t = Instant::now();
    let report = run_theory(10, 1000, 500, 200);
    let elapsed = t.elapsed();
    let summary: Vec<String> = report
        .suites
        .iter()
        .map(|s| format!("{} {}/{} checks ok", s.name, s.checks - s.violations, s.checks))
        .collect();
    let counts_ok = report.suites.iter().map(|s| s.instances).eq([1000, 500, 200]);
    outcome(
        report.passed() && counts_ok && within(elapsed, 60.0),
        format!("{}, {elapsed:?}", summary.join("; ")),
    )
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let band = (0..5).map(|s| gradient_check(&ModelSpec::band_logistic(), s)).fold(0.0, f64::max);
    let conv = (0..2).map(|s| gradient_check(&ModelSpec::reference_conv(), s)).fold(0.0, f64::max);
    let elapsed = t.elapsed();
    outcome(
        band < 1e-3 && conv < 1e-3 && within(elapsed, 30.0),
        format!("max relative error band_logistic {band:.2e}, reference_conv {conv:.2e}, {elapsed:?}"),
    )
}

fn main() {
    let mut lines = Vec::new();
    let mut record = |n: usize, name: &str, o: Outcome| {
        let line = format!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        println!("{line}");
        lines.push((o.pass, line));
    };

    let tmp = tempfile::tempdir().unwrap();
    let a = end_to_end(tmp.path(), "a", SyntheticConfig::default(), 1);
    let b = end_to_end(tmp.path(), "b", SyntheticConfig::default(), 3);
    let null = end_to_end(
        tmp.path(),
        "null",
        SyntheticConfig {
            effect_size: 0.0,
            ..SyntheticConfig::default()
        },
        0,
    );
    let res = results(&a);

    record(1, "enumeration", enumeration());
    record(2, "leakage freedom", leakage(&a, &res));
    record(3, "pipeline shape and normalization", pipeline_shape());
    record(4, "determinism", determinism(&a, &b));
    record(5, "channel recovery", recovery(&a, &res, &null));
    record(6, "trend", trend(&res));
    record(7, "metric oracles", metric_oracles());
    record(8, "theory suite", theory_suite());
    record(9, "gradient check", gradients());

    let failed = lines.iter().filter(|(p, _)| !p).count();
    println!("acceptance: {} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
