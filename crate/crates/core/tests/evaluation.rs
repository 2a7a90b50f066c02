use std::path::Path;

use xpop_core::analytics::{build_transfer_matrix, Metric};
use xpop_core::cohort::{generate_synthetic, MontageSpec, SiteConfig};
use xpop_core::eval::{enumerate_plans, make_inner_folds, rank_channels, run_plan, Corpus};
use xpop_core::runner;
use xpop_core::seed::derive_seed;
use xpop_core::{build_reference_montage, EvalConfig, PipelineConfig, Regime, RunConfig, SyntheticConfig};

fn site(id: &str, n: usize, jitter: f64) -> SiteConfig {
    SiteConfig {
        population_id: id.into(),
        n_control: n,
        n_case: n,
        sample_rate_hz: 128.0,
        montage: MontageSpec::Preset("standard_10_20".into()),
        gain: 1.0,
        line_noise_hz: 50.0,
        line_noise_amp: 0.5,
        spectral_tilt: 0.0,
        tilt_jitter: jitter,
        duration_s: None,
    }
}

fn small_corpus(dir: &Path) -> Corpus {
    let cfg = SyntheticConfig {
        duration_s: [60.0, 90.0],
        sites: vec![site("A", 5, 0.2), site("B", 5, 0.2), site("C", 5, 0.2)],
        ..SyntheticConfig::default()
    };
    let montage = build_reference_montage();
    let manifests = generate_synthetic(&cfg, &montage, dir).unwrap();
    let eval = EvalConfig::default();
    Corpus::load(&manifests, &montage, &PipelineConfig::default(), &eval.specs()).unwrap()
}

#[test]
fn selection_ignores_held_out_data() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let cfg = EvalConfig::default();
    let plan = &enumerate_plans(3)[0];
    let before = run_plan(plan, &corpus, &cfg).unwrap();

    // Scramble every frame of the held-out population.
    let mut perturbed = corpus.clone();
    for &k in &corpus.populations[plan.test].patients {
        for enc in &mut perturbed.patients[k].encoded {
            for s in enc {
                for (i, v) in s.x.iter_mut().enumerate() {
                    *v = 1.0 - *v + 0.01 * i as f32;
                }
            }
        }
    }
    let seed = derive_seed(cfg.base_seed, plan.plan_index, 0);
    let folds = make_inner_folds(plan, &perturbed, cfg.k_folds, seed).unwrap();
    assert_eq!(folds, before.folds);
    assert_eq!(rank_channels(plan, &folds, &perturbed, &cfg).unwrap(), before.ranking);

    let after = run_plan(plan, &perturbed, &cfg).unwrap();
    for (a, b) in after.regimes.iter().zip(&before.regimes) {
        assert_eq!(a.channels, b.channels);
        assert_eq!(a.checkpoint_epoch, b.checkpoint_epoch);
        assert_eq!(a.checkpoint_val_accuracy, b.checkpoint_val_accuracy);
    }
}

#[test]
fn wider_nuisance_transfers_better_than_narrower() {
    // Site A's per-patient spectral tilt varies widely around B's fixed tilt,
    // so A's nuisance structure contains B's.
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        corpus_dir: dir.path().join("corpus"),
        output_dir: dir.path().join("out"),
        synthetic: Some(SyntheticConfig {
            effect_size: 1.0,
            duration_s: [60.0, 120.0],
            sites: vec![site("A", 10, 0.8), site("B", 10, 0.0)],
            ..SyntheticConfig::default()
        }),
        ..RunConfig::default()
    };
    runner::synthesize(&cfg).unwrap();
    runner::run(&cfg).unwrap();
    let (index, results) = runner::load_results(&cfg.output_path()).unwrap();
    let m = build_transfer_matrix(&results, &index.populations, Regime::Top(4), Metric::Accuracy).unwrap();
    let (ab, ba) = (m.get(0, 1).unwrap(), m.get(1, 0).unwrap());
    assert!(ab > ba, "A->B {ab} vs B->A {ba}");

    // Only single-population plans exist: transfer matrices but no scaling fit.
    let data = runner::report(&cfg.output_path()).unwrap();
    assert_eq!(data.transfer.len(), 4);
    assert!(data.scaling.iter().all(|r| r.fit.is_none() && r.note.starts_with("insufficient")));
}
