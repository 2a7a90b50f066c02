//! End-to-end commands: synthesize a corpus, run every evaluation plan with
//! resumable per-plan results, and build report tables.

mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cohort::{
    corpus_stats, filter_eligible, generate_synthetic, load_manifest, validate_corpus, validate_site_montages,
    CohortError, CohortManifest,
};
use crate::config::{ConfigError, RunConfig};
use crate::eval::{enumerate_plans, run_plan, Corpus, EvalError, EvaluationPlan, EvaluationResult};
use crate::montage::build_reference_montage;

pub use report::{report, ReportData, ScalingRow};

pub const CONFIG_COPY: &str = "config.toml";
pub const INDEX_FILE: &str = "index.json";
pub const RESULTS_DIR: &str = "results";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Eval(EvalError),
    #[error("data leakage: {0}")]
    Leakage(String),
    #[error("incomplete results, missing: {}", .0.join(", "))]
    IncompleteResults(Vec<String>),
    #[error("report: {0}")]
    Report(String),
}

impl From<EvalError> for RunError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::LeakageDetected(m) => RunError::Leakage(m),
            EvalError::Config(m) => RunError::Config(m),
            other => RunError::Eval(other),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl RunError {
    /// Process exit code: 1 runtime failure, 2 configuration error,
    /// 3 leakage or invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Leakage(_) => 3,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    if n == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Writes the configured synthetic corpus into the corpus directory.
pub fn synthesize(cfg: &RunConfig) -> Result<Vec<CohortManifest>, RunError> {
    let synth = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| RunError::Config("no [synthetic] section in config".into()))?;
    let montage = build_reference_montage();
    let dir = cfg.corpus_path();
    let manifests = with_threads(cfg.parallelism, || generate_synthetic(synth, &montage, &dir))??;
    log::info!("wrote {} manifests to {}", manifests.len(), dir.display());
    Ok(manifests)
}

/// Loads, validates and eligibility-filters the manifests of the configured
/// populations, in configuration order.
pub fn load_corpus_manifests(cfg: &RunConfig) -> Result<Vec<CohortManifest>, RunError> {
    let dir = cfg.corpus_path();
    let montage = build_reference_montage();
    let mut manifests = Vec::new();
    for id in cfg.population_ids() {
        let m = load_manifest(&dir.join(format!("{id}.json")))?;
        if m.population_id != id {
            return Err(RunError::Config(format!(
                "manifest {id}.json declares population `{}`",
                m.population_id
            )));
        }
        let (m, _) = filter_eligible(&m, cfg.min_duration_s);
        manifests.push(m);
    }
    validate_corpus(&manifests)?;
    validate_site_montages(&manifests, &montage)?;
    Ok(manifests)
}

/// One row of the run index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub plan: EvaluationPlan,
    pub train_populations: Vec<String>,
    pub test_population: String,
    pub file: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndex {
    pub populations: Vec<String>,
    pub regimes: Vec<crate::eval::Regime>,
    pub plans: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlanRecord {
    hash: String,
    result: EvaluationResult,
}

/// Fingerprint of everything a plan result depends on.
fn plan_hash(cfg: &RunConfig, manifests: &[CohortManifest], plan: &EvaluationPlan) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&cfg.pipeline).expect("serializable"));
    h.update(serde_json::to_vec(&cfg.eval).expect("serializable"));
    h.update(cfg.min_duration_s.to_le_bytes());
    for m in manifests {
        h.update(serde_json::to_vec(m).expect("serializable"));
    }
    h.update(serde_json::to_vec(plan).expect("serializable"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn read_record(path: &Path, hash: &str) -> Option<EvaluationResult> {
    let text = fs::read_to_string(path).ok()?;
    match serde_json::from_str::<PlanRecord>(&text) {
        Ok(r) if r.hash == hash => Some(r.result),
        Ok(_) => {
            log::info!("{}: stale result, recomputing", path.display());
            None
        }
        Err(e) => {
            log::warn!("{}: unreadable result ({e}), recomputing", path.display());
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub total: usize,
    pub computed: usize,
    pub reused: usize,
}

/// Runs every configured plan. Completed plans whose content hash still
/// matches are skipped, so an interrupted run resumes where it stopped.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let out = cfg.output_path();
    let manifests = load_corpus_manifests(cfg)?;
    write_file(&out.join(CONFIG_COPY), &cfg.to_toml())?;
    let stats = corpus_stats(&manifests, &cfg.pipeline);
    write_file(&out.join("corpus_stats.json"), &to_json(&stats))?;

    let populations: Vec<String> = manifests.iter().map(|m| m.population_id.clone()).collect();
    let plans: Vec<EvaluationPlan> = enumerate_plans(populations.len())
        .into_iter()
        .filter(|p| cfg.includes_level(p.ngram_level))
        .collect();
    let entries: Vec<IndexEntry> = plans
        .iter()
        .map(|p| IndexEntry {
            plan: p.clone(),
            train_populations: p.train.iter().map(|&i| populations[i].clone()).collect(),
            test_population: populations[p.test].clone(),
            file: format!("{RESULTS_DIR}/plan_{:03}.json", p.plan_index),
            hash: plan_hash(cfg, &manifests, p),
        })
        .collect();
    let index = RunIndex {
        populations: populations.clone(),
        regimes: cfg.eval.regimes(),
        plans: entries.clone(),
    };
    write_file(&out.join(INDEX_FILE), &to_json(&index))?;

    let pending: Vec<&IndexEntry> = entries
        .iter()
        .filter(|e| read_record(&out.join(&e.file), &e.hash).is_none())
        .collect();
    let summary = RunSummary {
        total: entries.len(),
        computed: pending.len(),
        reused: entries.len() - pending.len(),
    };
    log::info!(
        "{} plans: {} to compute, {} reused",
        summary.total,
        summary.computed,
        summary.reused
    );
    if pending.is_empty() {
        return Ok(summary);
    }

    let montage = build_reference_montage();
    with_threads(cfg.parallelism, || -> Result<(), RunError> {
        let corpus = Corpus::load(&manifests, &montage, &cfg.pipeline, &cfg.eval.specs())?;
        if corpus.population_ids() != populations {
            return Err(RunError::Config("a population has no eligible patients".into()));
        }
        for e in &pending {
            log::info!(
                "plan {} ({} -> {})",
                e.plan.plan_index,
                e.train_populations.join("+"),
                e.test_population
            );
            let result = run_plan(&e.plan, &corpus, &cfg.eval)?;
            let record = PlanRecord {
                hash: e.hash.clone(),
                result,
            };
            write_file(&out.join(&e.file), &to_json(&record))?;
        }
        Ok(())
    })??;
    Ok(summary)
}

/// Reads the index and every plan result of a run directory.
pub fn load_results(dir: &Path) -> Result<(RunIndex, Vec<EvaluationResult>), RunError> {
    let index_path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&index_path)
        .map_err(|_| RunError::IncompleteResults(vec![format!("{INDEX_FILE} in {}", dir.display())]))?;
    let index: RunIndex =
        serde_json::from_str(&text).map_err(|e| RunError::Report(format!("{}: {e}", index_path.display())))?;
    let mut results = Vec::with_capacity(index.plans.len());
    let mut missing = Vec::new();
    for e in &index.plans {
        match read_record(&dir.join(&e.file), &e.hash) {
            Some(r) => results.push(r),
            None => missing.push(format!(
                "plan {} ({} -> {})",
                e.plan.plan_index,
                e.train_populations.join("+"),
                e.test_population
            )),
        }
    }
    if index.plans.is_empty() {
        missing.push("no plans in index".into());
    }
    if !missing.is_empty() {
        return Err(RunError::IncompleteResults(missing));
    }
    Ok((index, results))
}
