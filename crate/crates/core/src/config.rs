//! Run configuration: one TOML file drives synthesis, evaluation and
//! reporting. All reference constants are overridable defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::SyntheticConfig;
use crate::eval::EvalConfig;
use crate::montage::build_reference_montage;
use crate::signal::PipelineConfig;

pub const REFERENCE_MONTAGE: &str = "reference65";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Where results and reports go (relative to the config file).
    pub output_dir: PathBuf,
    /// Directory holding `<population>.json` manifests.
    pub corpus_dir: PathBuf,
    /// Populations in evaluation order. Empty means the synthetic sites.
    pub populations: Vec<String>,
    pub montage: String,
    /// Recordings shorter than this are excluded (boundary kept).
    pub min_duration_s: f64,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
    /// Restrict the run to these n-gram levels; empty runs all.
    pub ngram_levels: Vec<usize>,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("results"),
            corpus_dir: PathBuf::from("corpus"),
            populations: Vec::new(),
            montage: REFERENCE_MONTAGE.to_string(),
            min_duration_s: 30.0,
            parallelism: 0,
            ngram_levels: Vec::new(),
            pipeline: PipelineConfig::default(),
            eval: EvalConfig::default(),
            synthetic: None,
            base_dir: PathBuf::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.montage != REFERENCE_MONTAGE {
            return err(format!("unknown montage `{}` (expected `{REFERENCE_MONTAGE}`)", self.montage));
        }
        if !(self.min_duration_s >= 0.0) {
            return err("min_duration_s must be non-negative".into());
        }
        self.pipeline.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.eval.validate().map_err(|e| ConfigError(e.to_string()))?;
        if let Some(s) = &self.synthetic {
            s.validate(&build_reference_montage()).map_err(|e| ConfigError(e.to_string()))?;
        }
        if self.populations.is_empty() && self.synthetic.is_none() {
            return err("either `populations` or a `[synthetic]` section is required".into());
        }
        let d = self.population_ids().len();
        if d < 2 {
            return err("at least two populations are required".into());
        }
        if let Some(&n) = self.ngram_levels.iter().find(|&&n| n == 0 || n >= d) {
            return err(format!("n-gram level {n} outside 1..={}", d - 1));
        }
        Ok(())
    }

    pub fn population_ids(&self) -> Vec<String> {
        if !self.populations.is_empty() {
            return self.populations.clone();
        }
        self.synthetic
            .as_ref()
            .map(|s| s.sites.iter().map(|x| x.population_id.clone()).collect())
            .unwrap_or_default()
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.resolve(&self.corpus_dir)
    }

    pub fn includes_level(&self, n: usize) -> bool {
        self.ngram_levels.is_empty() || self.ngram_levels.contains(&n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> RunConfig {
        RunConfig {
            synthetic: Some(SyntheticConfig::default()),
            ..RunConfig::default()
        }
    }

    #[test]
    fn defaults_carry_reference_constants() {
        let c = synthetic();
        assert_eq!(c.pipeline.target_rate_hz, 64.0);
        assert_eq!(c.pipeline.window_len, 16384);
        assert_eq!(c.pipeline.hop, 8192);
        assert_eq!(c.eval.base_seed, 10);
        assert_eq!(c.eval.selection_k, 4);
        assert_eq!(c.eval.top_k, vec![2, 4, 8]);
        assert_eq!(c.population_ids().len(), 5);
    }

    #[test]
    fn toml_round_trip() {
        let c = synthetic();
        let text = c.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn minimal_file() {
        let c = RunConfig::from_toml("populations = [\"A\", \"B\"]\n").unwrap();
        assert_eq!(c.population_ids(), vec!["A", "B"]);
        assert_eq!(c.min_duration_s, 30.0);
    }

    #[test]
    fn invalid_configs() {
        assert!(RunConfig::from_toml("").is_err());
        assert!(RunConfig::from_toml("populations = [\"A\"]").is_err());
        assert!(RunConfig::from_toml("populations = [\"A\", \"B\"]\nmontage = \"x\"").is_err());
        assert!(RunConfig::from_toml("populations = [\"A\", \"B\"]\nngram_levels = [2]").is_err());
        assert!(RunConfig::from_toml("populations = [\"A\", \"B\"]\nbogus = 1").is_err());
        assert!(RunConfig::from_toml("populations = [\"A\", \"B\"]\n[pipeline]\nwindow_len = 100").is_err());
    }
}
