//! Experiment configuration: a strict JSON document (unknown keys are
//! rejected) describing the system shape, the SNR/frame grid, the training
//! recipes to run, and where the dataset lives.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hybeam_core::mpnet::StopRule;
use hybeam_core::training::Strategy;
use hybeam_core::{Error, Result};

/// Which dictionary parameterization the trained estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryVariant {
    /// Real antenna x-positions (A parameters).
    Constrained,
    /// Free complex atoms (2·A·N parameters).
    Unconstrained,
}

fn default_p_total() -> f64 {
    4.0
}
fn default_epochs() -> usize {
    8
}
fn default_batch() -> usize {
    64
}
fn default_lr_dictionary() -> f64 {
    1e-3
}
fn default_lr_positions() -> f64 {
    1e-4
}
fn default_lr_steps() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    10
}
fn default_eval_partitions() -> usize {
    4
}

/// One experiment grid: every `(snr_db, frames)` cell runs the configured
/// strategies plus the fixed baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base-station antennas (A).
    pub antennas: usize,
    /// RF chains (L): combiner rows per sounding frame and precoder width.
    pub rf_chains: usize,
    /// Dictionary grid size (N).
    pub grid_len: usize,
    /// Unrolled ascent depth (K).
    pub depth: usize,
    /// Users per precoding group (U).
    pub users: usize,
    /// Uplink SNR points in dB.
    pub snr_db: Vec<f64>,
    /// Sounding frame counts (T sweep).
    pub frames: Vec<usize>,
    /// Training recipes to run; empty means baselines only.
    pub strategies: Vec<Strategy>,
    /// Dictionary parameterization for every trained estimator.
    pub variant: DictionaryVariant,
    /// Dataset root containing `train/` and `test/` splits.
    pub dataset: PathBuf,
    /// Downlink power budget (the sum-rate uses `σ² = ζ²`).
    #[serde(default = "default_p_total")]
    pub p_total: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// One gradient step per incoming channel, in arrival order.
    #[serde(default)]
    pub streaming: bool,
    #[serde(default = "default_lr_dictionary")]
    pub lr_dictionary: f64,
    #[serde(default = "default_lr_positions")]
    pub lr_positions: f64,
    #[serde(default = "default_lr_steps")]
    pub lr_steps: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Pursuit stopping rule, shared by trained and baseline estimators.
    #[serde(default)]
    pub stop: StopRule,
    /// How many independent group partitions of the test split feed the
    /// sum-rate evaluation (each partition contributes `test/users` groups).
    #[serde(default = "default_eval_partitions")]
    pub eval_partitions: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.antennas < 2 {
            return Err(Error::Config("antennas must be at least 2".into()));
        }
        if self.rf_chains == 0 || self.rf_chains > self.antennas {
            return Err(Error::Config(format!(
                "rf_chains must lie in 1..={}, got {}",
                self.antennas, self.rf_chains
            )));
        }
        if self.grid_len < self.antennas {
            return Err(Error::Config("grid_len must be at least the antenna count".into()));
        }
        if self.depth == 0 || self.users == 0 {
            return Err(Error::Config("depth and users must be at least 1".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_db must be a non-empty list of finite values".into()));
        }
        if self.frames.is_empty() || self.frames.contains(&0) {
            return Err(Error::Config("frames must be a non-empty list of counts ≥ 1".into()));
        }
        if !(self.p_total > 0.0 && self.p_total.is_finite()) {
            return Err(Error::Config("p_total must be positive and finite".into()));
        }
        if self.epochs == 0 || self.batch == 0 || self.patience == 0 || self.eval_partitions == 0 {
            return Err(Error::Config(
                "epochs, batch, patience and eval_partitions must be at least 1".into(),
            ));
        }
        for (name, lr) in [
            ("lr_dictionary", self.lr_dictionary),
            ("lr_positions", self.lr_positions),
            ("lr_steps", self.lr_steps),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        self.stop.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("config encoding failed: {e}")))?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }
}

/// The accepted config document, one line per field: name, type, and
/// whether a default exists. This is the schema `load` enforces (with
/// unknown keys rejected).
pub fn schema_text() -> String {
    let lines = [
        ("antennas", "integer ≥ 2", "required"),
        ("rf_chains", "integer in 1..=antennas", "required"),
        ("grid_len", "integer ≥ antennas", "required"),
        ("depth", "integer ≥ 1", "required"),
        ("users", "integer ≥ 1", "required"),
        ("snr_db", "non-empty array of finite numbers", "required"),
        ("frames", "non-empty array of integers ≥ 1", "required"),
        (
            "strategies",
            "array of lbl-supervised | lbl-unsupervised | e2e-cold | e2e-warm (may be empty)",
            "required",
        ),
        ("variant", "constrained | unconstrained", "required"),
        ("dataset", "path to a directory containing train/ and test/", "required"),
        ("p_total", "positive number", "default 4.0"),
        ("epochs", "integer ≥ 1", "default 8"),
        ("batch", "integer ≥ 1", "default 64"),
        ("streaming", "boolean", "default false"),
        ("lr_dictionary", "non-negative number", "default 0.001"),
        ("lr_positions", "non-negative number", "default 0.0001"),
        ("lr_steps", "non-negative number", "default 0.001"),
        ("patience", "integer ≥ 1", "default 10"),
        (
            "stop",
            "{ mode: fixed_depth | residual_threshold, max_atoms, threshold_factor, refit }",
            "default residual_threshold ×1.0, max 12 atoms",
        ),
        ("eval_partitions", "integer ≥ 1", "default 4"),
        ("seed", "unsigned integer", "required"),
    ];
    let mut out = String::from("experiment config fields (unknown keys rejected):\n");
    for (name, ty, req) in lines {
        out.push_str(&format!("  {name:<16} {ty}  [{req}]\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json(dir: &Path) -> String {
        format!(
            r#"{{
  "antennas": 8, "rf_chains": 4, "grid_len": 16, "depth": 2, "users": 2,
  "snr_db": [15.0], "frames": [1], "strategies": [],
  "variant": "constrained", "dataset": "{}", "seed": 7
}}"#,
            dir.display()
        )
    }

    #[test]
    fn minimal_config_parses_and_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.batch, 64);
        assert_eq!(cfg.eval_partitions, 4);
        assert!(!cfg.streaming);
        assert_eq!(cfg.variant, DictionaryVariant::Constrained);
    }

    #[test]
    fn unknown_keys_and_unknown_strategies_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let with_unknown = minimal_json(dir.path()).replace("\"seed\": 7", "\"seed\": 7, \"mystery\": 1");
        std::fs::write(&path, with_unknown).unwrap();
        assert!(matches!(ExperimentConfig::load(&path), Err(Error::Config(_))));

        let bad_strategy = minimal_json(dir.path())
            .replace("\"strategies\": []", "\"strategies\": [\"alchemy\"]");
        std::fs::write(&path, bad_strategy).unwrap();
        assert!(matches!(ExperimentConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn invariant_violations_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let zero_depth = minimal_json(dir.path()).replace("\"depth\": 2", "\"depth\": 0");
        std::fs::write(&path, zero_depth).unwrap();
        assert!(matches!(ExperimentConfig::load(&path), Err(Error::Config(_))));

        let wide_chains = minimal_json(dir.path()).replace("\"rf_chains\": 4", "\"rf_chains\": 9");
        std::fs::write(&path, wide_chains).unwrap();
        assert!(matches!(ExperimentConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let copy = dir.path().join("copy.json");
        cfg.save(&copy).unwrap();
        let back = ExperimentConfig::load(&copy).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&cfg).unwrap());
    }
}
