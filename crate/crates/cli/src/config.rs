//! Run configuration: defaults, TOML overrides, and the resolved-config echo.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use s3o_core::executor::NoiseModel;
use s3o_core::planner::{PlannerConfig, PlannerMode};
use s3o_core::world::GeneratorConfig;
use serde::{Deserialize, Serialize};

/// Every tunable of a run. Unset keys keep their defaults; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub modes: Vec<PlannerMode>,
    pub planner: PlannerConfig,
    pub noise: NoiseModel,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 50,
            modes: PlannerMode::ALL.to_vec(),
            planner: PlannerConfig::default(),
            noise: NoiseModel::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Defaults overlaid with the file at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.noise.validate()?;
        if self.trials == 0 {
            bail!("trials must be positive");
        }
        if self.modes.is_empty() {
            bail!("at least one mode is required");
        }
        Ok(())
    }

    /// Writes the resolved config next to `output` as `<output>.config.toml`.
    pub fn echo_beside(&self, output: &Path) -> Result<PathBuf> {
        let path = sibling(output, "config.toml");
        fs::write(&path, self.to_toml()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `<path>.<suffix>`, keeping the full original file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.planner.cost.lambda, 150.0);
        assert_eq!(cfg.planner.top_k, 5);
    }

    #[test]
    fn partial_override_keeps_defaults() {
        let cfg = RunConfig::from_toml("trials = 3\n[planner.cost]\nsample_budget = 50\n").unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.planner.cost.sample_budget, 50);
        assert_eq!(cfg.planner.cost.gamma, 20.0);
        assert_eq!(cfg.noise, NoiseModel::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("trails = 3\n").is_err());
        assert!(RunConfig::from_toml("[planner.cost]\nspeeed = 1.0\n").is_err());
    }

    #[test]
    fn modes_parse_by_name() {
        let cfg = RunConfig::from_toml("modes = [\"S3O_GROP_STAR\", \"V_GROP\"]\n").unwrap();
        assert_eq!(
            cfg.modes,
            vec![PlannerMode::S3oGropStar, PlannerMode::VGrop]
        );
    }

    #[test]
    fn sibling_keeps_extension() {
        assert_eq!(
            sibling(Path::new("out/plan.json"), "config.toml"),
            PathBuf::from("out/plan.json.config.toml")
        );
    }
}
