//! Run configuration: TOML with namespaced keys, e.g. `env.delta = 0.04`.

use std::path::{Path, PathBuf};

use dynfold_core::cloth::ClothParams;
use dynfold_core::env::EpisodeConfig;
use dynfold_core::randomization::ParamRanges;
use dynfold_core::render::VisualRanges;
use dynfold_learn::train::{LearnerConfig, Schedule};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyConfig {
    pub candidates: usize,
    /// Size M of the identified pool.
    pub pool_size: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self { candidates: 100, pool_size: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub count: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { count: 4 }
    }
}

/// File locations; relative paths are taken from the config file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub demos: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub schedule: Schedule,
    pub env: EpisodeConfig,
    pub learner: LearnerConfig,
    /// Fabric the demonstrations are recorded on.
    pub cloth: ClothParams,
    pub ranges: ParamRanges,
    pub visual: VisualRanges,
    pub identify: IdentifyConfig,
    pub demos: DemoConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Read and validate `path`, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|_| CliError::MissingFile { path: path.to_path_buf(), what: "config" })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.demos, &mut cfg.paths.pool, &mut cfg.paths.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
        self.env.validate().map_err(|e| usage(&e))?;
        self.cloth.validate().map_err(|e| usage(&e))?;
        self.ranges.validate().map_err(|e| usage(&e))?;
        self.visual.validate().map_err(|e| usage(&e))?;
        self.learner.validate().map_err(|e| usage(&e))?;
        if self.visual.image_size != self.learner.net.image_size {
            return Err(CliError::Usage(format!(
                "visual.image_size ({}) must equal learner.net.image_size ({})",
                self.visual.image_size, self.learner.net.image_size
            )));
        }
        if self.identify.pool_size == 0 || self.identify.candidates < self.identify.pool_size {
            return Err(CliError::Usage("identify.candidates must be >= identify.pool_size >= 1".into()));
        }
        Ok(())
    }

    /// Output directory, defaulting to `runs/`.
    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }
}

/// Demands that an optional configured path is present and exists.
pub fn require(path: &Option<PathBuf>, what: &'static str) -> Result<PathBuf> {
    let p = path.clone().ok_or_else(|| CliError::Usage(format!("paths.{what} is not set")))?;
    if !p.exists() {
        return Err(CliError::MissingFile { path: p, what });
    }
    Ok(p)
}
