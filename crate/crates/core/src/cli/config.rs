use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bake::BakeConfig;
use crate::curation::CurationConfig;
use crate::diffusion::{SoftMaskParams, DEFAULT_LAMBDA};
use crate::render::RenderConfig;
use crate::strength::HeadTrainConfig;

/// Roots that relative `--in`/`--out` style paths are resolved against.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl PathsConfig {
    pub fn input_path(&self, p: &Path) -> PathBuf {
        join_root(self.input.as_deref(), p)
    }

    pub fn output_path(&self, p: &Path) -> PathBuf {
        join_root(self.output.as_deref(), p)
    }
}

fn join_root(root: Option<&Path>, p: &Path) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

/// Everything a subcommand may read from `--config`. Missing keys take
/// their defaults; unknown keys are an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub curation: CurationConfig,
    pub render: RenderConfig,
    pub bake: BakeConfig,
    pub mask: SoftMaskParams,
    pub lambda: f64,
    pub strength: HeadTrainConfig,
    pub paths: PathsConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            curation: CurationConfig::default(),
            render: RenderConfig::default(),
            bake: BakeConfig::default(),
            mask: SoftMaskParams::default(),
            lambda: DEFAULT_LAMBDA,
            strength: HeadTrainConfig::default(),
            paths: PathsConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.curation.validate().map_err(|e| e.to_string())?;
        self.render.validate().map_err(|e| e.to_string())?;
        self.bake.validate().map_err(|e| e.to_string())?;
        self.mask.validate().map_err(|e| e.to_string())?;
        self.strength.validate().map_err(|e| e.to_string())?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        Ok(())
    }

    /// Applies a command-line seed, which wins over the file, and copies the
    /// resolved seed into the render settings.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.render.seed = self.seed;
        self.strength.seed = self.seed;
        self
    }
}
