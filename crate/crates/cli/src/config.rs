//! Run configuration: a flat `key = value` text file with `#` comments,
//! overridden by command-line flags. Unknown keys are rejected so typos
//! surface instead of silently using defaults.

use crate::CliError;
use muscleseg_core::phantom::{CohortSpec, PhantomGeometry};
use muscleseg_core::prep::CropSpec;
use muscleseg_core::trainer::TrainConfig;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(CliError::Usage(format!(
                "scale must be 'desk' or 'paper', got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub workdir: PathBuf,
    pub scale: Scale,
    pub seed: u64,
    /// cohort size for cohort-gen
    pub n: usize,
    /// write image/mask volumes during cohort-gen
    pub images: bool,
    /// leading subjects used for training
    pub train_count: usize,
    /// subjects after the training split used by eval (0 = all remaining)
    pub eval_count: usize,
    /// per-epoch validation subjects taken from the eval split
    pub val_count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub aug_count: usize,
    pub cleanup_components: bool,
    /// knots of the age-trend smoother
    pub gam_knots: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("work"),
            scale: Scale::Desk,
            seed: 0,
            n: 30,
            images: true,
            train_count: 24,
            eval_count: 0,
            val_count: 0,
            epochs: 3,
            batch_size: 3,
            learning_rate: 1e-4,
            aug_count: 7,
            cleanup_components: false,
            gam_knots: 10,
        }
    }
}

impl RunConfig {
    pub fn geometry(&self) -> PhantomGeometry {
        match self.scale {
            Scale::Desk => PhantomGeometry::desk_scale(),
            Scale::Paper => PhantomGeometry::paper_scale(),
        }
    }

    pub fn crop(&self) -> CropSpec {
        match self.scale {
            Scale::Desk => CropSpec::desk_scale(),
            Scale::Paper => CropSpec::paper_scale(),
        }
    }

    pub fn cohort_spec(&self) -> CohortSpec {
        CohortSpec::new(self.n, self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = match self.scale {
            Scale::Desk => TrainConfig::desk_scale(self.seed),
            Scale::Paper => TrainConfig::paper_scale(self.seed),
        };
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.learning_rate;
        cfg
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| {
            CliError::Usage(format!("config key {key:?}: invalid value {value:?} ({e})"))
        };
        match key {
            "workdir" => self.workdir = PathBuf::from(value),
            "scale" => self.scale = Scale::parse(value)?,
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            "n" => self.n = value.parse().map_err(|e| bad(&e))?,
            "images" => self.images = parse_bool(key, value)?,
            "train_count" => self.train_count = value.parse().map_err(|e| bad(&e))?,
            "eval_count" => self.eval_count = value.parse().map_err(|e| bad(&e))?,
            "val_count" => self.val_count = value.parse().map_err(|e| bad(&e))?,
            "epochs" => self.epochs = value.parse().map_err(|e| bad(&e))?,
            "batch_size" => self.batch_size = value.parse().map_err(|e| bad(&e))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|e| bad(&e))?,
            "aug_count" => self.aug_count = value.parse().map_err(|e| bad(&e))?,
            "cleanup_components" => self.cleanup_components = parse_bool(key, value)?,
            "gam_knots" => self.gam_knots = value.parse().map_err(|e| bad(&e))?,
            other => {
                return Err(CliError::Usage(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Apply a config file's key = value lines.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {path:?}: {e}")))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(CliError::Usage(format!(
            "config key {key:?}: expected a boolean, got {other:?}"
        ))),
    }
}
