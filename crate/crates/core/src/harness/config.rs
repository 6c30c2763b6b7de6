//! Run configuration and the TOML config-file schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continual::ContinualConfig;
use crate::curvature::DENSE_DIM_CAP;
use crate::error::{Error, Result};
use crate::fisher::FisherMode;
use crate::meta::MetaConfig;
use crate::models::ModelSpec;

use super::stream::{default_continual, default_model, default_replay};
use super::{Method, StreamFamily, TaskStreamSpec};

/// How past tasks are re-sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ReplayKind {
    Buffer { capacity_per_task: usize },
    Generative,
}

/// Fully resolved configuration for one method on one stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub model: ModelSpec,
    pub continual: ContinualConfig,
    pub meta: Option<MetaConfig>,
    pub replay: ReplayKind,
    pub eval_interval: usize,
    pub seeds: Vec<u64>,
}

impl RunConfig {
    /// Per-family defaults for a method; the documented starting point for
    /// every experiment.
    pub fn defaults(stream: &TaskStreamSpec, method: Method) -> Self {
        RunConfig {
            method,
            model: default_model(stream),
            continual: default_continual(stream),
            meta: if method == Method::Ftml {
                Some(MetaConfig::default())
            } else {
                None
            },
            replay: default_replay(stream),
            eval_interval: 10,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }

    pub fn validate(&self, stream: &TaskStreamSpec) -> Result<()> {
        stream.validate()?;
        self.model.validate()?;
        self.continual.validate()?;
        if self.eval_interval == 0 {
            return Err(Error::InvalidConfig(
                "eval_interval must be positive".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        match (self.method, &self.meta) {
            (Method::Ftml, None) => {
                return Err(Error::InvalidConfig(
                    "method Ftml requires a [run.meta] section".into(),
                ));
            }
            (Method::Ftml, Some(m)) => m.validate()?,
            (_, Some(_)) => {
                return Err(Error::InvalidConfig(
                    "meta config is only valid with method Ftml".into(),
                ));
            }
            _ => {}
        }
        let family_ok = matches!(
            (stream.family, &self.model),
            (StreamFamily::GaussianShift, ModelSpec::GaussianMean { .. })
                | (StreamFamily::SinusoidRegression, ModelSpec::Mlp { .. })
                | (
                    StreamFamily::Mixture2DDiffusion,
                    ModelSpec::ToyDiffusion { .. }
                )
        );
        if !family_ok {
            return Err(Error::InvalidConfig(format!(
                "model family does not fit stream family {:?}",
                stream.family
            )));
        }
        let expected_dim = default_model(stream).input_dim();
        if self.model.input_dim() != expected_dim {
            return Err(Error::InvalidConfig(format!(
                "model input dimension {} does not match the stream's {}",
                self.model.input_dim(),
                expected_dim
            )));
        }
        if self.continual.fisher_mode == FisherMode::Full && self.model.param_dim() > DENSE_DIM_CAP
        {
            return Err(Error::InvalidConfig(format!(
                "full Fisher needs param dim <= {DENSE_DIM_CAP}, model has {}",
                self.model.param_dim()
            )));
        }
        if let ReplayKind::Buffer { capacity_per_task } = self.replay {
            if capacity_per_task == 0 {
                return Err(Error::InvalidConfig(
                    "buffer capacity_per_task must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// On-disk layout: a `[stream]` table plus a `[run]` table whose optional
/// sub-tables fall back to per-family defaults.
#[derive(Debug, Clone, Deserialize)]
pub struct ConfigFile {
    pub stream: TaskStreamSpec,
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunSection {
    pub method: Method,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub continual: Option<ContinualConfig>,
    pub meta: Option<MetaConfig>,
    pub replay: Option<ReplayKind>,
    pub model: Option<ModelSpec>,
}

fn default_eval_interval() -> usize {
    10
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<(TaskStreamSpec, RunConfig)> {
        let stream = self.stream.clone();
        let run = &self.run;
        let cfg = RunConfig {
            method: run.method,
            model: run.model.clone().unwrap_or_else(|| default_model(&stream)),
            continual: run
                .continual
                .clone()
                .unwrap_or_else(|| default_continual(&stream)),
            meta: match (run.method, run.meta.clone()) {
                (Method::Ftml, None) => Some(MetaConfig::default()),
                (_, m) => m,
            },
            replay: run.replay.unwrap_or_else(|| default_replay(&stream)),
            eval_interval: run.eval_interval,
            seeds: run.seeds.clone(),
        };
        cfg.validate(&stream)?;
        Ok((stream, cfg))
    }
}

/// Reads and resolves a TOML config file.
pub fn load_config(path: &Path) -> Result<(TaskStreamSpec, RunConfig)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ConfigFile = toml::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    file.resolve()
}
