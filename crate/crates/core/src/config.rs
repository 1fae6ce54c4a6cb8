//! TOML run configuration shared by `train` and `evaluate`.
//!
//! ```toml
//! [data]
//! train = "data/train"
//! test = "data/test"
//!
//! [train]
//! learning_rate = 0.001
//! batch_size = 16
//! margin = 0.2
//! epochs = 30
//!
//! [fusion.cross_movie]
//! appearance = 0.3
//! cast = 1.0
//! action = 0.1
//!
//! [rerank]
//! n = 15
//!
//! [pruning]
//! k = 2
//! j = 2
//!
//! [metrics]
//! cross_movie_ks = [1, 5, 10]
//!
//! [evaluate]
//! method = "efm+cim"
//! settings = ["cross_movie", "within_movie"]
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qap::CimParams;
use crate::retrieval::{FusionWeights, Method, NodeSet, PipelineConfig, Setting};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    pub cross_movie: FusionWeights,
    pub within_movie: FusionWeights,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            cross_movie: FusionWeights::CROSS_MOVIE,
            within_movie: FusionWeights::WITHIN_MOVIE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankSection {
    pub n: usize,
}

impl Default for RerankSection {
    fn default() -> Self {
        RerankSection { n: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub cross_movie_ks: Vec<usize>,
    pub within_movie_ks: Vec<usize>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            cross_movie_ks: vec![1, 5, 10],
            within_movie_ks: vec![1, 5, 7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub method: Method,
    pub nodes: NodeSet,
    pub normalize_efm: bool,
    pub settings: Vec<Setting>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        EvaluateSection {
            method: p.method,
            nodes: p.nodes,
            normalize_efm: p.normalize_efm,
            settings: p.settings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataPaths,
    pub train: TrainConfig,
    pub fusion: FusionSection,
    pub rerank: RerankSection,
    pub pruning: CimParams,
    pub metrics: MetricsSection,
    pub evaluate: EvaluateSection,
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            method: self.evaluate.method,
            nodes: self.evaluate.nodes,
            normalize_efm: self.evaluate.normalize_efm,
            cross_movie_weights: self.fusion.cross_movie,
            within_movie_weights: self.fusion.within_movie,
            rerank_n: self.rerank.n,
            cim: self.pruning,
            cross_movie_ks: self.metrics.cross_movie_ks.clone(),
            within_movie_ks: self.metrics.within_movie_ks.clone(),
            settings: self.evaluate.settings.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.fusion.cross_movie.validate()?;
        self.fusion.within_movie.validate()?;
        self.pipeline().validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    1 + text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
}

/// Parses and validates a run configuration. `file` names the source in
/// diagnostics.
pub fn parse_run_config(text: &str, file: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_of(text, s.start));
        Error::parse(file, line, e.message().to_string())
    })?;
    cfg.validate()
        .map_err(|e| Error::parse(file, 1, e.to_string()))?;
    Ok(cfg)
}

pub fn read_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run_config(&text, &path.display().to_string())
}
