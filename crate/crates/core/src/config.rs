//! Declarative run configuration: one TOML file plus `TEMPNORM_*`
//! environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::TrainConfig;
use crate::nn::ModelConfig;
use crate::pipeline::PipelineOptions;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Documents to tag and score (JSONL).
    pub data: Option<PathBuf>,
    /// Training documents for `--train-first`; defaults to `data`.
    pub train_data: Option<PathBuf>,
    pub normalizer: Option<PathBuf>,
    pub tagger: Option<PathBuf>,
    pub crf: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Annotated output documents (JSONL).
    pub output: Option<PathBuf>,
    /// TOML file with `high` and `low` language lists.
    pub groups: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub model: ModelConfig,
    pub normalizer: TrainConfig,
    pub tagger: TrainConfig,
    pub crf: crate::decoding::CrfTrainConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            model: ModelConfig::default(),
            normalizer: TrainConfig::default(),
            tagger: TrainConfig { steps: 1000, ..TrainConfig::default() },
            crf: Default::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub pipeline: PipelineOptions,
    pub training: TrainingSection,
}

fn parse_env<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key}={value:?}: {e}")))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies recognised `TEMPNORM_*` variables; other keys are ignored.
    pub fn apply_overrides<K, V>(&mut self, vars: impl IntoIterator<Item = (K, V)>) -> Result<()>
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let (key, value) = (k.as_ref(), v.as_ref());
            let path = || Some(PathBuf::from(value));
            match key {
                "TEMPNORM_DATA" => self.paths.data = path(),
                "TEMPNORM_TRAIN_DATA" => self.paths.train_data = path(),
                "TEMPNORM_NORMALIZER" => self.paths.normalizer = path(),
                "TEMPNORM_TAGGER" => self.paths.tagger = path(),
                "TEMPNORM_CRF" => self.paths.crf = path(),
                "TEMPNORM_REPORT" => self.paths.report = path(),
                "TEMPNORM_OUTPUT" => self.paths.output = path(),
                "TEMPNORM_GROUPS" => self.paths.groups = path(),
                "TEMPNORM_EXTRACTION" => self.pipeline.extraction = parse_env(key, value)?,
                "TEMPNORM_DECODE" => self.pipeline.decode = parse_env(key, value)?,
                "TEMPNORM_RESTRICTED" => self.pipeline.restricted = parse_env(key, value)?,
                "TEMPNORM_TENSE_SOURCE" => self.pipeline.tense_source = parse_env(key, value)?,
                "TEMPNORM_SHROVE_TIDE_OFFSET" => self.pipeline.anchor.shrove_tide_offset = parse_env(key, value)?,
                "TEMPNORM_SEED" => self.pipeline.seed = parse_env(key, value)?,
                "TEMPNORM_WORKERS" => self.pipeline.workers = parse_env(key, value)?,
                "TEMPNORM_TRAIN_STEPS" => self.training.normalizer.steps = parse_env(key, value)?,
                "TEMPNORM_TAGGER_STEPS" => self.training.tagger.steps = parse_env(key, value)?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Checks that every file the run reads exists. With `train_first`
    /// checkpoints are outputs and only training data is required.
    pub fn check_inputs(&self, train_first: bool) -> Result<()> {
        let need = |name: &str, p: &Option<PathBuf>| -> Result<()> {
            match p {
                None => Err(Error::Config(format!("paths.{name} is not set"))),
                Some(p) if !p.exists() => Err(Error::Config(format!("paths.{name}: {} does not exist", p.display()))),
                Some(_) => Ok(()),
            }
        };
        need("data", &self.paths.data)?;
        if let Some(g) = &self.paths.groups {
            need("groups", &Some(g.clone()))?;
        }
        let uses_tagger = self.pipeline.extraction == crate::pipeline::ExtractionMode::Model;
        let uses_crf = self.pipeline.decode == crate::decoding::DecodeStrategy::ViterbiCrf;
        if train_first {
            if let Some(t) = &self.paths.train_data {
                need("train_data", &Some(t.clone()))?;
            }
            for (name, p) in [("normalizer", &self.paths.normalizer), ("tagger", &self.paths.tagger), ("crf", &self.paths.crf)] {
                let used = name == "normalizer" || (name == "tagger" && uses_tagger) || (name == "crf" && uses_crf);
                if used && p.is_none() {
                    return Err(Error::Config(format!("paths.{name} is not set")));
                }
            }
            return Ok(());
        }
        need("normalizer", &self.paths.normalizer)?;
        if uses_tagger {
            need("tagger", &self.paths.tagger)?;
        }
        if uses_crf {
            need("crf", &self.paths.crf)?;
        }
        Ok(())
    }
}

/// Reads a TOML file with `high` and `low` language lists.
pub fn load_groups(path: impl AsRef<Path>) -> Result<crate::eval::Groups> {
    let text = std::fs::read_to_string(path.as_ref())?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))
}
