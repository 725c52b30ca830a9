//! Experiment configuration files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{
    load_labelled_features, make_common_suffix_task, make_generation_task, CommonSuffixSpec, SequenceDataset,
    SignalSource, SynthSpec,
};
use crate::training::{Architecture, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Grow the memory one module at a time.
    Incremental,
    /// Train all modules from the start.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    Generation {
        #[serde(default = "default_length")]
        length: usize,
        /// Plain-text signal, one value per line. The built-in synthesizer is
        /// used when absent.
        #[serde(default)]
        signal_file: Option<PathBuf>,
        #[serde(default)]
        synth: Option<SynthSpec>,
    },
    CommonSuffix(CommonSuffixSpec),
    FeatureCsv {
        /// Label file with `path,label[,split]` lines.
        labels: PathBuf,
    },
}

fn default_length() -> usize {
    300
}

impl TaskSpec {
    /// Copy with relative paths joined onto `base`.
    pub fn resolved(&self, base: &Path) -> TaskSpec {
        let join = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        match self {
            TaskSpec::Generation {
                length,
                signal_file,
                synth,
            } => TaskSpec::Generation {
                length: *length,
                signal_file: signal_file.as_ref().map(join),
                synth: synth.clone(),
            },
            TaskSpec::FeatureCsv { labels } => TaskSpec::FeatureCsv { labels: join(labels) },
            other => other.clone(),
        }
    }

    pub fn build(&self) -> Result<SequenceDataset> {
        match self {
            TaskSpec::Generation {
                length,
                signal_file,
                synth,
            } => {
                let source = match signal_file {
                    Some(p) => SignalSource::File(p.clone()),
                    None => SignalSource::Synth(synth.clone().unwrap_or_default()),
                };
                make_generation_task(&source, *length)
            }
            TaskSpec::CommonSuffix(spec) => make_common_suffix_task(spec),
            TaskSpec::FeatureCsv { labels } => load_labelled_features(labels),
        }
    }

    fn files(&self) -> Vec<(&'static str, &Path)> {
        match self {
            TaskSpec::Generation {
                signal_file: Some(p), ..
            } => vec![("task.signal_file", p.as_path())],
            TaskSpec::FeatureCsv { labels } => vec![("task.labels", labels.as_path())],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub task: TaskSpec,
    pub architecture: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    /// One run per seed; defaults to `[train.seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates a config file. Relative paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.task = cfg.task.resolved(base);
        if let Some(out) = &cfg.output_dir {
            if out.is_relative() {
                cfg.output_dir = Some(base.join(out));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.seeds.is_empty() {
            cfg.seeds = vec![cfg.train.seed];
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.architecture.validate()?;
        for (field, p) in self.task.files() {
            if !p.is_file() {
                return Err(Error::Config(format!("{field}: {} does not exist", p.display())));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds: duplicate seed".into()));
        }
        Ok(())
    }
}
