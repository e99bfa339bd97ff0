//! Layered run configuration: reference defaults, then a flat key = value
//! file, then explicit command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::model::ModelConfig;
use crate::sim::{sha256_hex_file, GlanceDataset, GlanceSource, LiveSim};
use crate::trainer::{PoseSelection, TrainConfig};
use crate::{Error, Result};

/// Where `record-dataset` writes by default and where `--env dataset` looks.
pub const DEFAULT_DATASET: &str = "data/glances.dat";

/// Glance provider: live analytic simulation or pre-recorded nearest lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Sim,
    Dataset,
}

impl EnvKind {
    pub fn key(self) -> &'static str {
        match self {
            EnvKind::Sim => "sim",
            EnvKind::Dataset => "dataset",
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(EnvKind::Sim),
            "dataset" => Ok(EnvKind::Dataset),
            other => Err(Error::config(format!("unknown env `{other}`"))),
        }
    }
}

/// Everything a run needs beyond its subcommand arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub env: EnvKind,
    pub dataset: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            env: EnvKind::Sim,
            dataset: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("bad value `{value}` for `{key}`: {e}")))
}

impl Settings {
    /// Applies one configuration entry. Keys mirror the field names.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "glances" => t.glances = parse_value(key, value)?,
            "lr_initial" => t.lr_initial = parse_value(key, value)?,
            "lr_decay" => t.lr_decay = parse_value(key, value)?,
            "lr_period" => t.lr_period = parse_value(key, value)?,
            "lr_min" => t.lr_min = parse_value(key, value)?,
            "momentum" => t.momentum = parse_value(key, value)?,
            "location_weight" => t.location_weight = parse_value(key, value)?,
            "discount" => t.discount = parse_value(key, value)?,
            "total_steps" => t.total_steps = parse_value(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            "snapshot_interval" => t.snapshot_interval = parse_value(key, value)?,
            "snapshot_batches" => t.snapshot_batches = parse_value(key, value)?,
            "ce_all_glances" => t.ce_all_glances = parse_value(key, value)?,
            "uniform_policy" => t.uniform_policy = parse_value(key, value)?,
            "grad_clip" => {
                t.grad_clip = if value == "none" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            "combiner" => self.model.combiner = value.parse()?,
            "core" => self.model.core = value.parse()?,
            "env" => self.env = value.parse()?,
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            other => return Err(Error::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Loads a flat `key = value` file over the current values. `#` starts a
    /// comment; blank lines are skipped; unknown keys are errors.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn selection(&self) -> PoseSelection {
        if self.train.uniform_policy {
            PoseSelection::Uniform
        } else {
            PoseSelection::Policy
        }
    }
}

/// An opened glance provider plus the provenance a manifest needs.
pub enum EnvHandle {
    Sim(LiveSim),
    Dataset {
        data: GlanceDataset,
        path: PathBuf,
        sha256: String,
    },
}

impl EnvHandle {
    pub fn open(kind: EnvKind, dataset: Option<&Path>) -> Result<Self> {
        match kind {
            EnvKind::Sim => Ok(EnvHandle::Sim(LiveSim)),
            EnvKind::Dataset => {
                let path = dataset.unwrap_or_else(|| Path::new(DEFAULT_DATASET));
                if !path.exists() {
                    return Err(Error::config(format!(
                        "dataset file `{}` not found; run `ham record-dataset` first",
                        path.display()
                    )));
                }
                Ok(EnvHandle::Dataset {
                    data: GlanceDataset::load(path)?,
                    path: path.to_owned(),
                    sha256: sha256_hex_file(path)?,
                })
            }
        }
    }

    pub fn source(&self) -> &dyn GlanceSource {
        match self {
            EnvHandle::Sim(sim) => sim,
            EnvHandle::Dataset { data, .. } => data,
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            EnvHandle::Sim(_) => EnvKind::Sim,
            EnvHandle::Dataset { .. } => EnvKind::Dataset,
        }
    }

    pub fn dataset_path(&self) -> Option<&Path> {
        match self {
            EnvHandle::Sim(_) => None,
            EnvHandle::Dataset { path, .. } => Some(path),
        }
    }

    pub fn dataset_sha256(&self) -> Option<&str> {
        match self {
            EnvHandle::Sim(_) => None,
            EnvHandle::Dataset { sha256, .. } => Some(sha256),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CombinerMode;
    use std::io::Write as _;

    #[test]
    fn defaults_are_untouched_by_an_empty_file() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# just a comment\n\n").unwrap();
        let mut s = Settings::default();
        s.apply_file(file.path()).unwrap();
        assert_eq!(s, Settings::default());
        assert_eq!(s.train.batch_size, 64);
        assert_eq!(s.train.lr_initial, 8e-4);
    }

    #[test]
    fn file_values_override_defaults() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            "glances = 5\nlr_initial = 1e-3  # inline comment\ncombiner=multiply\nenv = dataset\ngrad_clip = none"
        )
        .unwrap();
        let mut s = Settings::default();
        s.apply_file(file.path()).unwrap();
        assert_eq!(s.train.glances, 5);
        assert_eq!(s.train.lr_initial, 1e-3);
        assert_eq!(s.model.combiner, CombinerMode::Multiply);
        assert_eq!(s.env, EnvKind::Dataset);
        assert_eq!(s.train.grad_clip, None);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut s = Settings::default();
        let err = s.apply_kv("glancess", "3").unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
        let err = s.apply_kv("glances", "three").unwrap_err();
        assert!(err.to_string().contains("bad value"));
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "no equals sign here").unwrap();
        assert!(Settings::default().apply_file(file.path()).is_err());
    }

    #[test]
    fn env_names_parse_and_missing_dataset_is_reported() {
        assert_eq!("sim".parse::<EnvKind>().unwrap(), EnvKind::Sim);
        assert_eq!("dataset".parse::<EnvKind>().unwrap(), EnvKind::Dataset);
        assert!("gazebo".parse::<EnvKind>().is_err());
        let err = EnvHandle::open(EnvKind::Dataset, Some(Path::new("/no/such/file.dat")))
            .err()
            .expect("missing dataset should fail");
        assert!(err.to_string().contains("record-dataset"));
    }
}
