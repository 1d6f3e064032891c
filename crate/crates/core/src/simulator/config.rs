//! Flat `key = value` experiment configuration.
//!
//! Unknown keys are rejected, later assignments (including `--set`
//! overrides) replace earlier ones, and `#` starts a comment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::acquisition::{AcquisitionParams, DiscriminatorConfig, Strategy};
use crate::data_io::dataset::DatasetFormat;
use crate::data_io::synthetic::BlobConfig;
use crate::error::{Error, Result};
use crate::models::AdamWConfig;
use crate::stats::Correction;

pub const DEFAULT_SEEDS: [u64; 5] = [398048, 127003, 259479, 869323, 570852];

/// Every accepted key with its default, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset", ""),
    ("test_dataset", ""),
    ("format", ""),
    ("embeddings", ""),
    ("max_len", "42"),
    ("hash_dim", "300"),
    ("seed_set_size", "500"),
    ("batch_size", "50"),
    ("iterations", "30"),
    ("budget", ""),
    ("epochs", "30"),
    ("train_batch_size", "16"),
    ("seeds", "398048,127003,259479,869323,570852"),
    ("strategy", "cal"),
    ("t_cor", "0.2"),
    ("mc_passes", "10"),
    ("bald_mutual_information", "false"),
    ("discriminator_epochs", "30"),
    ("discriminator_learning_rate", "5e-5"),
    ("discriminator_hidden_width", "300"),
    ("discriminator_dropout", "0"),
    ("discriminator_unlabeled_sample", "0"),
    ("hidden_width", "300"),
    ("hidden_layers", "3"),
    ("dropout", "0.3"),
    ("learning_rate", "1e-4"),
    ("beta1", "0.9"),
    ("beta2", "0.999"),
    ("adam_epsilon", "1e-8"),
    ("weight_decay", "0.01"),
    ("dynamics_epochs", "0"),
    ("export_scores", "false"),
    ("datamap_epochs", "10"),
    ("datamap_split", "full"),
    ("synthetic_classes", "4"),
    ("synthetic_dim", "16"),
    ("synthetic_train", "2000"),
    ("synthetic_test", "1000"),
    ("synthetic_spread", "1.0"),
    ("synthetic_separation", "2.0"),
    ("synthetic_seed", "0"),
    ("aso_alpha", "0.05"),
    ("aso_bootstrap", "1000"),
    ("aso_correction", "ordered"),
    ("aso_scores", "pooled"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(BlobConfig),
    Files {
        train: PathBuf,
        test: PathBuf,
        format: Option<DatasetFormat>,
        /// Word-vector file; without it texts are feature-hashed.
        embeddings: Option<PathBuf>,
        max_len: usize,
        hash_dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatamapSplit {
    Full,
    SeedSet,
}

/// Which accuracies enter the ASO comparison of two strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsoScores {
    /// Every (seed, iteration) accuracy.
    Pooled,
    /// Only the accuracy after the last batch, one per seed.
    Final,
}

impl FromStr for AsoScores {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pooled" => Ok(AsoScores::Pooled),
            "final" => Ok(AsoScores::Final),
            other => Err(Error::config(
                "aso_scores",
                format!("expected pooled|final, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub dropout: f64,
    pub optimizer: AdamWConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub seed_set_size: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub epochs: usize,
    pub train_batch_size: usize,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub model: ModelSettings,
    pub acquisition: AcquisitionParams,
    /// Epochs that feed the data map (0 = all training epochs).
    pub dynamics_epochs: usize,
    pub export_scores: bool,
    pub datamap_epochs: usize,
    pub datamap_split: DatamapSplit,
    pub aso_alpha: f64,
    pub aso_bootstrap: usize,
    pub aso_correction: Correction,
    pub aso_scores: AsoScores,
    /// Resolved key/value pairs, the input of [`ExperimentConfig::hash`].
    resolved: BTreeMap<String, String>,
}

/// Raw assignments before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
    base_dir: Option<PathBuf>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_assignment(line).ok_or_else(|| {
                Error::config(
                    format!("line {}", i + 1),
                    format!("expected `key = value`, found `{line}`"),
                )
            })?;
            map.set(k, v)?;
        }
        Ok(map)
    }

    /// Relative dataset paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = ConfigMap::parse(&text)?;
        map.base_dir = path.parent().map(Path::to_path_buf);
        Ok(map)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::config(key, "unknown key"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = split_assignment(assignment).ok_or_else(|| {
            Error::config(assignment, "override must look like key=value")
        })?;
        self.set(k, v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn value(&self, key: &str) -> &str {
        self.get(key).unwrap_or_else(|| {
            KEYS.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .expect("key is listed")
        })
    }

    fn parse_as<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.value(key);
        raw.parse::<T>()
            .map_err(|e| Error::config(key, format!("cannot parse `{raw}`: {e}")))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.value(key);
        if raw.is_empty() {
            return None;
        }
        let p = PathBuf::from(raw);
        Some(match (&self.base_dir, p.is_relative()) {
            (Some(base), true) => base.join(p),
            _ => p,
        })
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        let dataset = match self.value("dataset") {
            "" => return Err(Error::config("dataset", "no dataset given")),
            "synthetic" => DatasetSource::Synthetic(BlobConfig {
                classes: self.parse_as("synthetic_classes")?,
                dim: self.parse_as("synthetic_dim")?,
                train: self.parse_as("synthetic_train")?,
                test: self.parse_as("synthetic_test")?,
                spread: self.parse_as("synthetic_spread")?,
                separation: self.parse_as("synthetic_separation")?,
                seed: self.parse_as("synthetic_seed")?,
            }),
            _ => {
                let format = match self.value("format") {
                    "" => None,
                    f => Some(f.parse()?),
                };
                DatasetSource::Files {
                    train: self.path("dataset").expect("non-empty"),
                    test: self
                        .path("test_dataset")
                        .ok_or_else(|| Error::config("test_dataset", "required for file datasets"))?,
                    format,
                    embeddings: self.path("embeddings"),
                    max_len: self.parse_as("max_len")?,
                    hash_dim: self.parse_as("hash_dim")?,
                }
            }
        };

        let seeds = parse_list::<u64>(self.value("seeds"), "seeds")?;
        let strategies = parse_list::<Strategy>(self.value("strategy"), "strategy")?;
        let discriminator = DiscriminatorConfig {
            hidden_width: self.parse_as("discriminator_hidden_width")?,
            dropout: self.parse_as("discriminator_dropout")?,
            optimizer: AdamWConfig {
                learning_rate: self.parse_as("discriminator_learning_rate")?,
                ..AdamWConfig::binary()
            },
            epochs: self.parse_as("discriminator_epochs")?,
            batch_size: self.parse_as("train_batch_size")?,
            unlabeled_sample: self.parse_as("discriminator_unlabeled_sample")?,
        };
        let acquisition = AcquisitionParams {
            mc_passes: self.parse_as("mc_passes")?,
            t_cor: self.parse_as("t_cor")?,
            bald_mutual_information: self.parse_as("bald_mutual_information")?,
            discriminator,
        };
        let model = ModelSettings {
            hidden_width: self.parse_as("hidden_width")?,
            hidden_layers: self.parse_as("hidden_layers")?,
            dropout: self.parse_as("dropout")?,
            optimizer: AdamWConfig {
                learning_rate: self.parse_as("learning_rate")?,
                beta1: self.parse_as("beta1")?,
                beta2: self.parse_as("beta2")?,
                epsilon: self.parse_as("adam_epsilon")?,
                weight_decay: self.parse_as("weight_decay")?,
            },
        };
        let datamap_split = match self.value("datamap_split") {
            "full" => DatamapSplit::Full,
            "seed" => DatamapSplit::SeedSet,
            other => {
                return Err(Error::config(
                    "datamap_split",
                    format!("expected full|seed, got `{other}`"),
                ))
            }
        };

        let batch_size: usize = self.parse_as("batch_size")?;
        let iterations: usize = self.parse_as("iterations")?;
        let mut resolved: BTreeMap<String, String> = KEYS
            .iter()
            .map(|(k, _)| (k.to_string(), self.value(k).to_string()))
            .collect();
        resolved.insert("budget".into(), (batch_size * iterations).to_string());

        let config = ExperimentConfig {
            dataset,
            seed_set_size: self.parse_as("seed_set_size")?,
            batch_size,
            iterations,
            epochs: self.parse_as("epochs")?,
            train_batch_size: self.parse_as("train_batch_size")?,
            seeds,
            strategies,
            model,
            acquisition,
            dynamics_epochs: self.parse_as("dynamics_epochs")?,
            export_scores: self.parse_as("export_scores")?,
            datamap_epochs: self.parse_as("datamap_epochs")?,
            datamap_split,
            aso_alpha: self.parse_as("aso_alpha")?,
            aso_bootstrap: self.parse_as("aso_bootstrap")?,
            aso_correction: self.value("aso_correction").parse()?,
            aso_scores: self.value("aso_scores").parse()?,
            resolved,
        };
        if let Some(raw) = self.get("budget").filter(|b| !b.is_empty()) {
            let budget: usize = self.parse_as("budget")?;
            if budget != config.budget() {
                return Err(Error::config(
                    "budget",
                    format!(
                        "{raw} differs from batch_size x iterations = {}",
                        config.budget()
                    ),
                ));
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_list<T: FromStr>(raw: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::config(key, format!("cannot parse `{s}`: {e}")))
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "list is empty"));
    }
    Ok(items)
}

fn require(ok: bool, key: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        ConfigMap::parse(text)?.build()
    }

    pub fn budget(&self) -> usize {
        self.batch_size * self.iterations
    }

    /// Checks that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        require(self.batch_size > 0, "batch_size", "must be positive")?;
        require(self.iterations > 0, "iterations", "must be positive")?;
        require(self.epochs > 0, "epochs", "must be positive")?;
        require(self.train_batch_size > 0, "train_batch_size", "must be positive")?;
        require(self.seed_set_size > 0, "seed_set_size", "must be positive")?;
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        require(distinct.len() == self.seeds.len(), "seeds", "seeds must be distinct")?;
        let distinct: BTreeSet<_> = self.strategies.iter().map(|s| s.tag()).collect();
        require(
            distinct.len() == self.strategies.len(),
            "strategy",
            "strategies must be distinct",
        )?;
        require(
            (0.0..1.0).contains(&self.acquisition.t_cor),
            "t_cor",
            "must lie in [0, 1)",
        )?;
        require(self.acquisition.mc_passes > 0, "mc_passes", "must be positive")?;
        require(
            self.acquisition.discriminator.epochs > 0,
            "discriminator_epochs",
            "must be positive",
        )?;
        require(
            self.acquisition.discriminator.hidden_width > 0,
            "discriminator_hidden_width",
            "must be positive",
        )?;
        require(
            (0.0..1.0).contains(&self.acquisition.discriminator.dropout),
            "discriminator_dropout",
            "must lie in [0, 1)",
        )?;
        require(self.model.hidden_width > 0, "hidden_width", "must be positive")?;
        require(self.model.hidden_layers > 0, "hidden_layers", "must be positive")?;
        require(
            (0.0..1.0).contains(&self.model.dropout),
            "dropout",
            "must lie in [0, 1)",
        )?;
        let opt = &self.model.optimizer;
        require(opt.learning_rate > 0.0, "learning_rate", "must be positive")?;
        require((0.0..1.0).contains(&opt.beta1), "beta1", "must lie in [0, 1)")?;
        require((0.0..1.0).contains(&opt.beta2), "beta2", "must lie in [0, 1)")?;
        require(opt.epsilon > 0.0, "adam_epsilon", "must be positive")?;
        require(opt.weight_decay >= 0.0, "weight_decay", "must be non-negative")?;
        require(
            self.acquisition.discriminator.optimizer.learning_rate > 0.0,
            "discriminator_learning_rate",
            "must be positive",
        )?;
        require(
            self.dynamics_epochs <= self.epochs,
            "dynamics_epochs",
            "cannot exceed epochs",
        )?;
        require(self.datamap_epochs > 0, "datamap_epochs", "must be positive")?;
        require(
            self.aso_alpha > 0.0 && self.aso_alpha <= 0.5,
            "aso_alpha",
            "must lie in (0, 0.5]",
        )?;
        require(self.aso_bootstrap >= 100, "aso_bootstrap", "must be at least 100")?;
        match &self.dataset {
            DatasetSource::Synthetic(b) => b.validate()?,
            DatasetSource::Files { max_len, hash_dim, embeddings, .. } => {
                require(*max_len > 0, "max_len", "must be positive")?;
                require(
                    embeddings.is_some() || *hash_dim >= 2,
                    "hash_dim",
                    "must be at least 2",
                )?;
            }
        }
        Ok(())
    }

    /// Checks against the loaded train pool.
    pub fn validate_pool(&self, train_size: usize, classes: usize) -> Result<()> {
        require(
            self.seed_set_size <= train_size,
            "seed_set_size",
            format!("{} exceeds the train pool of {train_size}", self.seed_set_size),
        )?;
        require(
            self.seed_set_size >= classes,
            "seed_set_size",
            format!("{} cannot cover {classes} classes", self.seed_set_size),
        )?;
        let unlabeled = train_size - self.seed_set_size;
        require(
            self.budget() <= unlabeled,
            "budget",
            format!(
                "budget {} exceeds the {unlabeled} unlabeled instances",
                self.budget()
            ),
        )
    }

    /// How many epochs of each training feed the data map.
    pub fn effective_dynamics_epochs(&self) -> usize {
        if self.dynamics_epochs == 0 {
            self.epochs
        } else {
            self.dynamics_epochs
        }
    }

    /// Canonical `key=value` lines of every setting after defaults.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn resolved(&self, key: &str) -> Option<&str> {
        self.resolved.get(key).map(String::as_str)
    }

    /// First 16 hex digits of SHA-256 over [`ExperimentConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Result<Self> {
        let joined = seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        self.seeds = seeds;
        self.resolved.insert("seeds".into(), joined);
        self.validate()?;
        Ok(self)
    }
}
