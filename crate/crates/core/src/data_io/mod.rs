//! Dataset loading, featurization and file exports.

pub mod dataset;
pub mod features;
pub mod svg;
pub mod synthetic;
pub mod tables;

use crate::error::{Error, Result};
use crate::simulator::config::DatasetSource;
use crate::simulator::pool::{InstancePool, LabeledSplit};

use dataset::{load_dataset, DatasetFormat, RawDataset};
use features::{featurize, featurize_hashed, EmbeddingTable, FeatureTable};

/// Seed of the hashing featurizer; fixed so features never depend on a run seed.
pub const HASH_SEED: u64 = 0x5eed;

/// Loads, featurizes and checks both splits.
pub fn load_pool(source: &DatasetSource) -> Result<InstancePool> {
    match source {
        DatasetSource::Synthetic(blobs) => synthetic::generate_blobs(blobs),
        DatasetSource::Files {
            train,
            test,
            format,
            embeddings,
            max_len,
            hash_dim,
        } => {
            let fmt_train = format.unwrap_or_else(|| DatasetFormat::from_path(train));
            let fmt_test = format.unwrap_or_else(|| DatasetFormat::from_path(test));
            let raw_train = load_dataset(train, fmt_train, None)?;
            if raw_train.is_empty() {
                return Err(Error::config("dataset", "train split is empty"));
            }
            let raw_test = load_dataset(test, fmt_test, Some(&raw_train.labels))?;
            let table = match embeddings {
                Some(path) => Some(EmbeddingTable::load(path)?),
                None => None,
            };
            let featurize_split = |raw: &RawDataset| -> Result<FeatureTable> {
                match &table {
                    Some(t) => Ok(featurize(raw, t, *max_len)),
                    None => featurize_hashed(raw, *hash_dim, HASH_SEED),
                }
            };
            let train_features = featurize_split(&raw_train)?;
            let test_features = featurize_split(&raw_test)?;
            log::info!(
                "loaded {} train / {} test instances, {} classes, features {}",
                raw_train.len(),
                raw_test.len(),
                raw_train.class_count(),
                train_features.featurizer
            );
            let train_split = LabeledSplit::new(
                train_features.features,
                raw_train.label_indices(),
                raw_train.ids(),
            )?;
            let test_split = LabeledSplit::new(
                test_features.features,
                raw_test.label_indices(),
                raw_test.ids(),
            )?;
            InstancePool::new(train_split, test_split, raw_train.labels.clone())
        }
    }
}
