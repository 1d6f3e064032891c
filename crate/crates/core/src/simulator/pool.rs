use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Featurized instances of one split with their gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub names: Vec<String>,
}

impl LabeledSplit {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, names: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() || names.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "split has {} feature rows, {} labels and {} names",
                features.nrows(),
                labels.len(),
                names.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        Ok(LabeledSplit {
            features,
            labels,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn rows(&self, ids: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), ids)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }
}

/// Train pool (later split into 𝓛 and 𝓤) plus the held-out test split.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePool {
    pub train: LabeledSplit,
    pub test: LabeledSplit,
    pub class_names: Vec<String>,
    /// Stable digest of train/test names and labels, used to match runs.
    pub fingerprint: String,
}

impl InstancePool {
    pub fn new(train: LabeledSplit, test: LabeledSplit, class_names: Vec<String>) -> Result<Self> {
        let classes = class_names.len();
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if train.dim() != test.dim() {
            return Err(Error::Shape {
                layer: "test features".into(),
                expected: train.dim(),
                actual: test.dim(),
            });
        }
        if let Some(&y) = train.labels.iter().chain(&test.labels).find(|&&y| y >= classes) {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        // Ids only need to be unique within a split; both splits usually
        // number their lines from 0.
        for (split, tag) in [(&train, "train"), (&test, "test")] {
            let names: BTreeSet<&String> = split.names.iter().collect();
            if names.len() != split.len() {
                return Err(Error::InvalidArgument(format!("{tag} ids are not unique")));
            }
        }
        let fingerprint = fingerprint(&train, &test, &class_names);
        Ok(InstancePool {
            train,
            test,
            class_names,
            fingerprint,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }
}

fn fingerprint(train: &LabeledSplit, test: &LabeledSplit, classes: &[String]) -> String {
    let mut h = Sha256::new();
    for c in classes {
        h.update(c.as_bytes());
        h.update([0u8]);
    }
    for (tag, split) in [(b'r', train), (b'e', test)] {
        h.update([tag]);
        for (name, &y) in split.names.iter().zip(&split.labels) {
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update((y as u64).to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

/// The labeled/unlabeled partition of the train pool during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    labeled: BTreeSet<usize>,
    unlabeled: BTreeSet<usize>,
}

impl Partition {
    pub fn new(train_size: usize, seed_set: &[usize]) -> Result<Self> {
        let labeled: BTreeSet<usize> = seed_set.iter().copied().collect();
        if labeled.len() != seed_set.len() {
            return Err(Error::InvalidArgument("seed set has duplicates".into()));
        }
        if let Some(&bad) = labeled.iter().find(|&&i| i >= train_size) {
            return Err(Error::InvalidArgument(format!("seed id {bad} outside the pool")));
        }
        let unlabeled = (0..train_size).filter(|i| !labeled.contains(i)).collect();
        Ok(Partition { labeled, unlabeled })
    }

    /// Ascending ids.
    pub fn labeled(&self) -> Vec<usize> {
        self.labeled.iter().copied().collect()
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn labeled_len(&self) -> usize {
        self.labeled.len()
    }

    pub fn unlabeled_len(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn is_labeled(&self, id: usize) -> bool {
        self.labeled.contains(&id)
    }

    /// The oracle step: moves `batch` from 𝓤 to 𝓛.
    pub fn reveal(&mut self, batch: &[usize]) -> Result<()> {
        let distinct: BTreeSet<usize> = batch.iter().copied().collect();
        if distinct.len() != batch.len() {
            return Err(Error::InvalidArgument("batch has duplicate ids".into()));
        }
        if let Some(&bad) = batch.iter().find(|id| !self.unlabeled.contains(id)) {
            return Err(Error::InvalidArgument(format!(
                "instance {bad} is not in the unlabeled pool"
            )));
        }
        for id in batch {
            self.unlabeled.remove(id);
            self.labeled.insert(*id);
        }
        Ok(())
    }

    pub fn is_disjoint(&self) -> bool {
        self.labeled.is_disjoint(&self.unlabeled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reveal_moves_ids() {
        let mut p = Partition::new(6, &[0, 3]).unwrap();
        assert_eq!(p.unlabeled(), vec![1, 2, 4, 5]);
        p.reveal(&[5, 1]).unwrap();
        assert_eq!(p.labeled(), vec![0, 1, 3, 5]);
        assert!(p.is_disjoint());
        assert!(p.reveal(&[0]).is_err());
        assert!(p.reveal(&[2, 2]).is_err());
    }

    #[test]
    fn ids_are_unique_per_split() {
        let split = |names: &[&str]| {
            LabeledSplit::new(
                Array2::zeros((names.len(), 1)),
                (0..names.len()).map(|i| i % 2).collect(),
                names.iter().map(|s| s.to_string()).collect(),
            )
            .unwrap()
        };
        let classes = vec!["x".to_string(), "y".to_string()];
        assert!(InstancePool::new(split(&["0", "1"]), split(&["0"]), classes.clone()).is_ok());
        assert!(InstancePool::new(split(&["0", "0"]), split(&["0"]), classes.clone()).is_err());
        assert!(InstancePool::new(split(&["0", "1"]), split(&["2", "2"]), classes).is_err());
    }
}
