//! Gaussian-blob classification data for tests and smoke runs.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use crate::simulator::pool::{InstancePool, LabeledSplit};

/// Class centres are `separation * z / sqrt(dim)` with `z ~ N(0, I)`, so the
/// expected distance between two centres is about `separation * sqrt(2)`
/// whatever the dimension. Points add isotropic noise with std `spread`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobConfig {
    pub classes: usize,
    pub dim: usize,
    pub train: usize,
    pub test: usize,
    pub spread: f64,
    pub separation: f64,
    pub seed: u64,
}

impl BlobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("synthetic_classes", "need at least 2 classes"));
        }
        if self.dim == 0 {
            return Err(Error::config("synthetic_dim", "must be positive"));
        }
        if self.train < self.classes {
            return Err(Error::config("synthetic_train", "fewer instances than classes"));
        }
        if self.test == 0 {
            return Err(Error::config("synthetic_test", "must be positive"));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::config("synthetic_spread", "must be positive"));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::config("synthetic_separation", "must be non-negative"));
        }
        Ok(())
    }
}

/// Balanced classes (`label = i mod classes`, then shuffled) for both splits.
pub fn generate_blobs(config: &BlobConfig) -> Result<InstancePool> {
    config.validate()?;
    let mut rng = stream(config.seed, purpose::SYNTHETIC, 0);
    let scale = config.separation / (config.dim as f64).sqrt();
    let centres = Array2::from_shape_fn((config.classes, config.dim), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    });

    let split = |n: usize, prefix: &str, index: u64| -> Result<LabeledSplit> {
        let mut rng = stream(config.seed, purpose::SYNTHETIC, index);
        let mut labels: Vec<usize> = (0..n).map(|i| i % config.classes).collect();
        labels.shuffle(&mut rng);
        let mut features = Array2::zeros((n, config.dim));
        for (i, &y) in labels.iter().enumerate() {
            for j in 0..config.dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                features[[i, j]] = centres[[y, j]] + config.spread * z;
            }
        }
        let names = (0..n).map(|i| format!("{prefix}{i}")).collect();
        LabeledSplit::new(features, labels, names)
    };
    let train = split(config.train, "train-", 1)?;
    let test = split(config.test, "test-", 2)?;
    let class_names = (0..config.classes).map(|c| format!("c{c}")).collect();
    InstancePool::new(train, test, class_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> BlobConfig {
        BlobConfig {
            classes: 3,
            dim: 4,
            train: 30,
            test: 9,
            spread: 0.5,
            separation: 3.0,
            seed: 11,
        }
    }

    #[test]
    fn balanced_and_reproducible() {
        let a = generate_blobs(&config()).unwrap();
        let b = generate_blobs(&config()).unwrap();
        assert_eq!(a, b);
        for c in 0..3 {
            assert_eq!(a.train.labels.iter().filter(|&&y| y == c).count(), 10);
        }
        assert_eq!(a.test.len(), 9);
    }

    #[test]
    fn seed_changes_data() {
        let mut other = config();
        other.seed = 12;
        assert_ne!(generate_blobs(&config()).unwrap().train, generate_blobs(&other).unwrap().train);
    }
}
