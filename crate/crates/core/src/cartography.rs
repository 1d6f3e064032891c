//! Training dynamics and data maps.
//!
//! A [`DynamicsLog`] holds, for every labeled instance and every epoch, the
//! probability the model assigns to the gold label and whether the predicted
//! label was correct. From it we derive per-instance
//!
//! * confidence: mean gold-label probability over the epochs,
//! * variability: population standard deviation of that probability,
//! * correctness: fraction of epochs with a correct prediction,
//!
//! and the binary high-cor / low-cor labels CAL trains its discriminator on.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::models::EpochOutcome;

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsLog {
    ids: Vec<usize>,
    /// instances x epochs
    gold_probs: Array2<f64>,
    correct: Array2<bool>,
}

impl DynamicsLog {
    pub fn new(ids: Vec<usize>, gold_probs: Array2<f64>, correct: Array2<bool>) -> Result<Self> {
        if gold_probs.dim() != correct.dim() {
            return Err(Error::InvalidArgument(format!(
                "probability matrix {:?} and correctness matrix {:?} differ in shape",
                gold_probs.dim(),
                correct.dim()
            )));
        }
        if gold_probs.nrows() != ids.len() {
            return Err(Error::Shape {
                layer: "dynamics ids".into(),
                expected: gold_probs.nrows(),
                actual: ids.len(),
            });
        }
        if gold_probs.ncols() == 0 {
            return Err(Error::InvalidArgument("dynamics need at least one epoch".into()));
        }
        if let Some(p) = gold_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!(
                "gold-label probability {p} outside [0, 1]"
            )));
        }
        Ok(DynamicsLog {
            ids,
            gold_probs,
            correct,
        })
    }

    /// Stacks per-epoch outcomes (all over the same rows) into a log.
    pub fn from_epochs(ids: Vec<usize>, epochs: &[EpochOutcome]) -> Result<Self> {
        let n = ids.len();
        let e = epochs.len();
        for outcome in epochs {
            if outcome.gold_probs.len() != n || outcome.correct.len() != n {
                return Err(Error::Shape {
                    layer: format!("epoch {} outcome", outcome.epoch),
                    expected: n,
                    actual: outcome.gold_probs.len(),
                });
            }
        }
        let probs = Array2::from_shape_fn((n, e), |(i, j)| epochs[j].gold_probs[i]);
        let correct = Array2::from_shape_fn((n, e), |(i, j)| epochs[j].correct[i]);
        Self::new(ids, probs, correct)
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn gold_probs(&self) -> &Array2<f64> {
        &self.gold_probs
    }

    pub fn correct(&self) -> &Array2<bool> {
        &self.correct
    }

    pub fn epochs(&self) -> usize {
        self.gold_probs.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn compute_confidence(log: &DynamicsLog) -> Vec<f64> {
    let e = log.epochs() as f64;
    log.gold_probs
        .rows()
        .into_iter()
        .map(|row| row.iter().sum::<f64>() / e)
        .collect()
}

/// Population (divisor E) standard deviation of the gold-label probability.
pub fn compute_variability(log: &DynamicsLog) -> Vec<f64> {
    let e = log.epochs() as f64;
    log.gold_probs
        .rows()
        .into_iter()
        .map(|row| {
            let first = row[0];
            if row.iter().all(|&p| p == first) {
                return 0.0;
            }
            let mean = row.iter().sum::<f64>() / e;
            let ss: f64 = row.iter().map(|p| (p - mean) * (p - mean)).sum();
            (ss / e).sqrt()
        })
        .collect()
}

pub fn compute_correctness(log: &DynamicsLog) -> Vec<f64> {
    let e = log.epochs() as f64;
    log.correct
        .rows()
        .into_iter()
        .map(|row| row.iter().filter(|&&c| c).count() as f64 / e)
        .collect()
}

/// Per-instance (confidence, variability, correctness).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMapStats {
    pub ids: Vec<usize>,
    pub confidence: Vec<f64>,
    pub variability: Vec<f64>,
    pub correctness: Vec<f64>,
    pub epochs: usize,
}

impl DataMapStats {
    pub fn from_log(log: &DynamicsLog) -> Self {
        DataMapStats {
            ids: log.ids.clone(),
            confidence: compute_confidence(log),
            variability: compute_variability(log),
            correctness: compute_correctness(log),
            epochs: log.epochs(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Position of `id` in this map.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartographyLabels {
    pub ids: Vec<usize>,
    /// 1 = high-cor, 0 = low-cor
    pub labels: Vec<u8>,
    pub t_cor: f64,
}

impl CartographyLabels {
    pub fn high_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn low_count(&self) -> usize {
        self.labels.len() - self.high_count()
    }

    pub fn as_classes(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| usize::from(l)).collect()
    }
}

/// High-cor (1) iff correctness is strictly above `t_cor`.
pub fn assign_cartography_labels(stats: &DataMapStats, t_cor: f64) -> Result<CartographyLabels> {
    if !(0.0..1.0).contains(&t_cor) {
        return Err(Error::InvalidArgument(format!(
            "t_cor must lie in [0, 1), got {t_cor}"
        )));
    }
    let labels = stats
        .correctness
        .iter()
        .map(|&phi| u8::from(phi > t_cor))
        .collect();
    Ok(CartographyLabels {
        ids: stats.ids.clone(),
        labels,
        t_cor,
    })
}

/// One row of an exported data map.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMapRow {
    pub id: String,
    pub confidence: f64,
    pub variability: f64,
    pub correctness: f64,
    pub gold_label: String,
    pub cartography_label: u8,
}

pub const DATAMAP_HEADER: [&str; 6] = [
    "id",
    "confidence",
    "variability",
    "correctness",
    "gold_label",
    "cartography_label",
];

/// Joins stats, labels and display names into export rows.
pub fn datamap_rows(
    stats: &DataMapStats,
    labels: &CartographyLabels,
    names: &[String],
    gold_labels: &[String],
) -> Result<Vec<DataMapRow>> {
    if labels.ids != stats.ids {
        return Err(Error::Mismatch(
            "cartography labels and data map cover different instances".into(),
        ));
    }
    stats
        .ids
        .iter()
        .enumerate()
        .map(|(k, &id)| {
            let name = names.get(id).ok_or_else(|| {
                Error::InvalidArgument(format!("no name for instance index {id}"))
            })?;
            let gold = gold_labels.get(id).ok_or_else(|| {
                Error::InvalidArgument(format!("no gold label for instance index {id}"))
            })?;
            Ok(DataMapRow {
                id: name.clone(),
                confidence: stats.confidence[k],
                variability: stats.variability[k],
                correctness: stats.correctness[k],
                gold_label: gold.clone(),
                cartography_label: labels.labels[k],
            })
        })
        .collect()
}
