use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::{AdamWState, MlpModel, Mode, PredictiveDistribution};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// What one pass over the labeled set produced.
///
/// `gold_probs` and `correct` come from a deterministic eval-mode pass taken
/// after the last update of the epoch, in the order of the input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub epoch: usize,
    pub batch_losses: Vec<f64>,
    pub gold_probs: Vec<f64>,
    pub correct: Vec<bool>,
}

impl EpochOutcome {
    pub fn mean_loss(&self) -> f64 {
        if self.batch_losses.is_empty() {
            return f64::NAN;
        }
        self.batch_losses.iter().sum::<f64>() / self.batch_losses.len() as f64
    }
}

pub fn train_epoch(
    model: &mut MlpModel,
    opt: &mut AdamWState,
    features: ArrayView2<f64>,
    labels: &[usize],
    batch_size: usize,
    epoch: usize,
    rng: &mut SimRng,
) -> Result<EpochOutcome> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if labels.len() != n {
        return Err(Error::Shape {
            layer: "labels".into(),
            expected: n,
            actual: labels.len(),
        });
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }

    let batch_losses = fit_epoch(model, opt, features, labels, batch_size, epoch, rng)?;
    let dist = model.forward(features, Mode::Eval, None)?;
    let gold_probs = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| dist.row(i)[y])
        .collect();
    let correct = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| dist.argmax(i) == y)
        .collect();

    Ok(EpochOutcome {
        epoch,
        batch_losses,
        gold_probs,
        correct,
    })
}

/// One shuffled pass of minibatch updates without the dynamics snapshot.
/// Returns the loss of every minibatch.
pub fn fit_epoch(
    model: &mut MlpModel,
    opt: &mut AdamWState,
    features: ArrayView2<f64>,
    labels: &[usize],
    batch_size: usize,
    epoch: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut batch_losses = Vec::with_capacity(n.div_ceil(batch_size));
    for (b, chunk) in order.chunks(batch_size).enumerate() {
        let x = features.select(Axis(0), chunk);
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let (loss, grads) = model.loss_and_gradients(x.view(), &y, Mode::Train, Some(rng))?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: b });
        }
        opt.step(model, &grads);
        batch_losses.push(loss);
    }
    Ok(batch_losses)
}

/// Every stochastic (dropout-active) pass, in order.
pub fn mc_dropout_passes(
    model: &MlpModel,
    features: ArrayView2<f64>,
    passes: usize,
    rng: &mut SimRng,
) -> Result<Vec<PredictiveDistribution>> {
    if passes == 0 {
        return Err(Error::InvalidArgument(
            "MC dropout needs at least one pass".into(),
        ));
    }
    (0..passes)
        .map(|_| model.forward(features, Mode::Train, Some(rng)))
        .collect()
}

/// Mean of `passes` dropout-active predictive distributions.
pub fn mc_dropout_predict(
    model: &MlpModel,
    features: ArrayView2<f64>,
    passes: usize,
    rng: &mut SimRng,
) -> Result<PredictiveDistribution> {
    let all = mc_dropout_passes(model, features, passes, rng)?;
    let mut sum = Array2::<f64>::zeros((features.nrows(), model.classes()));
    for dist in &all {
        sum += dist.probs();
    }
    sum /= passes as f64;
    Ok(PredictiveDistribution::new(sum))
}
