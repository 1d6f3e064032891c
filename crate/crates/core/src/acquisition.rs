//! Query strategies.
//!
//! Every strategy scores the unlabeled candidates and returns the best `k`.
//! Ordering is by score (descending, except CAL which prefers the smallest
//! distance to 0.5) with ties broken by ascending instance id. Scores are
//! compared after rounding to a 1e-12 grid, so values that agree up to
//! floating-point noise count as ties.
//!
//! Strategies only ever see features of the unlabeled pool; gold labels are
//! not part of [`AcquisitionRequest`].

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::cartography::CartographyLabels;
use crate::error::{Error, Result};
use crate::models::{
    fit_epoch, mc_dropout_passes, AdamWConfig, AdamWState, MlpConfig, MlpModel, Mode,
    PredictiveDistribution,
};
use crate::rng::{purpose, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Random,
    LeastConfidence,
    MaxEntropy,
    Bald,
    Dal,
    Cal,
    DalCal,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Random,
        Strategy::LeastConfidence,
        Strategy::MaxEntropy,
        Strategy::Bald,
        Strategy::Dal,
        Strategy::Cal,
        Strategy::DalCal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::LeastConfidence => "lc",
            Strategy::MaxEntropy => "entropy",
            Strategy::Bald => "bald",
            Strategy::Dal => "dal",
            Strategy::Cal => "cal",
            Strategy::DalCal => "dal+cal",
        }
    }

    pub fn needs_discriminator(self) -> bool {
        matches!(self, Strategy::Dal | Strategy::Cal | Strategy::DalCal)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_ascii_lowercase();
        let strategy = match normalized.as_str() {
            "random" | "rand" => Strategy::Random,
            "lc" | "leastconfidence" | "least_confidence" => Strategy::LeastConfidence,
            "entropy" | "ent" | "max_entropy" => Strategy::MaxEntropy,
            "bald" => Strategy::Bald,
            "dal" => Strategy::Dal,
            "cal" | "cartography" => Strategy::Cal,
            "dal+cal" | "dal_cal" | "hybrid" => Strategy::DalCal,
            _ => {
                return Err(Error::config(
                    "strategy",
                    format!("unknown strategy `{s}`"),
                ))
            }
        };
        Ok(strategy)
    }
}

/// Discriminator (θ′) settings shared by DAL and CAL.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub hidden_width: usize,
    pub dropout: f64,
    pub optimizer: AdamWConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// DAL only: train on at most this many unlabeled instances (0 = all).
    pub unlabeled_sample: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            hidden_width: 300,
            dropout: 0.0,
            optimizer: AdamWConfig::binary(),
            epochs: 30,
            batch_size: 16,
            unlabeled_sample: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionParams {
    pub mc_passes: usize,
    pub t_cor: f64,
    /// Score BALD by mutual information instead of the entropy of the MC mean.
    pub bald_mutual_information: bool,
    pub discriminator: DiscriminatorConfig,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        AcquisitionParams {
            mc_passes: 10,
            t_cor: 0.2,
            bald_mutual_information: false,
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

/// Features of a subset of the pool, without labels.
#[derive(Debug, Clone, Copy)]
pub struct PoolView<'a> {
    pub ids: &'a [usize],
    pub features: ArrayView2<'a, f64>,
}

impl<'a> PoolView<'a> {
    pub fn new(ids: &'a [usize], features: ArrayView2<'a, f64>) -> Result<Self> {
        if ids.len() != features.nrows() {
            return Err(Error::Shape {
                layer: "pool view".into(),
                expected: features.nrows(),
                actual: ids.len(),
            });
        }
        Ok(PoolView { ids, features })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub struct AcquisitionRequest<'a> {
    pub model: &'a MlpModel,
    pub labeled: PoolView<'a>,
    pub unlabeled: PoolView<'a>,
    pub k: usize,
    pub params: &'a AcquisitionParams,
    /// CAL: high-/low-cor labels for the rows of `labeled`.
    pub cartography: Option<&'a CartographyLabels>,
    pub seed: u64,
    pub iteration: u64,
}

impl AcquisitionRequest<'_> {
    fn check(&self) -> Result<()> {
        if self.k > self.unlabeled.len() {
            return Err(Error::BudgetExceedsPool {
                requested: self.k,
                available: self.unlabeled.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub chosen: Vec<usize>,
    /// (candidate id, score) for every unlabeled candidate, in pool order.
    pub scores: Vec<(usize, f64)>,
    /// Set when the strategy had to fall back to another rule.
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descending,
    Ascending,
}

fn quantize(score: f64) -> i64 {
    (score * 1e12).round() as i64
}

/// Candidate positions sorted by score, ties by ascending id.
pub fn rank(ids: &[usize], scores: &[f64], direction: Direction) -> Vec<usize> {
    assert_eq!(ids.len(), scores.len());
    let keys: Vec<i64> = scores.iter().map(|&s| quantize(s)).collect();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = match direction {
            Direction::Descending => keys[b].cmp(&keys[a]),
            Direction::Ascending => keys[a].cmp(&keys[b]),
        };
        by_score.then(ids[a].cmp(&ids[b]))
    });
    order
}

fn finish(
    ids: &[usize],
    scores: Vec<f64>,
    direction: Direction,
    k: usize,
) -> SelectionResult {
    let order = rank(ids, &scores, direction);
    let chosen = order.iter().take(k).map(|&p| ids[p]).collect();
    SelectionResult {
        chosen,
        scores: ids.iter().copied().zip(scores).collect(),
        fallback: None,
    }
}

/// `1 - max_y P(y|x)`
pub fn least_confidence_score(probs: &[f64]) -> f64 {
    1.0 - probs.iter().fold(f64::NEG_INFINITY, |m, &p| m.max(p))
}

/// Shannon entropy in bits; zero-probability terms contribute nothing.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

fn score_rows(dist: &PredictiveDistribution, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..dist.len()).map(|i| f(dist.row(i))).collect()
}

pub fn select_random(req: &AcquisitionRequest) -> Result<SelectionResult> {
    req.check()?;
    // ranking by iid uniform keys is a uniform sample without replacement
    let mut rng = stream(req.seed, purpose::ACQUIRE_RANDOM, req.iteration);
    let scores: Vec<f64> = (0..req.unlabeled.len()).map(|_| rng.gen::<f64>()).collect();
    Ok(finish(req.unlabeled.ids, scores, Direction::Descending, req.k))
}

pub fn select_least_confidence(req: &AcquisitionRequest) -> Result<SelectionResult> {
    req.check()?;
    let dist = req.model.forward(req.unlabeled.features, Mode::Eval, None)?;
    let scores = score_rows(&dist, least_confidence_score);
    Ok(finish(req.unlabeled.ids, scores, Direction::Descending, req.k))
}

pub fn select_max_entropy(req: &AcquisitionRequest) -> Result<SelectionResult> {
    req.check()?;
    let dist = req.model.forward(req.unlabeled.features, Mode::Eval, None)?;
    let scores = score_rows(&dist, entropy_bits);
    Ok(finish(req.unlabeled.ids, scores, Direction::Descending, req.k))
}

/// BALD scores from logged MC-dropout passes.
///
/// Default: entropy of the mean distribution. With `mutual_information`,
/// that entropy minus the mean per-pass entropy.
pub fn bald_scores(passes: &[PredictiveDistribution], mutual_information: bool) -> Vec<f64> {
    let n = passes[0].len();
    let c = passes[0].classes();
    let mut mean = Array2::<f64>::zeros((n, c));
    for pass in passes {
        mean += pass.probs();
    }
    mean /= passes.len() as f64;
    let mean = PredictiveDistribution::new(mean);
    let mut scores = score_rows(&mean, entropy_bits);
    if mutual_information {
        for (i, s) in scores.iter_mut().enumerate() {
            let expected: f64 = passes.iter().map(|p| entropy_bits(p.row(i))).sum::<f64>()
                / passes.len() as f64;
            *s -= expected;
        }
    }
    scores
}

pub fn select_bald(req: &AcquisitionRequest) -> Result<SelectionResult> {
    req.check()?;
    let mut rng = stream(req.seed, purpose::MC_DROPOUT, req.iteration);
    let passes = mc_dropout_passes(
        req.model,
        req.unlabeled.features,
        req.params.mc_passes,
        &mut rng,
    )?;
    let scores = bald_scores(&passes, req.params.bald_mutual_information);
    Ok(finish(req.unlabeled.ids, scores, Direction::Descending, req.k))
}

/// Trains a fresh binary discriminator on `(features, labels)`.
pub fn train_discriminator(
    features: ArrayView2<f64>,
    labels: &[usize],
    config: &DiscriminatorConfig,
    seed: u64,
    iteration: u64,
) -> Result<MlpModel> {
    let mlp = MlpConfig {
        hidden_width: config.hidden_width,
        dropout: config.dropout,
        ..MlpConfig::binary(features.ncols())
    };
    let mut model = MlpModel::new(mlp, &mut stream(seed, purpose::DISC_INIT, iteration))?;
    let mut opt = AdamWState::new(config.optimizer, &model);
    let mut rng = stream(seed, purpose::DISC_TRAIN, iteration);
    for epoch in 0..config.epochs {
        fit_epoch(
            &mut model,
            &mut opt,
            features,
            labels,
            config.batch_size,
            epoch,
            &mut rng,
        )?;
    }
    Ok(model)
}

/// Ψ(𝓛) stacked over Ψ(𝓤).
struct Representations {
    labeled: Array2<f64>,
    unlabeled: Array2<f64>,
}

fn representations(req: &AcquisitionRequest) -> Result<Representations> {
    Ok(Representations {
        labeled: req.model.representation(req.labeled.features)?,
        unlabeled: req.model.representation(req.unlabeled.features)?,
    })
}

/// Discriminator for DAL: class 0 = labeled, class 1 = unlabeled.
pub fn train_dal_discriminator(req: &AcquisitionRequest) -> Result<(MlpModel, Array2<f64>)> {
    if req.labeled.is_empty() || req.unlabeled.is_empty() {
        return Err(Error::InvalidArgument(
            "DAL needs non-empty labeled and unlabeled sets".into(),
        ));
    }
    let reps = representations(req)?;
    let config = &req.params.discriminator;
    let n_u = req.unlabeled.len();
    let keep: Vec<usize> = if config.unlabeled_sample > 0 && config.unlabeled_sample < n_u {
        let mut rng = stream(req.seed, purpose::DISC_SUBSAMPLE, req.iteration);
        let mut idx = rand::seq::index::sample(&mut rng, n_u, config.unlabeled_sample).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n_u).collect()
    };
    let train_u = reps.unlabeled.select(Axis(0), &keep);
    let x = ndarray::concatenate(Axis(0), &[reps.labeled.view(), train_u.view()])
        .expect("representation widths agree");
    let mut y = vec![0usize; reps.labeled.nrows()];
    y.extend(std::iter::repeat(1).take(keep.len()));
    let model = train_discriminator(x.view(), &y, config, req.seed, req.iteration)?;
    Ok((model, reps.unlabeled))
}

fn dal_ranking(req: &AcquisitionRequest) -> Result<(Vec<f64>, Vec<usize>)> {
    let (disc, unlabeled_reps) = train_dal_discriminator(req)?;
    let dist = disc.forward(unlabeled_reps.view(), Mode::Eval, None)?;
    let scores: Vec<f64> = (0..dist.len()).map(|i| dist.row(i)[1]).collect();
    let order = rank(req.unlabeled.ids, &scores, Direction::Descending);
    Ok((scores, order))
}

pub fn select_dal(req: &AcquisitionRequest) -> Result<SelectionResult> {
    req.check()?;
    let (scores, _) = dal_ranking(req)?;
    Ok(finish(req.unlabeled.ids, scores, Direction::Descending, req.k))
}

/// Discriminator for CAL: class 1 = high-cor, trained on Ψ(𝓛).
pub fn train_cal_discriminator(req: &AcquisitionRequest) -> Result<(MlpModel, Array2<f64>)> {
    let labels = req.cartography.ok_or_else(|| {
        Error::InvalidArgument("CAL needs cartography labels for the labeled set".into())
    })?;
    if labels.ids.as_slice() != req.labeled.ids {
        return Err(Error::Mismatch(
            "cartography labels do not cover the labeled set in order".into(),
        ));
    }
    let high = labels.high_count();
    if high == 0 {
        return Err(Error::DegenerateCartographyLabels(0));
    }
    if high == labels.labels.len() {
        return Err(Error::DegenerateCartographyLabels(1));
    }
    let reps = representations(req)?;
    let model = train_discriminator(
        reps.labeled.view(),
        &labels.as_classes(),
        &req.params.discriminator,
        req.seed,
        req.iteration,
    )?;
    Ok((model, reps.unlabeled))
}

/// `|0.5 - P(high-cor | Ψ(x))|` for each row.
pub fn cal_scores(dist: &PredictiveDistribution) -> Vec<f64> {
    (0..dist.len()).map(|i| (0.5 - dist.row(i)[1]).abs()).collect()
}

fn cal_ranking(req: &AcquisitionRequest) -> Result<(Vec<f64>, Vec<usize>)> {
    let (disc, unlabeled_reps) = train_cal_discriminator(req)?;
    let dist = disc.forward(unlabeled_reps.view(), Mode::Eval, None)?;
    let scores = cal_scores(&dist);
    let order = rank(req.unlabeled.ids, &scores, Direction::Ascending);
    Ok((scores, order))
}

/// The batch is the `k` candidates closest to the discriminator's 0.5 point.
/// θ′ is not retrained inside the batch, so one sort gives the same result as
/// adding candidates one at a time.
pub fn select_cal(req: &AcquisitionRequest) -> Result<SelectionResult> {
    req.check()?;
    let (scores, _) = cal_ranking(req)?;
    Ok(finish(req.unlabeled.ids, scores, Direction::Ascending, req.k))
}

/// DAL's top `ceil(k/2)` followed by CAL's top `floor(k/2)`, skipping ids
/// DAL already took.
pub fn merge_halves(first: &[usize], second: &[usize], k: usize) -> Vec<usize> {
    let first_quota = k.div_ceil(2);
    let mut chosen: Vec<usize> = first.iter().take(first_quota).copied().collect();
    let mut taken: HashSet<usize> = chosen.iter().copied().collect();
    for &id in second {
        if chosen.len() == k {
            break;
        }
        if taken.insert(id) {
            chosen.push(id);
        }
    }
    chosen
}

pub fn select_hybrid_dal_cal(req: &AcquisitionRequest) -> Result<SelectionResult> {
    req.check()?;
    let ids = req.unlabeled.ids;
    let (dal_scores, dal_order) = dal_ranking(req)?;
    let (cal_order, fallback) = match cal_ranking(req) {
        Ok((_, order)) => (order, None),
        Err(Error::DegenerateCartographyLabels(v)) => {
            let dist = req.model.forward(req.unlabeled.features, Mode::Eval, None)?;
            let lc = score_rows(&dist, least_confidence_score);
            (
                rank(ids, &lc, Direction::Descending),
                Some(format!("cartography labels all {v}; CAL half ranked by least confidence")),
            )
        }
        Err(e) => return Err(e),
    };
    let dal_ids: Vec<usize> = dal_order.iter().map(|&p| ids[p]).collect();
    let cal_ids: Vec<usize> = cal_order.iter().map(|&p| ids[p]).collect();
    Ok(SelectionResult {
        chosen: merge_halves(&dal_ids, &cal_ids, req.k),
        scores: ids.iter().copied().zip(dal_scores).collect(),
        fallback,
    })
}

/// Dispatches to the strategy; CAL falls back to least confidence when the
/// labeled set's cartography labels are all one class.
pub fn select(strategy: Strategy, req: &AcquisitionRequest) -> Result<SelectionResult> {
    match strategy {
        Strategy::Random => select_random(req),
        Strategy::LeastConfidence => select_least_confidence(req),
        Strategy::MaxEntropy => select_max_entropy(req),
        Strategy::Bald => select_bald(req),
        Strategy::Dal => select_dal(req),
        Strategy::Cal => match select_cal(req) {
            Err(Error::DegenerateCartographyLabels(v)) => {
                log::warn!(
                    "seed {} iteration {}: cartography labels all {v}, falling back to least confidence",
                    req.seed,
                    req.iteration
                );
                let mut result = select_least_confidence(req)?;
                result.fallback = Some(format!(
                    "cartography labels all {v}; fell back to least confidence"
                ));
                Ok(result)
            }
            other => other,
        },
        Strategy::DalCal => select_hybrid_dal_cal(req),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::Array2;

    fn probs_model() -> MlpModel {
        let config = MlpConfig {
            input_dim: 3,
            hidden_width: 6,
            hidden_layers: 3,
            classes: 3,
            dropout: 0.0,
        };
        MlpModel::new(config, &mut stream(11, "m", 0)).unwrap()
    }

    fn features(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0)
    }

    #[test]
    fn strategy_tags_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.tag().parse::<Strategy>().unwrap(), s);
        }
        assert!("coreset".parse::<Strategy>().is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy_bits(&[0.25; 4]) - 2.0).abs() < 1e-15);
        assert_eq!(entropy_bits(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy_bits(&[0.5, 0.25, 0.25]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn least_confidence_prefers_flat_predictions() {
        assert!(least_confidence_score(&[0.55, 0.45]) > least_confidence_score(&[0.9, 0.1]));
        let uniform = least_confidence_score(&[0.25; 4]);
        assert!(uniform > least_confidence_score(&[0.3, 0.25, 0.25, 0.2]));
    }

    #[test]
    fn cal_tie_breaks_by_ascending_id() {
        let dist = PredictiveDistribution::new(ndarray::array![
            [0.1, 0.9],
            [0.52, 0.48],
            [0.9, 0.1]
        ]);
        let scores = cal_scores(&dist);
        let ids = [10, 11, 12];
        let order = rank(&ids, &scores, Direction::Ascending);
        assert_eq!(order[..2], [1, 0]);
        assert_eq!(order[0], 1);
    }

    #[test]
    fn random_is_reproducible_and_covers_whole_pool() {
        let model = probs_model();
        let x = features(8);
        let ids: Vec<usize> = (0..8).collect();
        let params = AcquisitionParams::default();
        let req = AcquisitionRequest {
            model: &model,
            labeled: PoolView::new(&ids[..0], x.slice(ndarray::s![..0, ..])).unwrap(),
            unlabeled: PoolView::new(&ids, x.view()).unwrap(),
            k: 8,
            params: &params,
            cartography: None,
            seed: 1,
            iteration: 0,
        };
        let a = select_random(&req).unwrap();
        let b = select_random(&req).unwrap();
        assert_eq!(a, b);
        let mut all = a.chosen.clone();
        all.sort_unstable();
        assert_eq!(all, ids);
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let model = probs_model();
        let x = features(3);
        let ids = [0, 1, 2];
        let params = AcquisitionParams::default();
        let req = AcquisitionRequest {
            model: &model,
            labeled: PoolView::new(&ids[..0], x.slice(ndarray::s![..0, ..])).unwrap(),
            unlabeled: PoolView::new(&ids, x.view()).unwrap(),
            k: 4,
            params: &params,
            cartography: None,
            seed: 1,
            iteration: 0,
        };
        for s in Strategy::ALL {
            assert!(matches!(
                select(s, &req),
                Err(Error::BudgetExceedsPool { .. })
            ));
        }
    }

    #[test]
    fn merge_halves_examples() {
        let dal: Vec<usize> = (0..50).collect();
        let cal: Vec<usize> = (100..150).collect();
        let merged = merge_halves(&dal, &cal, 50);
        assert_eq!(merged[..25], dal[..25]);
        assert_eq!(merged[25..], cal[..25]);

        // identical rankings still produce k distinct ids
        let merged = merge_halves(&dal, &dal, 50);
        let distinct: HashSet<_> = merged.iter().collect();
        assert_eq!(distinct.len(), 50);
        assert_eq!(merged, dal);

        // odd k: CAL takes the smaller half
        let merged = merge_halves(&[1, 2, 3], &[7, 8, 9], 3);
        assert_eq!(merged, vec![1, 2, 7]);
    }
}
