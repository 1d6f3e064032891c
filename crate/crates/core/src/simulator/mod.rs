//! The pool-based active learning loop.
//!
//! For each seed a stratified seed set is drawn, then iterations
//! `0..=n` each train a freshly initialised classifier on 𝓛, evaluate it on
//! the test split and, for `i < n`, acquire `k` instances from 𝓤. That gives
//! `n + 1` evaluations and `n` acquired batches per seed.
//!
//! Every random draw comes from `rng::stream(seed, purpose, iteration)`, so a
//! run depends only on its own (config, seed) and never on scheduling.

pub mod config;
pub mod pool;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Axis;
use rand::seq::index;

use crate::acquisition::{self, AcquisitionRequest, PoolView, Strategy};
use crate::cartography::{assign_cartography_labels, DataMapStats, DynamicsLog};
use crate::error::{Error, Result};
use crate::models::{train_epoch, AdamWConfig, AdamWState, EpochOutcome, MlpConfig, MlpModel, Mode};
use crate::rng::{purpose, stream, SimRng};

pub use config::{DatasetSource, ExperimentConfig, ModelSettings};
pub use pool::{InstancePool, LabeledSplit, Partition};

/// Per-class counts for a stratified sample of `size`, by largest remainder.
///
/// Quotas are `size * n_c / N`; the leftover slots go to the largest
/// fractional parts, ties to the lower class index.
pub fn stratified_allocation(class_counts: &[usize], size: usize) -> Result<Vec<usize>> {
    let total: usize = class_counts.iter().sum();
    if size > total {
        return Err(Error::BudgetExceedsPool {
            requested: size,
            available: total,
        });
    }
    let present = class_counts.iter().filter(|&&c| c > 0).count();
    if size < present {
        return Err(Error::CannotStratify {
            size,
            classes: present,
        });
    }
    let mut alloc: Vec<usize> = class_counts.iter().map(|&c| size * c / total).collect();
    let remainders: Vec<usize> = class_counts.iter().map(|&c| size * c % total).collect();
    let mut order: Vec<usize> = (0..class_counts.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    let short = size - alloc.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        alloc[c] += 1;
    }
    Ok(alloc)
}

/// Seed-set ids (ascending), uniform within each class.
pub fn stratified_seed_sample(
    labels: &[usize],
    classes: usize,
    size: usize,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        let bucket = by_class
            .get_mut(y)
            .ok_or(Error::LabelOutOfRange { label: y, classes })?;
        bucket.push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let alloc = stratified_allocation(&counts, size)?;
    let mut chosen = Vec::with_capacity(size);
    for (members, &take) in by_class.iter().zip(&alloc) {
        for pos in index::sample(rng, members.len(), take).into_iter() {
            chosen.push(members[pos]);
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Fraction of test instances whose argmax prediction equals the gold label.
pub fn evaluate(model: &MlpModel, test: &LabeledSplit) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let dist = model.forward(test.view(), Mode::Eval, None)?;
    let hits = test
        .labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| dist.argmax(*i) == y)
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// Mean data-map statistics of one acquired batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMeans {
    pub seed: u64,
    /// Iteration at which the batch was acquired.
    pub iteration: usize,
    pub size: usize,
    pub confidence: f64,
    pub variability: f64,
    pub correctness: f64,
}

/// Averages the batch's statistics in the data map of the *following*
/// training run. The last batch has no following run inside the loop.
pub fn batch_statistics(
    seed: u64,
    iteration: usize,
    batch: &[usize],
    following: Option<&DataMapStats>,
) -> Result<BatchMeans> {
    let stats = following.ok_or(Error::NoFollowingRun(iteration))?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch is empty".into()));
    }
    let position: HashMap<usize, usize> = stats.ids.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    let (mut mu, mut sigma, mut phi) = (0.0, 0.0, 0.0);
    for id in batch {
        let &p = position.get(id).ok_or_else(|| {
            Error::Mismatch(format!("instance {id} is missing from the following data map"))
        })?;
        mu += stats.confidence[p];
        sigma += stats.variability[p];
        phi += stats.correctness[p];
    }
    let n = batch.len() as f64;
    Ok(BatchMeans {
        seed,
        iteration,
        size: batch.len(),
        confidence: mu / n,
        variability: sigma / n,
        correctness: phi / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub seed: u64,
    pub iteration: usize,
    /// |𝓛| the evaluated model was trained on.
    pub labeled_count: usize,
    pub accuracy: f64,
    /// Batch acquired after the evaluation; empty at the final iteration.
    pub selected: Vec<usize>,
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub seed: u64,
    pub iteration: usize,
    pub id: usize,
    pub score: f64,
}

/// Everything one (strategy, seed) run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub seed_set: Vec<usize>,
    pub records: Vec<IterationRecord>,
    pub batch_stats: Vec<BatchMeans>,
    pub scores: Vec<ScoreRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub strategy: Strategy,
    pub dataset: String,
    pub seed_set_size: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub runs: Vec<SeedRun>,
}

impl RunHistory {
    pub fn records(&self) -> impl Iterator<Item = &IterationRecord> {
        self.runs.iter().flat_map(|r| r.records.iter())
    }

    pub fn batch_stats(&self) -> impl Iterator<Item = &BatchMeans> {
        self.runs.iter().flat_map(|r| r.batch_stats.iter())
    }

    /// Accuracy after the last batch, per seed.
    pub fn final_accuracies(&self) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.records.last().map(|x| x.accuracy))
            .collect()
    }

    pub fn all_accuracies(&self) -> Vec<f64> {
        self.records().map(|r| r.accuracy).collect()
    }
}

fn main_config(config: &ExperimentConfig, pool: &InstancePool) -> MlpConfig {
    MlpConfig {
        input_dim: pool.dim(),
        hidden_width: config.model.hidden_width,
        hidden_layers: config.model.hidden_layers,
        classes: pool.classes(),
        dropout: config.model.dropout,
    }
}

/// A trained classifier and the per-epoch dynamics of its training set.
pub struct TrainedModel {
    pub model: MlpModel,
    pub epochs: Vec<EpochOutcome>,
}

/// Trains a fresh classifier on `ids` with the streams of
/// (`seed`, `iteration`).
pub fn train_classifier(
    mlp: MlpConfig,
    optimizer: AdamWConfig,
    split: &LabeledSplit,
    ids: &[usize],
    epochs: usize,
    batch_size: usize,
    seed: u64,
    iteration: u64,
) -> Result<TrainedModel> {
    let mut model = MlpModel::new(mlp, &mut stream(seed, purpose::MAIN_INIT, iteration))?;
    let mut opt = AdamWState::new(optimizer, &model);
    let mut rng = stream(seed, purpose::MAIN_TRAIN, iteration);
    let x = split.features.select(Axis(0), ids);
    let y: Vec<usize> = ids.iter().map(|&i| split.labels[i]).collect();
    let mut outcomes = Vec::with_capacity(epochs);
    for e in 0..epochs {
        outcomes.push(train_epoch(&mut model, &mut opt, x.view(), &y, batch_size, e, &mut rng)?);
    }
    Ok(TrainedModel {
        model,
        epochs: outcomes,
    })
}

/// One full AL run for a single seed.
pub fn run_seed(
    config: &ExperimentConfig,
    pool: &InstancePool,
    strategy: Strategy,
    seed: u64,
) -> Result<SeedRun> {
    config.validate_pool(pool.train.len(), pool.classes())?;
    let seed_set = stratified_seed_sample(
        &pool.train.labels,
        pool.classes(),
        config.seed_set_size,
        &mut stream(seed, purpose::SEED_SET, 0),
    )?;
    let mut partition = Partition::new(pool.train.len(), &seed_set)?;
    let mlp = main_config(config, pool);
    let dyn_epochs = config.effective_dynamics_epochs();
    let n = config.iterations;

    let mut records = Vec::with_capacity(n + 1);
    let mut batch_stats = Vec::with_capacity(n.saturating_sub(1));
    let mut scores = Vec::new();
    let mut previous_batch: Option<Vec<usize>> = None;

    for i in 0..=n {
        let labeled = partition.labeled();
        let expected = config.seed_set_size + i * config.batch_size;
        if labeled.len() != expected {
            return Err(Error::Mismatch(format!(
                "iteration {i}: |L| = {}, expected {expected}",
                labeled.len()
            )));
        }
        let trained = train_classifier(
            mlp.clone(),
            config.model.optimizer.clone(),
            &pool.train,
            &labeled,
            config.epochs,
            config.train_batch_size,
            seed,
            i as u64,
        )?;
        let log = DynamicsLog::from_epochs(labeled.clone(), &trained.epochs[..dyn_epochs])?;
        let stats = DataMapStats::from_log(&log);
        let accuracy = evaluate(&trained.model, &pool.test)?;
        log::info!(
            "{strategy} seed {seed} iteration {i}: |L| = {}, accuracy {accuracy:.4}",
            labeled.len()
        );

        // The final training sits outside the acquisition cycle, so the
        // last batch gets no statistics row.
        if let Some(batch) = previous_batch.take() {
            if i < n {
                batch_stats.push(batch_statistics(seed, i - 1, &batch, Some(&stats))?);
            }
        }

        let mut record = IterationRecord {
            seed,
            iteration: i,
            labeled_count: labeled.len(),
            accuracy,
            selected: Vec::new(),
            fallback: None,
        };
        if i < n {
            let unlabeled = partition.unlabeled();
            let x_l = pool.train.rows(&labeled);
            let x_u = pool.train.rows(&unlabeled);
            let cartography = assign_cartography_labels(&stats, config.acquisition.t_cor)?;
            let req = AcquisitionRequest {
                model: &trained.model,
                labeled: PoolView::new(&labeled, x_l.view())?,
                unlabeled: PoolView::new(&unlabeled, x_u.view())?,
                k: config.batch_size,
                params: &config.acquisition,
                cartography: Some(&cartography),
                seed,
                iteration: i as u64,
            };
            let result = acquisition::select(strategy, &req)?;
            partition.reveal(&result.chosen)?;
            debug_assert!(partition.is_disjoint());
            if config.export_scores {
                scores.extend(result.scores.iter().map(|&(id, score)| ScoreRecord {
                    seed,
                    iteration: i,
                    id,
                    score,
                }));
            }
            record.selected = result.chosen.clone();
            record.fallback = result.fallback;
            previous_batch = Some(result.chosen);
        }
        records.push(record);
    }

    Ok(SeedRun {
        seed,
        seed_set,
        records,
        batch_stats,
        scores,
    })
}

/// All seeds of one strategy, sequentially.
pub fn run_experiment(
    config: &ExperimentConfig,
    pool: &InstancePool,
    strategy: Strategy,
) -> Result<RunHistory> {
    let runs = config
        .seeds
        .iter()
        .map(|&seed| run_seed(config, pool, strategy, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(history(config, pool, strategy, runs))
}

fn history(
    config: &ExperimentConfig,
    pool: &InstancePool,
    strategy: Strategy,
    runs: Vec<SeedRun>,
) -> RunHistory {
    RunHistory {
        strategy,
        dataset: pool.fingerprint.clone(),
        seed_set_size: config.seed_set_size,
        batch_size: config.batch_size,
        iterations: config.iterations,
        runs,
    }
}

/// Every configured (strategy, seed) run on up to `jobs` threads. Results
/// are assembled in config order, so the output does not depend on `jobs`.
pub fn run_all(config: &ExperimentConfig, pool: &InstancePool, jobs: usize) -> Result<Vec<RunHistory>> {
    config.validate_pool(pool.train.len(), pool.classes())?;
    let tasks: Vec<(usize, usize)> = (0..config.strategies.len())
        .flat_map(|s| (0..config.seeds.len()).map(move |k| (s, k)))
        .collect();
    let slots: Vec<Mutex<Option<Result<SeedRun>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, tasks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(s, k)) = tasks.get(t) else { break };
                let result = run_seed(config, pool, config.strategies[s], config.seeds[k]);
                *slots[t].lock().expect("slot lock") = Some(result);
            });
        }
    });
    let mut results = slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every task ran"));
    let mut histories = Vec::with_capacity(config.strategies.len());
    for &strategy in &config.strategies {
        let runs = (0..config.seeds.len())
            .map(|_| results.next().expect("one result per task"))
            .collect::<Result<Vec<_>>>()?;
        histories.push(history(config, pool, strategy, runs));
    }
    Ok(histories)
}
