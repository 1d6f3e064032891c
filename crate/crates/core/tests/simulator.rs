use std::collections::BTreeSet;

use cal_core::acquisition::Strategy;
use cal_core::cartography::{DataMapStats, DynamicsLog};
use cal_core::data_io::load_pool;
use cal_core::models::{Dense, MlpConfig, MlpModel};
use cal_core::rng::stream;
use cal_core::simulator::{
    batch_statistics, evaluate, run_all, run_experiment, run_seed, stratified_allocation,
    stratified_seed_sample, train_classifier, ExperimentConfig, InstancePool, LabeledSplit,
};
use cal_core::Error;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_text(text).unwrap()
}

fn pool_of(config: &ExperimentConfig) -> InstancePool {
    load_pool(&config.dataset).unwrap()
}

const TOY: &str = "
dataset = synthetic
synthetic_classes = 2
synthetic_dim = 4
synthetic_train = 10
synthetic_test = 6
seed_set_size = 5
batch_size = 1
iterations = 2
epochs = 3
hidden_width = 8
strategy = random
seeds = 1,2
";

#[test]
fn toy_run_grows_the_labeled_set() {
    let c = config(TOY);
    let pool = pool_of(&c);
    let run = run_seed(&c, &pool, Strategy::Random, 1).unwrap();
    let sizes: Vec<usize> = run.records.iter().map(|r| r.labeled_count).collect();
    assert_eq!(sizes, vec![5, 6, 7]);
    let mut seen: BTreeSet<usize> = run.seed_set.iter().copied().collect();
    for r in &run.records[..2] {
        assert_eq!(r.selected.len(), 1);
        assert!(seen.insert(r.selected[0]), "re-selected {}", r.selected[0]);
    }
    assert!(run.records[2].selected.is_empty());
    assert_eq!(run.batch_stats.len(), 1);
}

#[test]
fn identical_configs_give_identical_histories() {
    let c = config(&format!("{TOY}\nstrategy = random,lc,cal\n"));
    let pool = pool_of(&c);
    let a = run_experiment(&c, &pool, Strategy::Cal).unwrap();
    let b = run_experiment(&c, &pool, Strategy::Cal).unwrap();
    assert_eq!(a, b);
    let parallel = run_all(&c, &pool, 3).unwrap();
    let serial = run_all(&c, &pool, 1).unwrap();
    assert_eq!(parallel, serial);
    assert_eq!(parallel[2], a);
}

#[test]
fn separable_data_is_learned_by_every_strategy() {
    let c = config(
        "
dataset = synthetic
synthetic_classes = 2
synthetic_dim = 8
synthetic_train = 300
synthetic_test = 200
synthetic_spread = 1.0
synthetic_separation = 8.0
seed_set_size = 20
batch_size = 10
iterations = 2
epochs = 20
hidden_width = 64
learning_rate = 1e-3
discriminator_hidden_width = 64
discriminator_epochs = 10
strategy = random,lc,entropy,bald,dal,cal,dal+cal
seeds = 7
",
    );
    let pool = pool_of(&c);
    for h in run_all(&c, &pool, 1).unwrap() {
        let acc = h.final_accuracies()[0];
        assert!(acc >= 0.95, "{}: {acc}", h.strategy);
    }
}

#[test]
fn allocation_examples() {
    assert_eq!(stratified_allocation(&[250, 250, 250, 250], 100).unwrap(), vec![25; 4]);
    assert_eq!(stratified_allocation(&[300, 100], 8).unwrap(), vec![6, 2]);
    // Question-type histogram of a 5,452-instance train split.
    // quotas 7.887 106.566 114.637 112.161 76.577 82.172, floors sum to 497,
    // the three largest remainders are ABBR, ENTY and LOC.
    let counts = [86, 1162, 1250, 1223, 835, 896];
    assert_eq!(stratified_allocation(&counts, 500).unwrap(), vec![8, 106, 115, 112, 77, 82]);
    assert!(matches!(stratified_allocation(&[3, 3], 7), Err(Error::BudgetExceedsPool { .. })));
    assert!(matches!(stratified_allocation(&[3, 3, 3], 2), Err(Error::CannotStratify { .. })));
}

#[test]
fn seed_sample_follows_the_allocation() {
    let labels: Vec<usize> = (0..5452)
        .map(|i| match i % 5452 {
            x if x < 86 => 0,
            x if x < 86 + 1162 => 1,
            x if x < 86 + 1162 + 1250 => 2,
            x if x < 86 + 1162 + 1250 + 1223 => 3,
            x if x < 5452 - 896 => 4,
            _ => 5,
        })
        .collect();
    let ids = stratified_seed_sample(&labels, 6, 500, &mut stream(3, "seed-set", 0)).unwrap();
    assert_eq!(ids.len(), 500);
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    let mut per_class = [0usize; 6];
    for &i in &ids {
        per_class[labels[i]] += 1;
    }
    assert_eq!(per_class, [8, 106, 115, 112, 77, 82]);
}

proptest! {
    #[test]
    fn allocation_sums_and_stays_within_one(
        counts in prop::collection::vec(1usize..400, 2..8),
        frac in 0.0f64..=1.0,
    ) {
        let total: usize = counts.iter().sum();
        let size = counts.len() + ((total - counts.len()) as f64 * frac) as usize;
        let alloc = stratified_allocation(&counts, size).unwrap();
        prop_assert_eq!(alloc.iter().sum::<usize>(), size);
        for (a, c) in alloc.iter().zip(&counts) {
            let quota = size as f64 * *c as f64 / total as f64;
            prop_assert!((*a as f64 - quota).abs() < 1.0);
            prop_assert!(a <= c);
        }
    }
}

fn identity_model(classes: usize, output_bias: Option<Vec<f64>>) -> MlpModel {
    let config = MlpConfig {
        input_dim: classes,
        hidden_width: classes,
        hidden_layers: 1,
        classes,
        dropout: 0.0,
    };
    let hidden = Dense {
        weight: Array2::eye(classes),
        bias: Array1::zeros(classes),
    };
    let output = match output_bias {
        Some(b) => Dense {
            weight: Array2::zeros((classes, classes)),
            bias: Array1::from(b),
        },
        None => Dense {
            weight: Array2::eye(classes),
            bias: Array1::zeros(classes),
        },
    };
    MlpModel::from_layers(config, vec![hidden, output]).unwrap()
}

fn one_hot_split(labels: Vec<usize>, classes: usize) -> LabeledSplit {
    let n = labels.len();
    let features = Array2::from_shape_fn((n, classes), |(i, j)| if labels[i] == j { 3.0 } else { 0.0 });
    LabeledSplit::new(features, labels, (0..n).map(|i| i.to_string()).collect()).unwrap()
}

#[test]
fn evaluate_examples() {
    let split = one_hot_split((0..40).map(|i| i % 4).collect(), 4);
    assert_eq!(evaluate(&identity_model(4, None), &split).unwrap(), 1.0);
    let majority = identity_model(4, Some(vec![1.0, 0.0, 0.0, 0.0]));
    assert_eq!(evaluate(&majority, &split).unwrap(), 0.25);
}

#[test]
fn evaluate_matches_a_recount() {
    let c = config(TOY);
    let pool = pool_of(&c);
    let model = MlpModel::new(
        MlpConfig { input_dim: 4, hidden_width: 8, hidden_layers: 3, classes: 2, dropout: 0.3 },
        &mut stream(5, "init", 0),
    )
    .unwrap();
    let mut hits = 0;
    for i in 0..pool.test.len() {
        let row = pool.test.features.row(i).to_owned().insert_axis(ndarray::Axis(0));
        let dist = model.forward(row.view(), cal_core::models::Mode::Eval, None).unwrap();
        if dist.argmax(0) == pool.test.labels[i] {
            hits += 1;
        }
    }
    assert_eq!(evaluate(&model, &pool.test).unwrap(), hits as f64 / pool.test.len() as f64);
}

fn stats(ids: Vec<usize>, conf: &[f64]) -> DataMapStats {
    let n = ids.len();
    let probs = Array2::from_shape_vec((n, 1), conf.to_vec()).unwrap();
    let correct = Array2::from_elem((n, 1), true);
    DataMapStats::from_log(&DynamicsLog::new(ids, probs, correct).unwrap())
}

#[test]
fn batch_means_by_hand() {
    let s = stats(vec![4, 9, 11], &[0.2, 0.9, 0.6]);
    let m = batch_statistics(1, 3, &[4, 11], Some(&s)).unwrap();
    assert!((m.confidence - 0.4).abs() < 1e-15);
    assert_eq!((m.size, m.iteration, m.variability, m.correctness), (2, 3, 0.0, 1.0));
    assert!(matches!(batch_statistics(1, 29, &[4], None), Err(Error::NoFollowingRun(29))));
    assert!(batch_statistics(1, 3, &[5], Some(&s)).is_err());
}

#[test]
fn batch_statistics_match_a_retrained_data_map() {
    let c = config(
        "
dataset = synthetic
synthetic_classes = 3
synthetic_dim = 6
synthetic_train = 120
synthetic_test = 30
seed_set_size = 12
batch_size = 4
iterations = 4
epochs = 4
hidden_width = 16
discriminator_hidden_width = 16
discriminator_epochs = 3
strategy = cal
seeds = 11
",
    );
    let pool = pool_of(&c);
    let run = run_seed(&c, &pool, Strategy::Cal, 11).unwrap();
    assert_eq!(run.batch_stats.len(), c.iterations - 1);
    let mlp = MlpConfig {
        input_dim: pool.dim(),
        hidden_width: 16,
        hidden_layers: 3,
        classes: 3,
        dropout: 0.3,
    };
    let mut labeled: BTreeSet<usize> = run.seed_set.iter().copied().collect();
    for (i, means) in run.batch_stats.iter().enumerate() {
        let batch = &run.records[i].selected;
        labeled.extend(batch.iter().copied());
        let ids: Vec<usize> = labeled.iter().copied().collect();
        let trained = train_classifier(
            mlp.clone(),
            c.model.optimizer,
            &pool.train,
            &ids,
            c.epochs,
            c.train_batch_size,
            11,
            (i + 1) as u64,
        )
        .unwrap();
        let map = DataMapStats::from_log(&DynamicsLog::from_epochs(ids.clone(), &trained.epochs).unwrap());
        let pos = |id: usize| ids.binary_search(&id).unwrap();
        let n = batch.len() as f64;
        let mu: f64 = batch.iter().map(|&id| map.confidence[pos(id)]).sum::<f64>() / n;
        let sigma: f64 = batch.iter().map(|&id| map.variability[pos(id)]).sum::<f64>() / n;
        let phi: f64 = batch.iter().map(|&id| map.correctness[pos(id)]).sum::<f64>() / n;
        assert_eq!(means.iteration, i);
        assert!((means.confidence - mu).abs() < 1e-12);
        assert!((means.variability - sigma).abs() < 1e-12);
        assert!((means.correctness - phi).abs() < 1e-12);

        let acc = evaluate(&trained.model, &pool.test).unwrap();
        assert_eq!(acc, run.records[i + 1].accuracy);
    }
}

#[test]
fn thirty_iterations_give_twenty_nine_statistic_rows() {
    let c = config(
        "
dataset = synthetic
synthetic_classes = 2
synthetic_dim = 3
synthetic_train = 60
synthetic_test = 10
seed_set_size = 10
batch_size = 1
iterations = 30
epochs = 1
hidden_width = 4
strategy = lc
seeds = 1,2
",
    );
    let pool = pool_of(&c);
    let h = run_experiment(&c, &pool, Strategy::LeastConfidence).unwrap();
    for run in &h.runs {
        assert_eq!(run.records.len(), 31);
        assert_eq!(run.batch_stats.len(), 29);
        for (i, r) in run.records.iter().enumerate() {
            assert_eq!(r.labeled_count, 10 + i);
        }
    }
}

#[test]
fn pool_checks_are_config_errors() {
    let c = config(&format!("{TOY}\nseed_set_size = 11\n"));
    let pool = pool_of(&c);
    assert!(matches!(run_seed(&c, &pool, Strategy::Random, 1), Err(Error::Config { .. })));
    let c = config(&format!("{TOY}\nbatch_size = 3\n"));
    assert!(matches!(run_seed(&c, &pool, Strategy::Random, 1), Err(Error::Config { .. })));
}
