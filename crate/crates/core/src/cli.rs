//! Subcommand implementations behind the `cal` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cartography::{assign_cartography_labels, datamap_rows, DataMapStats, DynamicsLog};
use crate::data_io::svg::{curves_svg, datamap_svg, mean_curve};
use crate::data_io::tables::{
    self, read_history, render_aso_grid, render_batch_stats, render_datamap, render_history,
    render_overlap, render_scores, render_selected, selections_from_files, write_atomic,
    HistoryRow, Provenance,
};
use crate::data_io::load_pool;
use crate::error::{Error, Result};
use crate::models::MlpConfig;
use crate::rng::{purpose, stream};
use crate::simulator::config::{AsoScores, ConfigMap, DatamapSplit, DatasetSource, ExperimentConfig};
use crate::simulator::{run_all, stratified_seed_sample, train_classifier, InstancePool, RunHistory};
use crate::stats::{aso_matrix, overlap_report, Correction, ScoreSample};

/// Process exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        _ => 3,
    }
}

/// Parses the config file, applies overrides and an optional seed list.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[String],
    seed_list: Option<&str>,
) -> Result<ExperimentConfig> {
    let mut map = match path {
        Some(p) => ConfigMap::load(p).map_err(|e| match e {
            Error::Io { path, source } => {
                Error::config("--config", format!("{}: {source}", path.display()))
            }
            other => other,
        })?,
        None => ConfigMap::default(),
    };
    for o in overrides {
        map.apply_override(o)?;
    }
    if let Some(seeds) = seed_list {
        map.set("seeds", seeds)?;
    }
    map.build()
}

fn check_paths(config: &ExperimentConfig) -> Result<()> {
    if let DatasetSource::Files { train, test, embeddings, .. } = &config.dataset {
        for (key, path) in [("dataset", Some(train)), ("test_dataset", Some(test)), ("embeddings", embeddings.as_ref())] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::config(key, format!("{} does not exist", p.display())));
                }
            }
        }
    }
    Ok(())
}

/// The single validation path shared by `run` and `validate-config`.
pub fn prepare(config: &ExperimentConfig) -> Result<InstancePool> {
    let pool = load_checked(config)?;
    config.validate_pool(pool.train.len(), pool.classes())?;
    Ok(pool)
}

fn load_checked(config: &ExperimentConfig) -> Result<InstancePool> {
    check_paths(config)?;
    load_pool(&config.dataset)
}

fn provenance(config: &ExperimentConfig, pool: &InstancePool) -> Provenance {
    Provenance {
        config_hash: config.hash(),
        seeds: config.seeds.clone(),
        dataset: pool.fingerprint.clone(),
    }
}

/// Runs every (strategy, seed) and writes the history files into `out`.
pub fn cmd_run(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    let pool = prepare(config)?;
    let histories = run_all(config, &pool, jobs)?;
    write_histories(config, &pool, &histories, out)
}

pub fn write_histories(
    config: &ExperimentConfig,
    pool: &InstancePool,
    histories: &[RunHistory],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let prov = provenance(config, pool);
    let mut files = vec![
        (tables::HISTORY_FILE, render_history(&prov, histories)),
        (tables::SELECTED_FILE, render_selected(&prov, histories, pool)),
        (tables::BATCH_STATS_FILE, render_batch_stats(&prov, histories)),
    ];
    if config.export_scores {
        files.push((tables::SCORES_FILE, render_scores(&prov, histories, pool)));
    }
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = out.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Trains one classifier for `datamap_epochs` on the full train split or on
/// the seed set of the first seed, then writes `datamap.csv` and
/// `datamap.svg`.
pub fn cmd_datamap(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let pool = load_checked(config)?;
    let seed = config.seeds[0];
    let ids: Vec<usize> = match config.datamap_split {
        DatamapSplit::Full => (0..pool.train.len()).collect(),
        DatamapSplit::SeedSet => {
            // the acquisition budget is irrelevant here, only the seed set must fit
            let size = config.seed_set_size;
            if size > pool.train.len() || size < pool.classes() {
                return Err(Error::config(
                    "seed_set_size",
                    format!(
                        "{size} does not fit a train pool of {} with {} classes",
                        pool.train.len(),
                        pool.classes()
                    ),
                ));
            }
            stratified_seed_sample(
                &pool.train.labels,
                pool.classes(),
                size,
                &mut stream(seed, purpose::SEED_SET, 0),
            )?
        }
    };
    let mlp = MlpConfig {
        input_dim: pool.dim(),
        hidden_width: config.model.hidden_width,
        hidden_layers: config.model.hidden_layers,
        classes: pool.classes(),
        dropout: config.model.dropout,
    };
    let index = crate::rng::derive_seed(seed, purpose::DATAMAP, 0);
    let trained = train_classifier(
        mlp,
        config.model.optimizer.clone(),
        &pool.train,
        &ids,
        config.datamap_epochs,
        config.train_batch_size,
        seed,
        index,
    )?;
    let stats = DataMapStats::from_log(&DynamicsLog::from_epochs(ids.clone(), &trained.epochs)?);
    let labels = assign_cartography_labels(&stats, config.acquisition.t_cor)?;
    let gold: Vec<String> = pool
        .train
        .labels
        .iter()
        .map(|&y| pool.class_names[y].clone())
        .collect();
    let rows = datamap_rows(&stats, &labels, &pool.train.names, &gold)?;
    let prov = provenance(config, &pool);
    let csv_path = out.join("datamap.csv");
    write_atomic(&csv_path, &render_datamap(&prov, &rows))?;
    let title = format!("data map ({} instances, {} epochs)", ids.len(), config.datamap_epochs);
    let svg = datamap_svg(&title, &stats.variability, &stats.confidence, &stats.correctness, stats.epochs)?;
    let svg_path = out.join("datamap.svg");
    write_atomic(&svg_path, svg.as_bytes())?;
    Ok(vec![csv_path, svg_path])
}

type Groups = Vec<(String, Vec<HistoryRow>)>;

fn load_histories(paths: &[PathBuf]) -> Result<(Vec<Provenance>, Groups)> {
    let mut provs = Vec::new();
    let mut files = Vec::new();
    for p in paths {
        let (prov, rows) = read_history(p)?;
        provs.push(prov);
        files.push(rows);
    }
    Ok((provs, tables::group_by_strategy(&files, |r| r.strategy.as_str())))
}

fn digest_inputs(paths: &[PathBuf], extra: &str) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(std::fs::read(p).map_err(|e| Error::io(p, e))?);
    }
    h.update(extra.as_bytes());
    Ok(hex::encode(&h.finalize()[..8]))
}

fn derived_provenance(provs: &[Provenance], hash: String) -> Provenance {
    let first = provs.first().cloned().unwrap_or_default();
    Provenance {
        config_hash: hash,
        seeds: first.seeds,
        dataset: first.dataset,
    }
}

/// Scores that enter the comparison for one strategy.
pub fn aso_sample(label: &str, rows: &[HistoryRow], mode: AsoScores) -> Result<ScoreSample> {
    let scores = match mode {
        AsoScores::Pooled => rows.iter().map(|r| r.accuracy).collect(),
        AsoScores::Final => {
            let mut last: BTreeMap<u64, &HistoryRow> = BTreeMap::new();
            for r in rows {
                let e = last.entry(r.seed).or_insert(r);
                if r.iteration > e.iteration {
                    *e = r;
                }
            }
            last.values().map(|r| r.accuracy).collect()
        }
    };
    ScoreSample::new(label, scores)
}

#[derive(Debug, Clone)]
pub struct AsoOptions {
    pub alpha: f64,
    pub bootstrap: usize,
    pub correction: Correction,
    pub scores: AsoScores,
    pub seed: u64,
}

pub fn cmd_aso(paths: &[PathBuf], opts: &AsoOptions, out: &Path) -> Result<PathBuf> {
    let (provs, groups) = load_histories(paths)?;
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ASO needs at least two strategies, found {}",
            groups.len()
        )));
    }
    let samples = groups
        .iter()
        .map(|(label, rows)| aso_sample(label, rows, opts.scores))
        .collect::<Result<Vec<_>>>()?;
    let grid = aso_matrix(&samples, opts.alpha, opts.bootstrap, opts.correction, opts.seed)?;
    let params = format!("{opts:?}");
    let prov = derived_provenance(&provs, digest_inputs(paths, &params)?);
    let path = out.join("aso_grid.csv");
    write_atomic(&path, &render_aso_grid(&prov, &grid))?;
    Ok(path)
}

pub fn cmd_overlap(paths: &[PathBuf], out: &Path) -> Result<PathBuf> {
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    let runs = selections_from_files(&refs)?;
    if runs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "overlap needs at least two strategies, found {}",
            runs.len()
        )));
    }
    let rows = overlap_report(&runs)?;
    let provs: Vec<Provenance> = refs
        .iter()
        .map(|p| {
            std::fs::read_to_string(p)
                .map(|c| Provenance::parse(&c).unwrap_or_default())
                .map_err(|e| Error::io(*p, e))
        })
        .collect::<Result<_>>()?;
    let prov = derived_provenance(&provs, digest_inputs(paths, "overlap")?);
    let path = out.join("overlap.csv");
    write_atomic(&path, &render_overlap(&prov, &rows))?;
    Ok(path)
}

/// Mean accuracy curves of every strategy in the history files.
pub fn cmd_plot(paths: &[PathBuf], out: &Path) -> Result<PathBuf> {
    let (_, groups) = load_histories(paths)?;
    let curves: Vec<_> = groups
        .iter()
        .map(|(label, rows)| {
            let pts: Vec<(usize, f64)> = rows.iter().map(|r| (r.labeled_count, r.accuracy)).collect();
            mean_curve(label, &pts)
        })
        .collect();
    let svg = curves_svg("test accuracy over acquisition", &curves)?;
    let path = out.join("curves.svg");
    write_atomic(&path, svg.as_bytes())?;
    Ok(path)
}
