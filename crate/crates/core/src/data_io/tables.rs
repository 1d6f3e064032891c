//! Delimited-text exports and their readers.
//!
//! Every file starts with one provenance comment,
//! `# config_hash=<hex> seeds=<a,b,...> dataset=<fingerprint>`, followed by
//! a CSV header. Readers skip `#` lines. Floats are written with 9
//! significant digits so reruns compare byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cartography::DataMapRow;
use crate::error::{Error, Result};
use crate::simulator::pool::InstancePool;
use crate::simulator::RunHistory;
use crate::stats::{AsoGrid, OverlapRow, Selections};

pub const HISTORY_FILE: &str = "history.csv";
pub const SELECTED_FILE: &str = "history_selected.csv";
pub const BATCH_STATS_FILE: &str = "history_batch_stats.csv";
pub const SCORES_FILE: &str = "history_scores.csv";

/// Shortest of fixed or exponent notation, 9 significant digits, trailing
/// zeros removed.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub dataset: String,
}

impl Provenance {
    pub fn line(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "# config_hash={} seeds={} dataset={}\n",
            self.config_hash,
            seeds.join(","),
            self.dataset
        )
    }

    /// Reads the first provenance comment of `content`, if any.
    pub fn parse(content: &str) -> Option<Provenance> {
        let line = content.lines().find(|l| l.starts_with('#'))?;
        let mut p = Provenance::default();
        for field in line.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("config_hash", v)) => p.config_hash = v.to_string(),
                Some(("seeds", v)) => {
                    p.seeds = v.split(',').filter_map(|s| s.parse().ok()).collect()
                }
                Some(("dataset", v)) => p.dataset = v.to_string(),
                _ => {}
            }
        }
        Some(p)
    }
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// CSV body with a provenance line in front.
fn render<R>(prov: &Provenance, header: &[&str], rows: R) -> Vec<u8>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let mut out = prov.line().into_bytes();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(header).expect("write to memory");
        for row in rows {
            w.write_record(&row).expect("write to memory");
        }
        w.flush().expect("write to memory");
    }
    out
}

pub fn render_history(prov: &Provenance, histories: &[RunHistory]) -> Vec<u8> {
    let rows = histories.iter().flat_map(|h| {
        h.records().map(move |r| {
            vec![
                h.strategy.tag().to_string(),
                r.seed.to_string(),
                r.iteration.to_string(),
                r.labeled_count.to_string(),
                fmt_num(r.accuracy),
            ]
        })
    });
    render(
        prov,
        &["strategy", "seed", "iteration", "labeled_count", "accuracy"],
        rows,
    )
}

pub fn render_selected(prov: &Provenance, histories: &[RunHistory], pool: &InstancePool) -> Vec<u8> {
    let names = &pool.train.names;
    let rows = histories.iter().flat_map(|h| {
        h.records().flat_map(move |r| {
            r.selected.iter().map(move |&id| {
                vec![
                    h.strategy.tag().to_string(),
                    r.seed.to_string(),
                    r.iteration.to_string(),
                    names[id].clone(),
                ]
            })
        })
    });
    render(prov, &["strategy", "seed", "iteration", "instance_id"], rows)
}

pub fn render_batch_stats(prov: &Provenance, histories: &[RunHistory]) -> Vec<u8> {
    let rows = histories.iter().flat_map(|h| {
        h.batch_stats().map(move |b| {
            vec![
                h.strategy.tag().to_string(),
                b.seed.to_string(),
                b.iteration.to_string(),
                b.size.to_string(),
                fmt_num(b.confidence),
                fmt_num(b.variability),
                fmt_num(b.correctness),
            ]
        })
    });
    render(
        prov,
        &[
            "strategy",
            "seed",
            "iteration",
            "batch_size",
            "mean_confidence",
            "mean_variability",
            "mean_correctness",
        ],
        rows,
    )
}

pub fn render_scores(prov: &Provenance, histories: &[RunHistory], pool: &InstancePool) -> Vec<u8> {
    let names = &pool.train.names;
    let rows = histories.iter().flat_map(|h| {
        h.runs.iter().flat_map(move |run| {
            run.scores.iter().map(move |s| {
                vec![
                    h.strategy.tag().to_string(),
                    s.seed.to_string(),
                    s.iteration.to_string(),
                    names[s.id].clone(),
                    fmt_num(s.score),
                ]
            })
        })
    });
    render(
        prov,
        &["strategy", "seed", "iteration", "instance_id", "score"],
        rows,
    )
}

pub fn render_datamap(prov: &Provenance, rows: &[DataMapRow]) -> Vec<u8> {
    let header = crate::cartography::DATAMAP_HEADER;
    let body = rows.iter().map(|r| {
        vec![
            r.id.clone(),
            fmt_num(r.confidence),
            fmt_num(r.variability),
            fmt_num(r.correctness),
            r.gold_label.clone(),
            r.cartography_label.to_string(),
        ]
    });
    render(prov, &header, body)
}

/// Square grid: first column is the row strategy, diagonal cells are empty.
pub fn render_aso_grid(prov: &Provenance, grid: &AsoGrid) -> Vec<u8> {
    let mut header = vec!["strategy"];
    header.extend(grid.labels.iter().map(String::as_str));
    let rows = grid.labels.iter().zip(&grid.cells).map(|(label, cells)| {
        let mut row = vec![label.clone()];
        row.extend(cells.iter().map(|c| c.map(fmt_num).unwrap_or_default()));
        row
    });
    let mut out = render(prov, &header, rows);
    let note = format!(
        "# alpha={} adjusted_alpha={} comparisons={}\n",
        fmt_num(grid.alpha),
        fmt_num(grid.adjusted_alpha),
        grid.comparisons
    );
    let first_newline = out.iter().position(|&b| b == b'\n').expect("provenance line") + 1;
    out.splice(first_newline..first_newline, note.into_bytes());
    out
}

pub fn render_overlap(prov: &Provenance, rows: &[OverlapRow]) -> Vec<u8> {
    let body = rows.iter().map(|r| {
        vec![
            r.a.clone(),
            r.b.clone(),
            r.overlap.to_string(),
            r.total.to_string(),
        ]
    });
    render(
        prov,
        &["strategy_a", "strategy_b", "overlap_count", "total"],
        body,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub strategy: String,
    pub seed: u64,
    pub iteration: usize,
    pub labeled_count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedRow {
    pub strategy: String,
    pub seed: u64,
    pub iteration: usize,
    pub instance_id: String,
}

fn read_rows(path: &Path, expected: &[&str]) -> Result<(Provenance, Vec<(usize, csv::StringRecord)>)> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let prov = Provenance::parse(&content).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?
        .clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected columns {expected:?}, found {found:?}"),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, format!("malformed row: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok((prov, rows))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(path, line, format!("bad `{name}` value")))
}

pub fn read_history(path: &Path) -> Result<(Provenance, Vec<HistoryRow>)> {
    let (prov, rows) = read_rows(
        path,
        &["strategy", "seed", "iteration", "labeled_count", "accuracy"],
    )?;
    let rows = rows
        .into_iter()
        .map(|(line, rec)| {
            let accuracy: f64 = field(path, line, &rec, 4, "accuracy")?;
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(Error::parse(path, line, "accuracy outside [0, 1]"));
            }
            Ok(HistoryRow {
                strategy: rec[0].to_string(),
                seed: field(path, line, &rec, 1, "seed")?,
                iteration: field(path, line, &rec, 2, "iteration")?,
                labeled_count: field(path, line, &rec, 3, "labeled_count")?,
                accuracy,
            })
        })
        .collect::<Result<_>>()?;
    Ok((prov, rows))
}

pub fn read_selected(path: &Path) -> Result<(Provenance, Vec<SelectedRow>)> {
    let (prov, rows) = read_rows(path, &["strategy", "seed", "iteration", "instance_id"])?;
    let rows = rows
        .into_iter()
        .map(|(line, rec)| {
            Ok(SelectedRow {
                strategy: rec[0].to_string(),
                seed: field(path, line, &rec, 1, "seed")?,
                iteration: field(path, line, &rec, 2, "iteration")?,
                instance_id: rec[3].to_string(),
            })
        })
        .collect::<Result<_>>()?;
    Ok((prov, rows))
}

pub fn read_datamap(path: &Path) -> Result<(Provenance, Vec<DataMapRow>)> {
    let (prov, rows) = read_rows(path, &crate::cartography::DATAMAP_HEADER)?;
    let rows = rows
        .into_iter()
        .map(|(line, rec)| {
            Ok(DataMapRow {
                id: rec[0].to_string(),
                confidence: field(path, line, &rec, 1, "confidence")?,
                variability: field(path, line, &rec, 2, "variability")?,
                correctness: field(path, line, &rec, 3, "correctness")?,
                gold_label: rec[4].to_string(),
                cartography_label: field(path, line, &rec, 5, "cartography_label")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((prov, rows))
}

/// Groups rows of several files by (file, strategy), in first-seen order.
/// A strategy that appears in more than one file gets `#1`, `#2`, ...
/// appended in file order.
pub fn group_by_strategy<T: Clone>(
    files: &[Vec<T>],
    strategy_of: impl Fn(&T) -> &str,
) -> Vec<(String, Vec<T>)> {
    let mut groups: Vec<(String, Vec<T>)> = Vec::new();
    for rows in files {
        let mut local: Vec<(String, Vec<T>)> = Vec::new();
        for r in rows {
            let s = strategy_of(r);
            match local.iter_mut().find(|(k, _)| k == s) {
                Some((_, v)) => v.push(r.clone()),
                None => local.push((s.to_string(), vec![r.clone()])),
            }
        }
        groups.extend(local);
    }
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for (k, _) in &groups {
        *totals.entry(k.clone()).or_default() += 1;
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    groups
        .into_iter()
        .map(|(k, v)| {
            if totals[&k] > 1 {
                let n = seen.entry(k.clone()).or_default();
                *n += 1;
                (format!("{k}#{n}"), v)
            } else {
                (k, v)
            }
        })
        .collect()
}

/// Selections per labelled strategy from one or more sidecar files.
pub fn selections_from_files(paths: &[&Path]) -> Result<Vec<Selections>> {
    let mut files = Vec::new();
    for path in paths {
        let (prov, rows) = read_selected(path)?;
        files.push(
            rows.into_iter()
                .map(|r| (prov.dataset.clone(), r))
                .collect::<Vec<_>>(),
        );
    }
    let groups = group_by_strategy(&files, |(_, r)| r.strategy.as_str());
    Ok(groups
        .into_iter()
        .map(|(label, rows)| {
            let dataset = rows.first().map(|(d, _)| d.clone()).unwrap_or_default();
            let mut per_seed: BTreeMap<u64, std::collections::BTreeSet<String>> = BTreeMap::new();
            for (_, r) in rows {
                per_seed.entry(r.seed).or_default().insert(r.instance_id);
            }
            Selections {
                label,
                dataset,
                per_seed,
            }
        })
        .collect())
}
