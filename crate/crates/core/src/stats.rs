//! Almost Stochastic Order (ASO) testing and batch-overlap analytics.
//!
//! The violation ratio of "A is stochastically larger than B" compares the
//! empirical quantile functions `Qa`, `Qb` over `t in (0, 1)`:
//!
//! ```text
//! ratio = ∫_{Qa(t) < Qb(t)} (Qb - Qa)^2 dt  /  ∫ (Qb - Qa)^2 dt
//! ```
//!
//! Both quantile functions are step functions, so the integrals are computed
//! exactly over the merged breakpoints `i/n` and `j/m`. When the two quantile
//! functions coincide the ratio is 0.5 (no order either way).
//!
//! `ε_min` is the bootstrap upper bound
//! `ratio + sqrt((n+m)/(n m)) * σ̂ * Φ⁻¹(1 - α)`, clipped to `[0, 1]`, where
//! `σ̂` is the standard deviation of `sqrt(n m/(n+m)) * (ratio* - ratio)`
//! over resamples drawn through the quantile functions. Both samples of one
//! resample are driven by the same uniforms, so identical inputs resample to
//! identical outputs.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{purpose, stream, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSample {
    pub label: String,
    pub scores: Vec<f64>,
}

impl ScoreSample {
    pub fn new(label: impl Into<String>, scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidArgument("score sample is empty".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("score sample has non-finite values".into()));
        }
        Ok(ScoreSample {
            label: label.into(),
            scores,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsoResult {
    pub a: String,
    pub b: String,
    pub eps_min: f64,
    pub violation_ratio: f64,
    pub alpha: f64,
    pub bootstrap_iters: usize,
    /// The two quantile functions were identical.
    pub degenerate: bool,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Ratio from already-sorted samples; `None` when the quantile functions coincide.
fn violation_ratio_sorted(a: &[f64], b: &[f64]) -> Option<f64> {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0.0_f64;
    let mut total = 0.0_f64;
    let mut violation = 0.0_f64;
    while i < n && j < m {
        // next breakpoints (i+1)/n and (j+1)/m, compared exactly
        let lhs = (i as u128 + 1) * m as u128;
        let rhs = (j as u128 + 1) * n as u128;
        let next = if lhs <= rhs {
            (i + 1) as f64 / n as f64
        } else {
            (j + 1) as f64 / m as f64
        };
        let d = b[j] - a[i];
        let w = (next - prev) * d * d;
        total += w;
        if d > 0.0 {
            violation += w;
        }
        prev = next;
        match lhs.cmp(&rhs) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    if total > 0.0 {
        Some(violation / total)
    } else {
        None
    }
}

/// Fraction of the squared quantile distance where `a` falls below `b`.
pub fn violation_ratio(a: &[f64], b: &[f64]) -> f64 {
    violation_ratio_sorted(&sorted(a), &sorted(b)).unwrap_or(0.5)
}

/// `Q(u) = x_(ceil(u n))` on sorted data.
fn quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let idx = ((u * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

pub fn aso_test(
    a: &ScoreSample,
    b: &ScoreSample,
    alpha: f64,
    bootstrap_iters: usize,
    rng: &mut SimRng,
) -> Result<AsoResult> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 0.5], got {alpha}"
        )));
    }
    if bootstrap_iters < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 bootstrap iterations, got {bootstrap_iters}"
        )));
    }
    let sa = sorted(&a.scores);
    let sb = sorted(&b.scores);
    let (n, m) = (sa.len(), sb.len());
    let observed = violation_ratio_sorted(&sa, &sb);
    let degenerate = observed.is_none();
    let ratio = observed.unwrap_or(0.5);

    let scale = ((n * m) as f64 / (n + m) as f64).sqrt();
    let draws = n.max(m);
    let mut ua = vec![0.0; n];
    let mut ub = vec![0.0; m];
    let mut u = vec![0.0; draws];
    let mut centred = Vec::with_capacity(bootstrap_iters);
    for _ in 0..bootstrap_iters {
        u.iter_mut().for_each(|x| *x = rng.gen::<f64>());
        for (dst, &x) in ua.iter_mut().zip(&u) {
            *dst = quantile(&sa, x);
        }
        for (dst, &x) in ub.iter_mut().zip(&u) {
            *dst = quantile(&sb, x);
        }
        ua.sort_by(f64::total_cmp);
        ub.sort_by(f64::total_cmp);
        let r = violation_ratio_sorted(&ua, &ub).unwrap_or(0.5);
        centred.push(scale * (r - ratio));
    }
    let mean = centred.iter().sum::<f64>() / centred.len() as f64;
    let var = centred.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / centred.len() as f64;
    let sigma = var.sqrt();
    let z = Normal::standard().inverse_cdf(1.0 - alpha);
    let eps_min = (ratio + sigma * z / scale).clamp(0.0, 1.0);

    Ok(AsoResult {
        a: a.label.clone(),
        b: b.label.clone(),
        eps_min,
        violation_ratio: ratio,
        alpha,
        bootstrap_iters,
        degenerate,
    })
}

/// How the family-wise α is split across the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    /// α / (s (s - 1))
    OrderedPairs,
    /// α / (s (s - 1) / 2)
    UnorderedPairs,
    None,
}

impl std::str::FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ordered" => Ok(Correction::OrderedPairs),
            "unordered" => Ok(Correction::UnorderedPairs),
            "none" => Ok(Correction::None),
            other => Err(Error::config(
                "aso_correction",
                format!("expected ordered|unordered|none, got `{other}`"),
            )),
        }
    }
}

impl Correction {
    pub fn comparisons(self, samples: usize) -> usize {
        let ordered = samples * samples.saturating_sub(1);
        match self {
            Correction::OrderedPairs => ordered,
            Correction::UnorderedPairs => ordered / 2,
            Correction::None => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsoGrid {
    pub labels: Vec<String>,
    /// `cells[row][col]` = ε_min(row, col); the diagonal is `None`.
    pub cells: Vec<Vec<Option<f64>>>,
    pub alpha: f64,
    pub adjusted_alpha: f64,
    pub comparisons: usize,
}

/// Pairwise ε_min for every ordered pair. Both directions of a pair share a
/// bootstrap stream derived from the unordered pair.
pub fn aso_matrix(
    samples: &[ScoreSample],
    alpha: f64,
    bootstrap_iters: usize,
    correction: Correction,
    seed: u64,
) -> Result<AsoGrid> {
    let s = samples.len();
    if s < 2 {
        return Err(Error::InvalidArgument(
            "ASO grid needs at least two samples".into(),
        ));
    }
    let comparisons = correction.comparisons(s);
    let adjusted = alpha / comparisons as f64;
    let mut cells = vec![vec![None; s]; s];
    for i in 0..s {
        for j in 0..s {
            if i == j {
                continue;
            }
            let (lo, hi) = (i.min(j), i.max(j));
            let mut rng = stream(seed, purpose::ASO, (lo * s + hi) as u64);
            let result = aso_test(&samples[i], &samples[j], adjusted, bootstrap_iters, &mut rng)?;
            cells[i][j] = Some(result.eps_min);
        }
    }
    Ok(AsoGrid {
        labels: samples.iter().map(|x| x.label.clone()).collect(),
        cells,
        alpha,
        adjusted_alpha: adjusted,
        comparisons,
    })
}

/// Which instances a strategy acquired, per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Selections {
    pub label: String,
    pub dataset: String,
    pub per_seed: BTreeMap<u64, BTreeSet<String>>,
}

impl Selections {
    pub fn total(&self) -> usize {
        self.per_seed.values().map(BTreeSet::len).sum()
    }
}

/// Σ over seeds of |selected(a) ∩ selected(b)|.
pub fn batch_overlap(a: &Selections, b: &Selections) -> Result<usize> {
    if a.dataset != b.dataset {
        return Err(Error::Mismatch(format!(
            "dataset `{}` vs `{}`",
            a.dataset, b.dataset
        )));
    }
    let seeds_a: Vec<_> = a.per_seed.keys().collect();
    let seeds_b: Vec<_> = b.per_seed.keys().collect();
    if seeds_a != seeds_b {
        return Err(Error::Mismatch(format!(
            "seed lists {seeds_a:?} vs {seeds_b:?}"
        )));
    }
    Ok(a.per_seed
        .iter()
        .map(|(seed, sel)| sel.intersection(&b.per_seed[seed]).count())
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRow {
    pub a: String,
    pub b: String,
    pub overlap: usize,
    pub total: usize,
}

/// Overlap for every unordered pair, in input order.
pub fn overlap_report(runs: &[Selections]) -> Result<Vec<OverlapRow>> {
    let mut rows = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            rows.push(OverlapRow {
                a: runs[i].label.clone(),
                b: runs[j].label.clone(),
                overlap: batch_overlap(&runs[i], &runs[j])?,
                total: runs[i].total().max(runs[j].total()),
            });
        }
    }
    Ok(rows)
}
