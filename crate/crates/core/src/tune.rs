//! Leave-one-out evaluation and the (radius, threshold) grid search.
//!
//! The distance matrix and the base rate are computed once from the full
//! cohort; a fold only hides the held-out record from its own neighborhood.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufWriter, Write};

use crate::cohort::{Cohort, Label};
use crate::distance::{DistanceMatrix, Metric};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fill::{base_rate, neighborhood, FillModel, Hyperparameters};
use crate::format::sig17;
use crate::stats::BinomialTail;

/// Minimum true positives for the max-precision criterion.
pub const DEFAULT_MIN_TP: usize = 10;
/// Precision floor for the max-true-positive criterion.
pub const DEFAULT_MIN_PRECISION: f64 = 0.85;
/// Precision floors traced by [`precision_yield_frontier`].
pub const FRONTIER_THRESHOLDS: [f64; 4] = [0.80, 0.85, 0.90, 0.95];

/// `tp / (tp + fp)`, or `None` when nothing was predicted positive.
pub fn precision(tp: usize, fp: usize) -> Option<f64> {
    (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64)
}

/// Newly classified records relative to the labeled pool size.
pub fn yield_proportion(newly_classified: usize, n_labeled: usize) -> f64 {
    if n_labeled == 0 {
        0.0
    } else {
        newly_classified as f64 / n_labeled as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    /// UNKNOWN records decided POS under the same hyperparameters.
    pub newly_classified: usize,
    pub n_labeled: usize,
    pub precision: Option<f64>,
    pub yield_proportion: f64,
}

impl LooMetrics {
    pub fn from_counts(tp: usize, fp: usize, newly_classified: usize, n_labeled: usize) -> Self {
        Self {
            true_positives: tp,
            false_positives: fp,
            newly_classified,
            n_labeled,
            precision: precision(tp, fp),
            yield_proportion: yield_proportion(newly_classified, n_labeled),
        }
    }

    /// Exact comparison of precisions as rationals; undefined sorts lowest.
    fn cmp_precision(&self, other: &Self) -> Ordering {
        match (self.precision.is_some(), other.precision.is_some()) {
            (false, false) => Ordering::Equal,
            (false, true) => Ordering::Less,
            (true, false) => Ordering::Greater,
            (true, true) => {
                let lhs = self.true_positives as u128 * (other.true_positives + other.false_positives) as u128;
                let rhs = other.true_positives as u128 * (self.true_positives + self.false_positives) as u128;
                lhs.cmp(&rhs)
            }
        }
    }
}

fn labeled_count(cohort: &Cohort) -> usize {
    cohort.count_label(Label::Pos) + cohort.count_label(Label::Neg)
}

/// Leave-one-out metrics for one hyperparameter setting.
pub fn loo_evaluate(cohort: &Cohort, hp: &Hyperparameters, distances: &DistanceMatrix) -> Result<LooMetrics> {
    let n_labeled = labeled_count(cohort);
    if n_labeled < 2 {
        return Err(Error::TooFewLabeled(n_labeled));
    }
    let model = FillModel::fit(cohort, *hp)?;
    model.check(cohort, distances)?;

    let labeled = cohort.labeled_indices();
    let tail = BinomialTail::new(model.base_rate(), labeled.len())?;
    let records = cohort.records();
    let decided: Vec<(usize, bool)> = Execution::default().map_range(cohort.len(), |i| {
        let row = distances.row(i);
        let (members, k) = neighborhood(cohort, &labeled, &row, i, None, hp.radius);
        (i, tail.sf(k, members.len()) < hp.threshold)
    });

    let mut tp = 0;
    let mut fp = 0;
    let mut newly = 0;
    for (i, pos) in decided {
        if !pos {
            continue;
        }
        match records[i].label {
            Label::Pos => tp += 1,
            Label::Neg => fp += 1,
            Label::Unknown => newly += 1,
        }
    }
    Ok(LooMetrics::from_counts(tp, fp, newly, n_labeled))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub radius: f64,
    pub threshold: f64,
    pub metrics: LooMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Highest precision among cells with at least `min_tp` true positives.
    MaxPrecision { min_tp: usize },
    /// Most true positives among cells with precision at least `min_precision`.
    MaxTruePositives { min_precision: f64 },
}

impl Criterion {
    pub fn is_feasible(&self, m: &LooMetrics) -> bool {
        match *self {
            Criterion::MaxPrecision { min_tp } => m.precision.is_some() && m.true_positives >= min_tp,
            Criterion::MaxTruePositives { min_precision } => m.precision.is_some_and(|p| p >= min_precision),
        }
    }

    /// Total preference order; `Greater` means `a` is the better cell.
    fn prefer(&self, a: &GridCell, b: &GridCell) -> Ordering {
        let primary = match self {
            Criterion::MaxPrecision { .. } => a
                .metrics
                .cmp_precision(&b.metrics)
                .then(a.metrics.true_positives.cmp(&b.metrics.true_positives)),
            Criterion::MaxTruePositives { .. } => a
                .metrics
                .true_positives
                .cmp(&b.metrics.true_positives)
                .then(a.metrics.cmp_precision(&b.metrics)),
        };
        primary
            .then(b.radius.total_cmp(&a.radius))
            .then(b.threshold.total_cmp(&a.threshold))
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::MaxPrecision { min_tp } => write!(f, "a (max precision, tp >= {min_tp})"),
            Criterion::MaxTruePositives { min_precision } => {
                write!(f, "b (max tp, precision >= {min_precision})")
            }
        }
    }
}

/// Index of the winning cell, if any cell is feasible.
pub fn select_winner(grid: &[GridCell], criterion: &Criterion) -> Option<usize> {
    grid.iter()
        .enumerate()
        .filter(|(_, c)| criterion.is_feasible(&c.metrics))
        .max_by(|(_, a), (_, b)| criterion.prefer(a, b))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchReport {
    pub metric: Metric,
    pub criterion: Criterion,
    /// Sorted by radius, then threshold.
    pub grid: Vec<GridCell>,
    pub winner: usize,
}

impl GridSearchReport {
    pub fn winner(&self) -> &GridCell {
        &self.grid[self.winner]
    }
}

fn normalize_grid(values: &[f64], what: &str, valid: impl Fn(f64) -> bool) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(v) = values.iter().find(|v| !valid(**v)) {
        return Err(Error::InvalidArguments(format!("{what} grid value {v} out of range")));
    }
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// Leave-one-out metrics for every (radius, threshold) pair, sorted by radius
/// then threshold. Each record's labeled-neighbor distances are sorted once
/// and every radius is answered by a prefix count.
pub fn evaluate_grid(
    cohort: &Cohort,
    distances: &DistanceMatrix,
    s_grid: &[f64],
    t_grid: &[f64],
    exec: Execution,
) -> Result<Vec<GridCell>> {
    let radii = normalize_grid(s_grid, "radius", |s| s.is_finite() && s >= 0.0)?;
    let thresholds = normalize_grid(t_grid, "threshold", |t| t > 0.0 && t <= 1.0)?;
    let n_labeled = labeled_count(cohort);
    if n_labeled < 2 {
        return Err(Error::TooFewLabeled(n_labeled));
    }
    if !distances.covers(cohort) {
        return Err(Error::DistanceCohortMismatch);
    }
    let labeled = cohort.labeled_indices();
    let tail = BinomialTail::new(base_rate(cohort)?, labeled.len())?;
    let records = cohort.records();

    // p-values indexed [record][radius]
    let pvalues: Vec<Vec<f64>> = exec.map_range(cohort.len(), |i| {
        let row = distances.row(i);
        let mut near: Vec<(f64, bool)> = labeled
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| (row[j], records[j].label == Label::Pos))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut positives = Vec::with_capacity(near.len() + 1);
        positives.push(0usize);
        for &(_, pos) in &near {
            positives.push(positives.last().unwrap() + pos as usize);
        }
        radii
            .iter()
            .map(|&s| {
                let n = near.partition_point(|&(d, _)| d <= s);
                tail.sf(positives[n], n)
            })
            .collect()
    });

    let mut grid = Vec::with_capacity(radii.len() * thresholds.len());
    for (si, &radius) in radii.iter().enumerate() {
        for &threshold in &thresholds {
            let (mut tp, mut fp, mut newly) = (0, 0, 0);
            for (r, p) in records.iter().zip(&pvalues) {
                if p[si] < threshold {
                    match r.label {
                        Label::Pos => tp += 1,
                        Label::Neg => fp += 1,
                        Label::Unknown => newly += 1,
                    }
                }
            }
            grid.push(GridCell {
                radius,
                threshold,
                metrics: LooMetrics::from_counts(tp, fp, newly, n_labeled),
            });
        }
    }
    Ok(grid)
}

pub fn grid_search(
    cohort: &Cohort,
    distances: &DistanceMatrix,
    s_grid: &[f64],
    t_grid: &[f64],
    criterion: Criterion,
) -> Result<GridSearchReport> {
    let grid = evaluate_grid(cohort, distances, s_grid, t_grid, Execution::default())?;
    match select_winner(&grid, &criterion) {
        Some(winner) => Ok(GridSearchReport {
            metric: distances.metric(),
            criterion,
            grid,
            winner,
        }),
        None => Err(Error::NoFeasibleCell { grid }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub min_precision: f64,
    pub feasible: bool,
    pub achieved_precision: Option<f64>,
    pub true_positives: usize,
    pub yield_proportion: f64,
    pub winner: Option<(f64, f64)>,
}

/// Best max-true-positive cell for each precision floor, followed by the
/// unconstrained point (floor 0).
pub fn frontier_from_grid(grid: &[GridCell], thresholds: &[f64]) -> Vec<FrontierPoint> {
    thresholds
        .iter()
        .copied()
        .chain(std::iter::once(0.0))
        .map(|theta| {
            let criterion = Criterion::MaxTruePositives { min_precision: theta };
            match select_winner(grid, &criterion) {
                Some(i) => {
                    let c = &grid[i];
                    FrontierPoint {
                        min_precision: theta,
                        feasible: true,
                        achieved_precision: c.metrics.precision,
                        true_positives: c.metrics.true_positives,
                        yield_proportion: c.metrics.yield_proportion,
                        winner: Some((c.radius, c.threshold)),
                    }
                }
                None => FrontierPoint {
                    min_precision: theta,
                    feasible: false,
                    achieved_precision: None,
                    true_positives: 0,
                    yield_proportion: 0.0,
                    winner: None,
                },
            }
        })
        .collect()
}

pub fn precision_yield_frontier(
    cohort: &Cohort,
    distances: &DistanceMatrix,
    s_grid: &[f64],
    t_grid: &[f64],
    thresholds: &[f64],
) -> Result<Vec<FrontierPoint>> {
    let grid = evaluate_grid(cohort, distances, s_grid, t_grid, Execution::default())?;
    Ok(frontier_from_grid(&grid, thresholds))
}

/// `{1e-6, ..., 1e-1} ∪ {0.02, 0.03, 0.05}`, ascending.
pub fn default_t_grid() -> Vec<f64> {
    vec![1e-6, 1e-5, 1e-4, 1e-3, 0.01, 0.02, 0.03, 0.05, 0.1]
}

/// Upper bound on the labeled pairs sampled for the default radius grid.
const MAX_QUANTILE_PAIRS: usize = 8_000_000;

/// 41 evenly spaced quantiles (0%, 2.5%, ..., 100%) of the distances between
/// distinct labeled records, using linear interpolation between order
/// statistics. Repeated values are collapsed.
pub fn default_s_grid(cohort: &Cohort, distances: &DistanceMatrix) -> Result<Vec<f64>> {
    let labeled = cohort.labeled_indices();
    if labeled.len() < 2 {
        return Err(Error::TooFewLabeled(labeled.len()));
    }
    if !distances.covers(cohort) {
        return Err(Error::DistanceCohortMismatch);
    }
    let total = labeled.len() * (labeled.len() - 1) / 2;
    let stride = total.div_ceil(MAX_QUANTILE_PAIRS).max(1);
    let mut pairs = Vec::with_capacity(total / stride + 1);
    let mut counter = 0usize;
    for (a, &i) in labeled.iter().enumerate() {
        let row = distances.row(i);
        for &j in &labeled[a + 1..] {
            if counter.is_multiple_of(stride) {
                pairs.push(row[j]);
            }
            counter += 1;
        }
    }
    pairs.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = (0..=40).map(|q| quantile_sorted(&pairs, q as f64 / 40.0)).collect();
    grid.dedup();
    Ok(grid)
}

fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn precision_text(p: Option<f64>) -> String {
    p.map(sig17).unwrap_or_else(|| "NA".to_string())
}

/// Flat `S,T,tp,fp,precision,yield` table for external plotting.
pub fn write_grid_csv<W: Write>(grid: &[GridCell], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "S,T,tp,fp,precision,yield")?;
    for c in grid {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            sig17(c.radius),
            sig17(c.threshold),
            c.metrics.true_positives,
            c.metrics.false_positives,
            precision_text(c.metrics.precision),
            sig17(c.metrics.yield_proportion)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn toml_precision(p: Option<f64>) -> String {
    p.map(sig17).unwrap_or_else(|| "\"NA\"".to_string())
}

fn write_metrics<W: Write>(w: &mut W, m: &LooMetrics) -> std::io::Result<()> {
    writeln!(w, "true_positives = {}", m.true_positives)?;
    writeln!(w, "false_positives = {}", m.false_positives)?;
    writeln!(w, "precision = {}", toml_precision(m.precision))?;
    writeln!(w, "newly_classified = {}", m.newly_classified)?;
    writeln!(w, "yield = {}", sig17(m.yield_proportion))
}

/// Frontier table: `min_precision,feasible,S,T,tp,precision,yield`, with
/// `NA` in the cell columns of infeasible floors.
pub fn write_frontier_csv<W: Write>(frontier: &[FrontierPoint], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "min_precision,feasible,S,T,tp,precision,yield")?;
    for p in frontier {
        match p.winner {
            Some((s, t)) => writeln!(
                w,
                "{},true,{},{},{},{},{}",
                sig17(p.min_precision),
                sig17(s),
                sig17(t),
                p.true_positives,
                precision_text(p.achieved_precision),
                sig17(p.yield_proportion)
            )?,
            None => writeln!(w, "{},false,NA,NA,NA,NA,NA", sig17(p.min_precision))?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Single-setting leave-one-out report as TOML.
pub fn write_loo_report<W: Write>(out: W, hp: &Hyperparameters, metrics: &LooMetrics) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "metric = \"{}\"", hp.metric)?;
    writeln!(w, "radius = {}", sig17(hp.radius))?;
    writeln!(w, "threshold = {}", sig17(hp.threshold))?;
    writeln!(w, "labeled_records = {}", metrics.n_labeled)?;
    write_metrics(&mut w, metrics)?;
    w.flush()?;
    Ok(())
}

/// Grid-search report as a TOML document: run header, criterion, winner
/// (`feasible = false` when none), optional frontier points, then one
/// `[[cell]]` table per grid cell in grid order.
pub fn write_grid_report<W: Write>(
    out: W,
    metric: Metric,
    criterion: &Criterion,
    grid: &[GridCell],
    winner: Option<usize>,
    frontier: &[FrontierPoint],
) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "metric = \"{metric}\"")?;
    if let Some(c) = grid.first() {
        writeln!(w, "labeled_records = {}", c.metrics.n_labeled)?;
    }
    writeln!(w, "cells = {}", grid.len())?;
    writeln!(w)?;
    writeln!(w, "[criterion]")?;
    match *criterion {
        Criterion::MaxPrecision { min_tp } => {
            writeln!(w, "kind = \"a\"")?;
            writeln!(w, "min_tp = {min_tp}")?;
        }
        Criterion::MaxTruePositives { min_precision } => {
            writeln!(w, "kind = \"b\"")?;
            writeln!(w, "min_precision = {}", sig17(min_precision))?;
        }
    }
    writeln!(w)?;
    writeln!(w, "[winner]")?;
    match winner.map(|i| &grid[i]) {
        Some(c) => {
            writeln!(w, "feasible = true")?;
            writeln!(w, "radius = {}", sig17(c.radius))?;
            writeln!(w, "threshold = {}", sig17(c.threshold))?;
            write_metrics(&mut w, &c.metrics)?;
        }
        None => writeln!(w, "feasible = false")?,
    }
    for p in frontier {
        writeln!(w)?;
        writeln!(w, "[[frontier]]")?;
        writeln!(w, "min_precision = {}", sig17(p.min_precision))?;
        writeln!(w, "feasible = {}", p.feasible)?;
        if let Some((s, t)) = p.winner {
            writeln!(w, "radius = {}", sig17(s))?;
            writeln!(w, "threshold = {}", sig17(t))?;
            writeln!(w, "precision = {}", toml_precision(p.achieved_precision))?;
            writeln!(w, "true_positives = {}", p.true_positives)?;
            writeln!(w, "yield = {}", sig17(p.yield_proportion))?;
        }
    }
    for c in grid {
        writeln!(w)?;
        writeln!(w, "[[cell]]")?;
        writeln!(w, "radius = {}", sig17(c.radius))?;
        writeln!(w, "threshold = {}", sig17(c.threshold))?;
        write_metrics(&mut w, &c.metrics)?;
    }
    w.flush()?;
    Ok(())
}
