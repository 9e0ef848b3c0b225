//! Logistic-regression baseline fitted by IRLS, with probability-cutoff
//! selection and accuracy / precision / c-statistic evaluation.

use std::io::{BufWriter, Write};

use nalgebra::{DMatrix, DVector};

use crate::cohort::{Cohort, Label, Record};
use crate::error::{Error, Result};
use crate::format::sig17;

pub const DEFAULT_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence when every weight moves less than this in one step.
    pub tol: f64,
    /// L2 penalty on the feature weights (the intercept is not penalized).
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Intercept first, then binary features, then continuous features, all
    /// in schema order.
    pub weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    n_binary: usize,
    ranges: Vec<(f64, f64)>,
}

impl LogisticModel {
    /// Feature row with a leading 1: binary as 0/1, continuous scaled to
    /// [0, 1] by the cohort range (0 for an empty range).
    fn design_row(&self, r: &Record, out: &mut [f64]) {
        design_row(r, self.n_binary, &self.ranges, out);
    }

    pub fn predict_proba(&self, r: &Record) -> f64 {
        let mut x = vec![0.0; self.weights.len()];
        self.design_row(r, &mut x);
        sigmoid(x.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }

    fn check_schema(&self, cohort: &Cohort) -> Result<()> {
        let s = cohort.schema();
        if s.n_binary() != self.n_binary || s.n_continuous() != self.ranges.len() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} binary + {} continuous features", self.n_binary, self.ranges.len()),
                found: format!("{} binary + {} continuous features", s.n_binary(), s.n_continuous()),
            });
        }
        Ok(())
    }
}

fn design_row(r: &Record, n_binary: usize, ranges: &[(f64, f64)], out: &mut [f64]) {
    out[0] = 1.0;
    for j in 0..n_binary {
        out[1 + j] = if r.binary.get(j) { 1.0 } else { 0.0 };
    }
    for (j, (&v, &(lo, hi))) in r.continuous.iter().zip(ranges).enumerate() {
        out[1 + n_binary + j] = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Ridge-penalized maximum likelihood over the labeled records by
/// iteratively reweighted least squares (Newton's method).
pub fn fit_logistic(cohort: &Cohort, options: FitOptions) -> Result<LogisticModel> {
    let labeled: Vec<&Record> = cohort.records().iter().filter(|r| r.label.is_labeled()).collect();
    let n_pos = labeled.iter().filter(|r| r.label == Label::Pos).count();
    if labeled.len() < 2 || n_pos == 0 || n_pos == labeled.len() {
        return Err(Error::SingleClass);
    }
    let schema = cohort.schema();
    let n_binary = schema.n_binary();
    let ranges = cohort.continuous_ranges().to_vec();
    let p = 1 + schema.n_features();
    let n = labeled.len();

    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut row = vec![0.0; p];
    for (i, r) in labeled.iter().enumerate() {
        design_row(r, n_binary, &ranges, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let y = DVector::from_iterator(n, labeled.iter().map(|r| (r.label == Label::Pos) as u8 as f64));

    let mut penalty = DVector::from_element(p, options.ridge);
    penalty[0] = 0.0;

    let mut w = DVector::<f64>::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let mu = (&x * &w).map(sigmoid);
        let curvature = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let gradient = x.transpose() * (&y - &mu) - penalty.component_mul(&w);

        let mut weighted = x.clone();
        for (i, mut r) in weighted.row_iter_mut().enumerate() {
            r *= curvature[i];
        }
        let mut hessian = x.transpose() * weighted;
        for j in 0..p {
            hessian[(j, j)] += penalty[j];
        }
        let step = match hessian.clone().cholesky() {
            Some(ch) => ch.solve(&gradient),
            None => hessian.lu().solve(&gradient).ok_or(Error::Diverged(iterations))?,
        };
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(iterations));
        }
        w += &step;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(iterations));
        }
        if step.amax() < options.tol {
            converged = true;
            break;
        }
    }

    Ok(LogisticModel {
        weights: w.iter().copied().collect(),
        converged,
        iterations,
        n_binary,
        ranges,
    })
}

fn class_split(scores: &[f64], labels: &[Label]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &l) in scores.iter().zip(labels) {
        match l {
            Label::Pos => pos.push(s),
            Label::Neg => neg.push(s),
            Label::Unknown => {
                return Err(Error::InvalidArguments(
                    "scores must carry POS or NEG labels".to_string(),
                ))
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    Ok((pos, neg))
}

/// `#FN + #FP` when predicting POS for `score >= cutoff`, on sorted classes.
fn errors_at(pos: &[f64], neg: &[f64], cutoff: f64) -> usize {
    let false_negatives = pos.partition_point(|&s| s < cutoff);
    let false_positives = neg.len() - neg.partition_point(|&s| s < cutoff);
    false_negatives + false_positives
}

/// Cutoff minimizing misclassifications over the observed scores and 0.5.
/// Ties go to the candidate closest to 0.5, then to the smaller one.
pub fn optimal_cutoff(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, neg) = class_split(scores, labels)?;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(DEFAULT_CUTOFF);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let best = candidates
        .into_iter()
        .map(|c| (errors_at(&pos, &neg, c), c))
        .min_by(|a, b| {
            a.0.cmp(&b.0)
                .then((a.1 - DEFAULT_CUTOFF).abs().total_cmp(&(b.1 - DEFAULT_CUTOFF).abs()))
                .then(a.1.total_cmp(&b.1))
        })
        .expect("0.5 is always a candidate");
    Ok(best.1)
}

/// Concordance probability `P(s_pos > s_neg) + P(s_pos = s_neg) / 2`,
/// computed from mid-ranks.
pub fn c_statistic(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, neg) = class_split(scores, labels)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share the mid-rank
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum_pos += mid * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineMetrics {
    pub cutoff: f64,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub c_statistic: f64,
}

/// Scores and labels of the labeled records, in cohort order.
pub fn labeled_scores(cohort: &Cohort, model: &LogisticModel) -> Result<(Vec<f64>, Vec<Label>)> {
    model.check_schema(cohort)?;
    Ok(cohort
        .records()
        .iter()
        .filter(|r| r.label.is_labeled())
        .map(|r| (model.predict_proba(r), r.label))
        .unzip())
}

/// In-sample accuracy, precision and c-statistic over the labeled records.
pub fn evaluate_baseline(cohort: &Cohort, model: &LogisticModel, cutoff: f64) -> Result<BaselineMetrics> {
    let (scores, labels) = labeled_scores(cohort, model)?;
    let c = c_statistic(&scores, &labels)?;
    let (mut tp, mut fp, mut correct) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(&labels) {
        let predicted_pos = s >= cutoff;
        let is_pos = l == Label::Pos;
        correct += (predicted_pos == is_pos) as usize;
        if predicted_pos {
            if is_pos {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(BaselineMetrics {
        cutoff,
        accuracy: correct as f64 / scores.len() as f64,
        precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
        c_statistic: c,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub model: LogisticModel,
    pub default: BaselineMetrics,
    pub optimal: BaselineMetrics,
}

/// Fits the model and evaluates it at the default and optimal cutoffs.
pub fn run_baseline(cohort: &Cohort, options: FitOptions) -> Result<BaselineReport> {
    let model = fit_logistic(cohort, options)?;
    let (scores, labels) = labeled_scores(cohort, &model)?;
    let cutoff = optimal_cutoff(&scores, &labels)?;
    Ok(BaselineReport {
        default: evaluate_baseline(cohort, &model, DEFAULT_CUTOFF)?,
        optimal: evaluate_baseline(cohort, &model, cutoff)?,
        model,
    })
}

fn opt_text(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "NA".to_string())
}

/// TOML report. The `[summary]` strings read `default (optimal)` at two
/// decimals, the way baseline tables are usually printed.
pub fn write_baseline_report<W: Write>(report: &BaselineReport, feature_names: &[String], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    let m = &report.model;
    writeln!(w, "[summary]")?;
    writeln!(
        w,
        "accuracy = \"{:.2} ({:.2})\"",
        report.default.accuracy, report.optimal.accuracy
    )?;
    writeln!(
        w,
        "precision = \"{} ({})\"",
        opt_text(report.default.precision, 2),
        opt_text(report.optimal.precision, 2)
    )?;
    writeln!(w, "c_statistic = {}", sig17(report.default.c_statistic))?;
    writeln!(w)?;
    writeln!(w, "[model]")?;
    writeln!(w, "converged = {}", m.converged)?;
    writeln!(w, "iterations = {}", m.iterations)?;
    writeln!(w, "intercept = {}", sig17(m.weights[0]))?;
    for (label, metrics) in [("default_cutoff", &report.default), ("optimal_cutoff", &report.optimal)] {
        writeln!(w)?;
        writeln!(w, "[{label}]")?;
        writeln!(w, "cutoff = {}", sig17(metrics.cutoff))?;
        writeln!(w, "accuracy = {}", sig17(metrics.accuracy))?;
        match metrics.precision {
            Some(p) => writeln!(w, "precision = {}", sig17(p))?,
            None => writeln!(w, "precision = \"NA\"")?,
        }
    }
    writeln!(w)?;
    writeln!(w, "[weights]")?;
    for (name, wt) in feature_names.iter().zip(&m.weights[1..]) {
        writeln!(w, "\"{name}\" = {}", sig17(*wt))?;
    }
    w.flush()?;
    Ok(())
}
