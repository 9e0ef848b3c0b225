//! The local-likelihood classifier.
//!
//! A record is assigned the positive class when the labeled records within
//! distance `radius` of it contain significantly more positives than the
//! cohort-wide base rate predicts, judged by a one-tailed binomial test at
//! level `threshold`. Everything else stays unclassified; the negative class
//! is never imputed.

use std::fmt;
use std::io::{BufWriter, Write};

use crate::cohort::{Cohort, Label};
use crate::distance::{DistanceMatrix, Metric};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::format::sig17;
use crate::stats::{binom_sf, BinomialTail};
use crate::tune::yield_proportion;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    /// Neighborhood radius in the metric's units (closed ball).
    pub radius: f64,
    /// Significance level; a record is POS when its p-value is strictly below.
    pub threshold: f64,
    pub metric: Metric,
}

impl Hyperparameters {
    pub fn new(radius: f64, threshold: f64, metric: Metric) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArguments(format!(
                "radius {radius} must be finite and >= 0"
            )));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidArguments(format!(
                "threshold {threshold} must lie in (0, 1]"
            )));
        }
        Ok(Self {
            radius,
            threshold,
            metric,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Pos,
    Unclassified,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Pos => "POS",
            Decision::Unclassified => "UNCLASSIFIED",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub record_id: String,
    pub neighborhood_n: usize,
    pub positive_k: usize,
    pub p_value: f64,
    pub decision: Decision,
    pub neighbor_ids: Vec<String>,
}

/// Proportion of POS among labeled records.
pub fn base_rate(cohort: &Cohort) -> Result<f64> {
    let pos = cohort.count_label(Label::Pos);
    let neg = cohort.count_label(Label::Neg);
    if pos + neg == 0 {
        return Err(Error::NoLabeledRecords);
    }
    Ok(pos as f64 / (pos + neg) as f64)
}

#[derive(Debug, Clone)]
pub struct FillModel {
    labeled_ids: Vec<String>,
    labeled: Vec<usize>,
    base_rate: f64,
    hyperparameters: Hyperparameters,
}

impl FillModel {
    pub fn fit(cohort: &Cohort, hyperparameters: Hyperparameters) -> Result<Self> {
        let base_rate = base_rate(cohort)?;
        let labeled = cohort.labeled_indices();
        Ok(Self {
            labeled_ids: labeled.iter().map(|&i| cohort.records()[i].id.clone()).collect(),
            labeled,
            base_rate,
            hyperparameters,
        })
    }

    pub fn labeled_ids(&self) -> &[String] {
        &self.labeled_ids
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyperparameters
    }

    /// Same model with different hyperparameters.
    pub fn with_hyperparameters(&self, hyperparameters: Hyperparameters) -> Self {
        Self {
            hyperparameters,
            ..self.clone()
        }
    }

    pub(crate) fn check(&self, cohort: &Cohort, distances: &DistanceMatrix) -> Result<()> {
        let same_labeled = self.labeled.len() == cohort.labeled_indices().len()
            && self.labeled.iter().zip(&self.labeled_ids).all(|(&i, id)| {
                cohort
                    .records()
                    .get(i)
                    .is_some_and(|r| r.id == *id && r.label.is_labeled())
            });
        if !same_labeled {
            return Err(Error::ModelCohortMismatch);
        }
        if !distances.covers(cohort) {
            return Err(Error::DistanceCohortMismatch);
        }
        if distances.metric() != self.hyperparameters.metric {
            return Err(Error::InvalidArguments(format!(
                "model uses {} but distances were computed with {}",
                self.hyperparameters.metric,
                distances.metric()
            )));
        }
        Ok(())
    }
}

/// Labeled neighbors of `target` within `radius`, skipping `target` itself and
/// `exclude`. Returns `(indices, positive count)`.
pub(crate) fn neighborhood(
    cohort: &Cohort,
    labeled: &[usize],
    row: &[f64],
    target: usize,
    exclude: Option<usize>,
    radius: f64,
) -> (Vec<usize>, usize) {
    let records = cohort.records();
    let mut members = Vec::new();
    let mut positives = 0;
    for &j in labeled {
        if j == target || Some(j) == exclude || row[j] > radius {
            continue;
        }
        members.push(j);
        positives += (records[j].label == Label::Pos) as usize;
    }
    (members, positives)
}

fn decide(p_value: f64, threshold: f64) -> Decision {
    if p_value < threshold {
        Decision::Pos
    } else {
        Decision::Unclassified
    }
}

/// Classifies one record. `exclude` removes a further record from the
/// evidence, which is how leave-one-out hides a labeled record's own label.
pub fn classify(
    record_id: &str,
    cohort: &Cohort,
    model: &FillModel,
    distances: &DistanceMatrix,
    exclude: Option<&str>,
) -> Result<ClassificationResult> {
    model.check(cohort, distances)?;
    let target = cohort
        .position(record_id)
        .ok_or_else(|| Error::UnknownRecord(record_id.to_string()))?;
    let exclude = exclude
        .map(|id| cohort.position(id).ok_or_else(|| Error::UnknownRecord(id.to_string())))
        .transpose()?;
    let hp = model.hyperparameters;
    let row = distances.row(target);
    let (members, k) = neighborhood(cohort, &model.labeled, &row, target, exclude, hp.radius);
    let p_value = binom_sf(k as u64, members.len() as u64, model.base_rate)?;
    Ok(ClassificationResult {
        record_id: record_id.to_string(),
        neighborhood_n: members.len(),
        positive_k: k,
        p_value,
        decision: decide(p_value, hp.threshold),
        neighbor_ids: members.iter().map(|&j| cohort.records()[j].id.clone()).collect(),
    })
}

/// Classifies every UNKNOWN record, in cohort order.
pub fn impute_unknowns(
    cohort: &Cohort,
    model: &FillModel,
    distances: &DistanceMatrix,
) -> Result<Vec<ClassificationResult>> {
    impute_unknowns_with(cohort, model, distances, Execution::default())
}

pub fn impute_unknowns_with(
    cohort: &Cohort,
    model: &FillModel,
    distances: &DistanceMatrix,
    exec: Execution,
) -> Result<Vec<ClassificationResult>> {
    model.check(cohort, distances)?;
    let hp = model.hyperparameters;
    let tail = BinomialTail::new(model.base_rate, model.labeled.len())?;
    let unknown: Vec<usize> = (0..cohort.len())
        .filter(|&i| cohort.records()[i].label == Label::Unknown)
        .collect();
    Ok(exec.map_slice(&unknown, |&i| {
        let row = distances.row(i);
        let (members, k) = neighborhood(cohort, &model.labeled, &row, i, None, hp.radius);
        let p_value = tail.sf(k, members.len());
        ClassificationResult {
            record_id: cohort.records()[i].id.clone(),
            neighborhood_n: members.len(),
            positive_k: k,
            p_value,
            decision: decide(p_value, hp.threshold),
            neighbor_ids: members.iter().map(|&j| cohort.records()[j].id.clone()).collect(),
        }
    }))
}

/// Imputation table: `record_id,n,k,p_value,decision`.
pub fn write_imputation<W: Write>(results: &[ClassificationResult], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "record_id,n,k,p_value,decision")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.record_id,
            r.neighborhood_n,
            r.positive_k,
            sig17(r.p_value),
            r.decision
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Imputation summary as TOML: settings, cohort counts, and the yield
/// proportion (new POS calls over labeled records).
pub fn write_imputation_summary<W: Write>(
    cohort: &Cohort,
    model: &FillModel,
    results: &[ClassificationResult],
    out: W,
) -> Result<()> {
    let hp = model.hyperparameters;
    let n_labeled = model.labeled_ids.len();
    let called = results.iter().filter(|r| r.decision == Decision::Pos).count();
    let mut w = BufWriter::new(out);
    writeln!(w, "metric = \"{}\"", hp.metric)?;
    writeln!(w, "radius = {}", sig17(hp.radius))?;
    writeln!(w, "threshold = {}", sig17(hp.threshold))?;
    writeln!(w, "base_rate = {}", sig17(model.base_rate))?;
    writeln!(w, "records = {}", cohort.len())?;
    writeln!(w, "labeled_records = {n_labeled}")?;
    writeln!(w, "candidates = {}", results.len())?;
    writeln!(w, "classified_pos = {called}")?;
    writeln!(w, "unclassified = {}", results.len() - called)?;
    writeln!(w, "yield = {}", sig17(yield_proportion(called, n_labeled)))?;
    w.flush()?;
    Ok(())
}
