//! Neighborhood explanations: which features set a classified record's
//! labeled neighbors apart from the labeled records outside its neighborhood.

use std::cmp::Ordering;
use std::io::{BufWriter, Write};

use crate::cohort::Cohort;
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::fill::{neighborhood, FillModel};
use crate::format::sig17;
use crate::stats::{bh_fdr, fisher_exact, odds_ratio, welch_t};

/// Adjusted p-value below which a comparison is reported as significant.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Binary,
    Continuous,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Binary => "binary",
            FeatureKind::Continuous => "continuous",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureComparison {
    pub feature: String,
    pub kind: FeatureKind,
    /// Odds ratio (neighbors over non-neighbors) for binary features,
    /// `mean(neighbors) - mean(non-neighbors)` for continuous ones.
    pub effect: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
}

impl FeatureComparison {
    /// Cell text for the top-k table, e.g. `Z92.1 (OR 7.05)`.
    pub fn label(&self) -> String {
        match self.kind {
            FeatureKind::Binary => format!("{} (OR {:.2})", self.feature, self.effect),
            FeatureKind::Continuous => format!("{} (dMean {:.2})", self.feature, self.effect),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodExplanation {
    pub record_id: String,
    pub neighbor_count: usize,
    pub non_neighbor_count: usize,
    /// One entry per feature, binary first, in schema order.
    pub comparisons: Vec<FeatureComparison>,
    /// Comparisons with `adjusted_p < 0.05`, in schema order.
    pub significant: Vec<FeatureComparison>,
}

/// Contrasts the labeled neighbors of `record_id` (under the model's
/// hyperparameters) with all other labeled records. The record itself is in
/// neither group. Raw p-values of all features form one FDR family.
pub fn explain_record(
    record_id: &str,
    cohort: &Cohort,
    model: &FillModel,
    distances: &DistanceMatrix,
) -> Result<NeighborhoodExplanation> {
    model.check(cohort, distances)?;
    let target = cohort
        .position(record_id)
        .ok_or_else(|| Error::UnknownRecord(record_id.to_string()))?;
    let labeled = cohort.labeled_indices();
    let row = distances.row(target);
    let (neighbors, _) = neighborhood(cohort, &labeled, &row, target, None, model.hyperparameters().radius);
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighborhood(record_id.to_string()));
    }
    let mut is_neighbor = vec![false; cohort.len()];
    for &j in &neighbors {
        is_neighbor[j] = true;
    }
    let others: Vec<usize> = labeled
        .iter()
        .copied()
        .filter(|&j| j != target && !is_neighbor[j])
        .collect();
    if others.is_empty() {
        return Err(Error::EmptyComplement(record_id.to_string()));
    }
    Ok(compare_groups(record_id, cohort, &neighbors, &others))
}

/// Feature-by-feature comparison of two disjoint record groups.
pub(crate) fn compare_groups(
    record_id: &str,
    cohort: &Cohort,
    group: &[usize],
    rest: &[usize],
) -> NeighborhoodExplanation {
    let records = cohort.records();
    let schema = cohort.schema();
    let mut comparisons = Vec::with_capacity(schema.n_features());

    for (f, name) in schema.binary_names().iter().enumerate() {
        let present_in = |idx: &[usize]| idx.iter().filter(|&&j| records[j].binary.get(f)).count() as u64;
        let (pg, pr) = (present_in(group), present_in(rest));
        let table = [[pg, pr], [group.len() as u64 - pg, rest.len() as u64 - pr]];
        let (effect, raw_p) = match fisher_exact(table) {
            Ok(t) => (t.statistic, t.p_value),
            Err(_) => (odds_ratio(table), 1.0),
        };
        comparisons.push(FeatureComparison {
            feature: name.clone(),
            kind: FeatureKind::Binary,
            effect,
            raw_p,
            adjusted_p: raw_p,
        });
    }

    for (f, name) in schema.continuous_names().iter().enumerate() {
        let values = |idx: &[usize]| idx.iter().map(|&j| records[j].continuous[f]).collect::<Vec<_>>();
        let (xs, ys) = (values(group), values(rest));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let effect = mean(&xs) - mean(&ys);
        // too few observations or no spread: no evidence of a difference
        let raw_p = welch_t(&xs, &ys).map(|t| t.p_value).unwrap_or(1.0);
        comparisons.push(FeatureComparison {
            feature: name.clone(),
            kind: FeatureKind::Continuous,
            effect,
            raw_p,
            adjusted_p: raw_p,
        });
    }

    let raw: Vec<f64> = comparisons.iter().map(|c| c.raw_p).collect();
    let adjusted = bh_fdr(&raw).expect("p-values lie in [0, 1]");
    for (c, a) in comparisons.iter_mut().zip(adjusted) {
        c.adjusted_p = a.max(c.raw_p);
    }
    let significant = comparisons
        .iter()
        .filter(|c| c.adjusted_p < SIGNIFICANCE)
        .cloned()
        .collect();
    NeighborhoodExplanation {
        record_id: record_id.to_string(),
        neighbor_count: group.len(),
        non_neighbor_count: rest.len(),
        comparisons,
        significant,
    }
}

fn rank(a: &FeatureComparison, b: &FeatureComparison) -> Ordering {
    a.adjusted_p
        .total_cmp(&b.adjusted_p)
        .then(a.raw_p.total_cmp(&b.raw_p))
        .then_with(|| a.feature.cmp(&b.feature))
}

/// Up to `k` significant comparisons, most significant first.
pub fn top_features(expl: &NeighborhoodExplanation, k: usize) -> Vec<FeatureComparison> {
    let mut ranked = expl.significant.clone();
    ranked.sort_by(rank);
    ranked.truncate(k);
    ranked
}

/// Volcano data for one record: every feature, significant or not.
pub fn write_volcano<W: Write>(expl: &NeighborhoodExplanation, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "feature,kind,effect,raw_p,adjusted_p")?;
    for c in &expl.comparisons {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.feature,
            c.kind.as_str(),
            sig17(c.effect),
            sig17(c.raw_p),
            sig17(c.adjusted_p)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One row per explanation with columns `record_id,1st,...,kth`.
pub fn write_top_table<W: Write>(explanations: &[NeighborhoodExplanation], k: usize, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    write!(w, "record_id")?;
    for i in 1..=k {
        write!(w, ",{}", ordinal(i))?;
    }
    writeln!(w)?;
    for e in explanations {
        let top = top_features(e, k);
        write!(w, "{}", e.record_id)?;
        for i in 0..k {
            write!(w, ",{}", top.get(i).map(FeatureComparison::label).unwrap_or_default())?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn ordinal(i: usize) -> String {
    let suffix = match (i % 10, i % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{i}{suffix}")
}
