//! Record dissimilarities and the pairwise distance matrix.

use std::borrow::Cow;
use std::fmt;
use std::io::{BufWriter, Write};
use std::str::FromStr;

use crate::bits::BitVector;
use crate::cohort::{Cohort, Record};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::format::sig17;

/// Cohorts larger than this are served row by row instead of materialized.
pub const DENSE_LIMIT: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Jaccard,
    Manhattan,
    Gower,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Jaccard => "jaccard",
            Metric::Manhattan => "manhattan",
            Metric::Gower => "gower",
        }
    }

    /// Jaccard and Manhattan are defined on binary features only.
    pub fn check_compatible(self, cohort: &Cohort) -> Result<()> {
        let continuous = cohort.schema().n_continuous();
        if self != Metric::Gower && continuous > 0 {
            return Err(Error::IncompatibleMetric {
                metric: self.as_str(),
                continuous,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jaccard" => Ok(Metric::Jaccard),
            "manhattan" => Ok(Metric::Manhattan),
            "gower" => Ok(Metric::Gower),
            _ => Err(Error::InvalidArguments(format!(
                "unknown metric {s:?} (expected jaccard, manhattan or gower)"
            ))),
        }
    }
}

fn check_len(a: &BitVector, b: &BitVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Asymmetric binary dissimilarity: mismatches over positions where at least
/// one side is set. Two all-zero vectors are at distance 0.
pub fn jaccard(a: &BitVector, b: &BitVector) -> Result<f64> {
    check_len(a, b)?;
    Ok(jaccard_unchecked(a, b).0)
}

/// Number of mismatching positions.
pub fn manhattan(a: &BitVector, b: &BitVector) -> Result<f64> {
    check_len(a, b)?;
    Ok(manhattan_unchecked(a, b))
}

/// Gower dissimilarity over mixed features. Binary features use Jaccard-style
/// weighting (shared absences carry no weight); continuous features contribute
/// `|a - b| / (max - min)`, or nothing when the range is empty. Returns 0 when
/// no feature carries weight.
pub fn gower(a: &Record, b: &Record, ranges: &[(f64, f64)]) -> Result<f64> {
    if a.binary.len() != b.binary.len()
        || a.continuous.len() != b.continuous.len()
        || ranges.len() != a.continuous.len()
    {
        return Err(Error::SchemaMismatch {
            expected: format!(
                "{} binary / {} continuous features with {} ranges",
                a.binary.len(),
                a.continuous.len(),
                a.continuous.len()
            ),
            found: format!(
                "{} binary / {} continuous features with {} ranges",
                b.binary.len(),
                b.continuous.len(),
                ranges.len()
            ),
        });
    }
    Ok(gower_unchecked(a, b, ranges).0)
}

#[inline]
fn jaccard_unchecked(a: &BitVector, b: &BitVector) -> (f64, bool) {
    let (m11, m10, m01) = a.match_counts(b);
    let union = m11 + m10 + m01;
    if union == 0 {
        (0.0, true)
    } else {
        ((m10 + m01) as f64 / union as f64, false)
    }
}

#[inline]
fn manhattan_unchecked(a: &BitVector, b: &BitVector) -> f64 {
    let (_, m10, m01) = a.match_counts(b);
    (m10 + m01) as f64
}

#[inline]
fn gower_unchecked(a: &Record, b: &Record, ranges: &[(f64, f64)]) -> (f64, bool) {
    let (m11, m10, m01) = a.binary.match_counts(&b.binary);
    let mut score = (m10 + m01) as f64;
    let mut weight = (m11 + m10 + m01) as f64;
    for ((&x, &y), &(lo, hi)) in a.continuous.iter().zip(&b.continuous).zip(ranges) {
        let span = hi - lo;
        if span > 0.0 {
            score += (x - y).abs() / span;
            weight += 1.0;
        }
    }
    if weight == 0.0 {
        (0.0, true)
    } else {
        (score / weight, false)
    }
}

/// Distance between two cohort records; the flag marks zero-weight pairs.
#[inline]
fn pair(metric: Metric, a: &Record, b: &Record, ranges: &[(f64, f64)]) -> (f64, bool) {
    match metric {
        Metric::Jaccard => jaccard_unchecked(&a.binary, &b.binary),
        Metric::Manhattan => (manhattan_unchecked(&a.binary, &b.binary), false),
        Metric::Gower => gower_unchecked(a, b, ranges),
    }
}

#[derive(Debug, Clone)]
enum Storage {
    /// Row-major `n * n` values.
    Dense(Vec<f64>),
    OnTheFly(Box<Cohort>),
}

/// Symmetric matrix of pairwise distances with zero diagonal, indexed in
/// cohort record order.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    metric: Metric,
    storage: Storage,
    degenerate_pairs: usize,
}

pub fn distance_matrix(cohort: &Cohort, metric: Metric) -> Result<DistanceMatrix> {
    DistanceMatrix::build(cohort, metric, Execution::default())
}

impl DistanceMatrix {
    pub fn build(cohort: &Cohort, metric: Metric, exec: Execution) -> Result<Self> {
        if cohort.len() > DENSE_LIMIT {
            Self::on_the_fly(cohort, metric, exec)
        } else {
            Self::dense(cohort, metric, exec)
        }
    }

    /// Materializes every entry. Rows of the upper triangle are computed
    /// independently and mirrored, so the result does not depend on `exec`.
    pub fn dense(cohort: &Cohort, metric: Metric, exec: Execution) -> Result<Self> {
        metric.check_compatible(cohort)?;
        let n = cohort.len();
        let records = cohort.records();
        let ranges = cohort.continuous_ranges();
        let upper: Vec<(Vec<f64>, usize)> = exec.map_range(n, |i| {
            let mut degenerate = 0;
            let row = records[i + 1..]
                .iter()
                .map(|b| {
                    let (d, deg) = pair(metric, &records[i], b, ranges);
                    degenerate += deg as usize;
                    d
                })
                .collect();
            (row, degenerate)
        });

        let mut values = vec![0.0; n * n];
        let mut degenerate_pairs = 0;
        for (i, (row, deg)) in upper.into_iter().enumerate() {
            degenerate_pairs += deg;
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(Self {
            ids: cohort.records().iter().map(|r| r.id.clone()).collect(),
            metric,
            storage: Storage::Dense(values),
            degenerate_pairs,
        })
    }

    /// Keeps a copy of the cohort and computes rows on request.
    pub fn on_the_fly(cohort: &Cohort, metric: Metric, exec: Execution) -> Result<Self> {
        metric.check_compatible(cohort)?;
        let records = cohort.records();
        let ranges = cohort.continuous_ranges();
        let degenerate_pairs = exec
            .map_range(records.len(), |i| {
                records[i + 1..]
                    .iter()
                    .filter(|b| pair(metric, &records[i], b, ranges).1)
                    .count()
            })
            .into_iter()
            .sum();
        Ok(Self {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            metric,
            storage: Storage::OnTheFly(Box::new(cohort.clone())),
            degenerate_pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Number of unordered record pairs whose distance fell back to the
    /// zero-weight convention (no shared or mismatching feature).
    pub fn degenerate_pairs(&self) -> usize {
        self.degenerate_pairs
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v[i * self.len() + j],
            Storage::OnTheFly(c) => {
                if i == j {
                    0.0
                } else {
                    let r = c.records();
                    pair(self.metric, &r[i], &r[j], c.continuous_ranges()).0
                }
            }
        }
    }

    pub fn row(&self, i: usize) -> Cow<'_, [f64]> {
        let n = self.len();
        match &self.storage {
            Storage::Dense(v) => Cow::Borrowed(&v[i * n..(i + 1) * n]),
            Storage::OnTheFly(_) => Cow::Owned((0..n).map(|j| self.get(i, j)).collect()),
        }
    }

    /// Whether this matrix was built over `cohort`'s records, in order.
    pub fn covers(&self, cohort: &Cohort) -> bool {
        self.len() == cohort.len() && self.ids.iter().zip(cohort.records()).all(|(a, r)| *a == r.id)
    }

    /// Diagnostic CSV export: record ids as row and column headers, 17
    /// significant digits per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        write!(w, "id")?;
        for id in &self.ids {
            write!(w, ",{id}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{}", self.ids[i])?;
            for d in self.row(i).iter() {
                write!(w, ",{}", sig17(*d))?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{FeatureSchema, Label};
    use proptest::prelude::*;

    fn bv(bits: &[u8]) -> BitVector {
        bits.iter().map(|&b| b == 1).collect()
    }

    fn rec(bits: &[u8], cont: &[f64]) -> Record {
        Record::new("r", bv(bits), cont.to_vec(), Label::Unknown)
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&bv(&[1, 0, 1]), &bv(&[1, 0, 1])).unwrap(), 0.0);
        assert_eq!(jaccard(&bv(&[1, 0, 1]), &bv(&[1, 1, 0])).unwrap(), 2.0 / 3.0);
        assert_eq!(jaccard(&bv(&[0, 0, 0]), &bv(&[0, 0, 0])).unwrap(), 0.0);
        assert!(matches!(
            jaccard(&bv(&[1]), &bv(&[1, 0])),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn manhattan_examples() {
        assert_eq!(manhattan(&bv(&[1, 0, 1]), &bv(&[1, 0, 1])).unwrap(), 0.0);
        assert_eq!(manhattan(&bv(&[1, 0, 1]), &bv(&[1, 1, 0])).unwrap(), 2.0);
        assert_eq!(manhattan(&bv(&[1, 1, 1, 1]), &bv(&[0, 0, 0, 0])).unwrap(), 4.0);
        assert!(manhattan(&bv(&[1, 0]), &bv(&[1])).is_err());
    }

    #[test]
    fn gower_examples() {
        let a = rec(&[1], &[60.0]);
        let b = rec(&[1], &[85.0]);
        assert_eq!(gower(&a, &b, &[(35.0, 85.0)]).unwrap(), 0.25);
        assert_eq!(gower(&a, &a, &[(35.0, 85.0)]).unwrap(), 0.0);
        assert_eq!(gower(&rec(&[0, 1], &[]), &rec(&[0, 0], &[]), &[]).unwrap(), 1.0);
        // zero-range continuous feature carries no weight
        assert_eq!(
            gower(&rec(&[0], &[5.0]), &rec(&[0], &[5.0]), &[(5.0, 5.0)]).unwrap(),
            0.0
        );
        assert!(matches!(
            gower(&rec(&[0], &[5.0]), &rec(&[0, 1], &[5.0]), &[(0.0, 9.0)]),
            Err(Error::SchemaMismatch { .. })
        ));
    }

    fn binary_cohort(rows: &[&[u8]]) -> Cohort {
        let names: Vec<String> = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
        let schema = FeatureSchema::new("id", "label", names, vec![]).unwrap();
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Record::new(format!("r{i}"), bv(r), vec![], Label::Neg))
            .collect();
        Cohort::new(schema, records).unwrap()
    }

    #[test]
    fn matrix_matches_double_loop() {
        let rows: [&[u8]; 3] = [&[1, 0, 1, 1], &[0, 0, 0, 0], &[1, 1, 0, 0]];
        let c = binary_cohort(&rows);
        let m = distance_matrix(&c, Metric::Manhattan).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = rows[i].iter().zip(rows[j]).filter(|(a, b)| a != b).count() as f64;
                assert_eq!(m.get(i, j), expected);
            }
        }
        let j = distance_matrix(&c, Metric::Jaccard).unwrap();
        assert_eq!(j.degenerate_pairs(), 0);
        let c2 = binary_cohort(&[&[0, 0], &[0, 0], &[1, 0]]);
        assert_eq!(distance_matrix(&c2, Metric::Jaccard).unwrap().degenerate_pairs(), 1);
    }

    #[test]
    fn single_record_and_incompatible_metric() {
        let c = binary_cohort(&[&[1, 0]]);
        let m = distance_matrix(&c, Metric::Jaccard).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.get(0, 0), 0.0);

        let schema = FeatureSchema::new("id", "label", vec!["a".into()], vec!["age".into()]).unwrap();
        let c = Cohort::new(schema, vec![Record::new("x", bv(&[1]), vec![50.0], Label::Pos)]).unwrap();
        assert!(matches!(
            distance_matrix(&c, Metric::Jaccard),
            Err(Error::IncompatibleMetric { continuous: 1, .. })
        ));
        assert!(distance_matrix(&c, Metric::Gower).is_ok());
    }

    #[test]
    fn lazy_storage_agrees_with_dense() {
        let c = binary_cohort(&[&[1, 0, 1], &[0, 0, 0], &[1, 1, 0], &[0, 1, 1]]);
        let d = DistanceMatrix::dense(&c, Metric::Jaccard, Execution::Sequential).unwrap();
        let l = DistanceMatrix::on_the_fly(&c, Metric::Jaccard, Execution::Parallel).unwrap();
        assert!(!l.is_dense());
        for i in 0..4 {
            assert_eq!(d.row(i), l.row(i));
        }
        assert_eq!(d.degenerate_pairs(), l.degenerate_pairs());
    }

    #[test]
    fn csv_export() {
        let c = binary_cohort(&[&[1, 0, 1], &[1, 1, 0]]);
        let m = distance_matrix(&c, Metric::Jaccard).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "id,r0,r1\nr0,0,0.66666666666666663\nr1,0.66666666666666663,0\n"
        );
    }

    fn bits_strategy(len: usize) -> impl Strategy<Value = BitVector> {
        proptest::collection::vec(any::<bool>(), len).prop_map(|v| BitVector::from_bools(&v))
    }

    proptest! {
        #[test]
        fn metric_axioms(len in 0usize..140, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: BitVector = (0..len).map(|_| rng.random_bool(0.3)).collect();
            let b: BitVector = (0..len).map(|_| rng.random_bool(0.3)).collect();
            for f in [jaccard, manhattan] {
                let ab = f(&a, &b).unwrap();
                prop_assert_eq!(ab, f(&b, &a).unwrap());
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(f(&a, &a).unwrap(), 0.0);
            }
            let j = jaccard(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&j));
        }

        #[test]
        fn gower_reduces_to_jaccard_on_binary(a in bits_strategy(70), b in bits_strategy(70)) {
            let (m11, m10, m01) = a.match_counts(&b);
            prop_assume!(m11 + m10 + m01 > 0);
            let ra = Record::new("a", a.clone(), vec![], Label::Pos);
            let rb = Record::new("b", b.clone(), vec![], Label::Pos);
            prop_assert_eq!(gower(&ra, &rb, &[]).unwrap(), jaccard(&a, &b).unwrap());
        }

        #[test]
        fn manhattan_is_scaled_simple_matching(a in bits_strategy(97), b in bits_strategy(97)) {
            let matches = a.iter().zip(b.iter()).filter(|(x, y)| x == y).count();
            let smd = 1.0 - matches as f64 / 97.0;
            let m = manhattan(&a, &b).unwrap();
            prop_assert!((m - 97.0 * smd).abs() < 1e-9);
        }

        #[test]
        fn gower_bounded_and_symmetric(
            a in bits_strategy(12), b in bits_strategy(12),
            x in proptest::collection::vec(0.0f64..100.0, 3),
            y in proptest::collection::vec(0.0f64..100.0, 3),
        ) {
            let ranges: Vec<(f64, f64)> = x.iter().zip(&y).map(|(p, q)| (p.min(*q), p.max(*q))).collect();
            let ra = Record::new("a", a, x, Label::Pos);
            let rb = Record::new("b", b, y, Label::Pos);
            let d = gower(&ra, &rb, &ranges).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, gower(&rb, &ra, &ranges).unwrap());
            prop_assert_eq!(gower(&ra, &ra, &ranges).unwrap(), 0.0);
        }
    }
}
