//! Seeded synthetic cohorts with known phenotype structure.
//!
//! Each record draws from its own ChaCha8 stream (`seed`, stream = record
//! index), so generation is order-independent and identical across
//! platforms. Positives pick one of several phenotype prevalence profiles;
//! negatives use a single background profile. Labels are flipped with the
//! noise rate, and records past `n_labeled` are then hidden as UNKNOWN.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVector;
use crate::cohort::{valid_name, Cohort, FeatureSchema, Label, Record};
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub feature_names: Vec<String>,
    /// One prevalence per feature for each positive phenotype.
    pub phenotype_profiles: Vec<Vec<f64>>,
    /// Feature prevalences of negatives.
    pub background_profile: Vec<f64>,
    pub positive_fraction: f64,
    pub label_noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub cohort: Cohort,
    /// Labels before hiding, in record order (noise already applied).
    pub true_labels: Vec<Label>,
    /// Generating phenotype of each record; `None` for background draws.
    pub phenotypes: Vec<Option<usize>>,
}

fn block_names(prefix: char, n: usize) -> impl Iterator<Item = String> {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

impl SynthSpec {
    pub fn n_binary_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_phenotypes(&self) -> usize {
        self.phenotype_profiles.len()
    }

    /// Two phenotypes on disjoint 8-feature blocks `A*` and `B*` (prevalence
    /// 0.9 in their own block, 0.1 elsewhere); negatives are dense on their
    /// own block `C*`. No label noise.
    pub fn separated(seed: u64, n_labeled: usize, n_unlabeled: usize) -> Self {
        const BLOCK: usize = 8;
        let names: Vec<String> = block_names('A', BLOCK)
            .chain(block_names('B', BLOCK))
            .chain(block_names('C', BLOCK))
            .collect();
        let profile = |hot: usize| -> Vec<f64> {
            (0..3 * BLOCK)
                .map(|j| if j / BLOCK == hot { 0.9 } else { 0.1 })
                .collect()
        };
        Self {
            n_labeled,
            n_unlabeled,
            feature_names: names,
            phenotype_profiles: vec![profile(0), profile(1)],
            background_profile: profile(2),
            positive_fraction: 0.4,
            label_noise: 0.0,
            seed,
        }
    }

    /// Three overlapping phenotypes: phenotype `i` is dense (0.85) on block
    /// `i` and moderately present (0.3) on the first half of the next block.
    /// Negatives carry every block feature at the pooled positive rate, so
    /// per-feature prevalences barely differ between classes while each
    /// phenotype stays locally concentrated. Six shared noise features and
    /// 3% label noise.
    pub fn overlapping(seed: u64, n_labeled: usize, n_unlabeled: usize) -> Self {
        const BLOCK: usize = 8;
        const BLOCKS: usize = 3;
        const NOISE: usize = 6;
        let names: Vec<String> = block_names('A', BLOCK)
            .chain(block_names('B', BLOCK))
            .chain(block_names('C', BLOCK))
            .chain(block_names('N', NOISE))
            .collect();
        let profile = |hot: usize| -> Vec<f64> {
            (0..BLOCKS * BLOCK + NOISE)
                .map(|j| {
                    let block = j / BLOCK;
                    if j >= BLOCKS * BLOCK {
                        0.2
                    } else if block == hot {
                        0.85
                    } else if block == (hot + 1) % BLOCKS && j % BLOCK < BLOCK / 2 {
                        0.3
                    } else {
                        0.05
                    }
                })
                .collect()
        };
        let phenotypes: Vec<Vec<f64>> = (0..BLOCKS).map(profile).collect();
        let background = (0..BLOCKS * BLOCK + NOISE)
            .map(|j| {
                let mean = phenotypes.iter().map(|p| p[j]).sum::<f64>() / BLOCKS as f64;
                if j >= BLOCKS * BLOCK {
                    0.2
                } else {
                    mean
                }
            })
            .collect();
        Self {
            n_labeled,
            n_unlabeled,
            feature_names: names,
            phenotype_profiles: phenotypes,
            background_profile: background,
            positive_fraction: 0.4,
            label_noise: 0.03,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidSpec(msg));
        let n = self.feature_names.len();
        if self.phenotype_profiles.is_empty() {
            return invalid("at least one phenotype is required".into());
        }
        if let Some(name) = self.feature_names.iter().find(|s| !valid_name(s)) {
            return invalid(format!("feature name {name:?} is not a valid column name"));
        }
        for (i, p) in self
            .phenotype_profiles
            .iter()
            .chain([&self.background_profile])
            .enumerate()
        {
            if p.len() != n {
                return invalid(format!("profile {i} has {} prevalences for {n} features", p.len()));
            }
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return invalid(format!("prevalence {v} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return invalid(format!("positive fraction {} outside [0, 1]", self.positive_fraction));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return invalid(format!("label noise {} outside [0, 0.5)", self.label_noise));
        }
        Ok(())
    }
}

/// Generates the cohort described by `spec`. Record ids are `s00000`,
/// `s00001`, ...; there are no continuous features.
pub fn synth_cohort(spec: &SynthSpec) -> Result<SynthCohort> {
    spec.validate()?;
    let total = spec.n_labeled + spec.n_unlabeled;
    let width = total.saturating_sub(1).to_string().len().max(5);
    let drawn = Execution::default().map_range(total, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let positive = rng.random::<f64>() < spec.positive_fraction;
        let phenotype = rng.random_range(0..spec.n_phenotypes());
        let profile = if positive {
            &spec.phenotype_profiles[phenotype]
        } else {
            &spec.background_profile
        };
        let bits: BitVector = profile.iter().map(|&p| rng.random::<f64>() < p).collect();
        let flipped = rng.random::<f64>() < spec.label_noise;
        let label = if positive != flipped { Label::Pos } else { Label::Neg };
        (bits, label, positive.then_some(phenotype))
    });

    let schema = FeatureSchema::new("id", "label", spec.feature_names.clone(), vec![])?;
    let mut records = Vec::with_capacity(total);
    let mut true_labels = Vec::with_capacity(total);
    let mut phenotypes = Vec::with_capacity(total);
    for (i, (bits, label, phenotype)) in drawn.into_iter().enumerate() {
        let shown = if i < spec.n_labeled { label } else { Label::Unknown };
        records.push(Record::new(format!("s{i:0width$}"), bits, vec![], shown));
        true_labels.push(label);
        phenotypes.push(phenotype);
    }
    Ok(SynthCohort {
        cohort: Cohort::new(schema, records)?,
        true_labels,
        phenotypes,
    })
}
