#![allow(dead_code)]

use fill_core::{BitVector, Cohort, FeatureSchema, Label, Record};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn schema(n_binary: usize, n_continuous: usize) -> FeatureSchema {
    FeatureSchema::new(
        "id",
        "label",
        (0..n_binary).map(|j| format!("b{j}")).collect(),
        (0..n_continuous).map(|j| format!("c{j}")).collect(),
    )
    .unwrap()
}

/// Random cohort with at least one labeled record. Continuous values come
/// from a handful of levels so that ties and zero ranges occur.
pub fn random_cohort(seed: u64, n: usize, n_binary: usize, n_continuous: usize) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = rng.random_range(0.05..0.6);
    let records = (0..n)
        .map(|i| {
            let bits: BitVector = (0..n_binary).map(|_| rng.random_bool(density)).collect();
            let cont = (0..n_continuous).map(|_| rng.random_range(0..5) as f64 * 1.5).collect();
            let label = match (i, rng.random_range(0..5)) {
                (0, _) => Label::Pos,
                (1, _) => Label::Neg,
                (_, 0 | 1) => Label::Pos,
                (_, 2 | 3) => Label::Neg,
                _ => Label::Unknown,
            };
            Record::new(format!("r{i}"), bits, cont, label)
        })
        .collect();
    Cohort::new(schema(n_binary, n_continuous), records).unwrap()
}
