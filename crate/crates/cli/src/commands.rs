//! Subcommand bodies. Each one computes everything in memory and returns
//! the files to write; the caller writes them once, in order.

use std::collections::HashSet;
use std::path::PathBuf;

use fill_core::baseline::{run_baseline, write_baseline_report, FitOptions};
use fill_core::explain::{explain_record, write_top_table, write_volcano};
use fill_core::fill::{write_imputation, write_imputation_summary};
use fill_core::synth::{synth_cohort, SynthSpec};
use fill_core::tune::{
    default_s_grid, default_t_grid, evaluate_grid, frontier_from_grid, select_winner, write_frontier_csv,
    write_grid_csv, write_grid_report, write_loo_report, DEFAULT_MIN_PRECISION, DEFAULT_MIN_TP, FRONTIER_THRESHOLDS,
};
use fill_core::{
    impute_unknowns, load_cohort, loo_evaluate, write_cohort, Cohort, Criterion, DistanceMatrix, Execution, FillModel,
    Hyperparameters, Metric,
};

use crate::config::{read_schema, schema_text, Settings};
use crate::CliError;

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_N_LABELED: usize = 200;
pub const DEFAULT_N_UNLABELED: usize = 100;

/// Output of a command: files to write plus the exit status to report.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub messages: Vec<String>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
}

impl Outcome {
    fn file(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
    value
        .clone()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

pub fn load(settings: &Settings) -> Result<Cohort, CliError> {
    let input: PathBuf = required(&settings.input, "input")?;
    let schema_path: PathBuf = required(&settings.schema, "schema")?;
    let schema = read_schema(&schema_path)?;
    let cohort = load_cohort(&input, &schema).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    match &settings.features {
        None => Ok(cohort),
        Some(features) => {
            let (mut binary, mut continuous) = (Vec::new(), Vec::new());
            for f in features {
                if schema.binary_names().contains(f) {
                    binary.push(f.clone());
                } else if schema.continuous_names().contains(f) {
                    continuous.push(f.clone());
                } else {
                    return Err(CliError::Usage(format!("feature {f:?} is not in the schema")));
                }
            }
            Ok(cohort.select_features(&binary, &continuous)?)
        }
    }
}

fn metric(settings: &Settings, cohort: &Cohort) -> Result<Metric, CliError> {
    match &settings.metric {
        Some(m) => m.parse().map_err(|e| CliError::Usage(format!("{e}"))),
        None if cohort.schema().n_continuous() > 0 => Ok(Metric::Gower),
        None => Ok(Metric::Jaccard),
    }
}

fn criterion(settings: &Settings) -> Result<Criterion, CliError> {
    match settings.criterion.as_deref().map(str::to_ascii_lowercase).as_deref() {
        Some("a") => Ok(Criterion::MaxPrecision {
            min_tp: settings.min_tp.unwrap_or(DEFAULT_MIN_TP),
        }),
        Some("b") | None => {
            let min_precision = settings.min_precision.unwrap_or(DEFAULT_MIN_PRECISION);
            if !(0.0..=1.0).contains(&min_precision) {
                return Err(CliError::Usage(format!(
                    "--min-precision {min_precision} outside [0, 1]"
                )));
            }
            Ok(Criterion::MaxTruePositives { min_precision })
        }
        Some(other) => Err(CliError::Usage(format!("criterion must be `a` or `b`, got {other:?}"))),
    }
}

fn distances(cohort: &Cohort, metric: Metric, out: &mut Outcome) -> Result<DistanceMatrix, CliError> {
    let d = DistanceMatrix::build(cohort, metric, Execution::default())?;
    if d.degenerate_pairs() > 0 {
        out.warnings.push(format!(
            "{} record pairs share no present feature; their {metric} distance is 0",
            d.degenerate_pairs()
        ));
    }
    Ok(d)
}

fn hyperparameters(settings: &Settings, metric: Metric) -> Result<Hyperparameters, CliError> {
    let radius = required(&settings.radius, "radius")?;
    let threshold = required(&settings.pvalue, "pvalue")?;
    Hyperparameters::new(radius, threshold, metric).map_err(|e| CliError::Usage(e.to_string()))
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> fill_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn tune(settings: &Settings) -> Result<Outcome, CliError> {
    let criterion = criterion(settings)?;
    let cohort = load(settings)?;
    let metric = metric(settings, &cohort)?;
    let mut out = Outcome::default();
    let d = distances(&cohort, metric, &mut out)?;
    let s_grid = match &settings.s_grid {
        Some(g) => g.clone(),
        None => default_s_grid(&cohort, &d)?,
    };
    let t_grid = settings.t_grid.clone().unwrap_or_else(default_t_grid);
    let grid = evaluate_grid(&cohort, &d, &s_grid, &t_grid, Execution::default())?;
    let winner = select_winner(&grid, &criterion);
    let frontier = frontier_from_grid(&grid, &FRONTIER_THRESHOLDS);

    out.file(
        "tune_report.toml",
        render(|b| write_grid_report(b, metric, &criterion, &grid, winner, &frontier))?,
    );
    out.file("tune_grid.csv", render(|b| write_grid_csv(&grid, b))?);
    out.file("frontier.csv", render(|b| write_frontier_csv(&frontier, b))?);
    match winner.map(|i| &grid[i]) {
        Some(c) => out.messages.push(format!(
            "winner under {criterion}: S = {}, T = {}, TP = {}, FP = {}",
            c.radius, c.threshold, c.metrics.true_positives, c.metrics.false_positives
        )),
        None => {
            out.messages.push(format!(
                "no grid cell satisfies {criterion}; report written without a winner"
            ));
            out.exit_code = 2;
        }
    }
    Ok(out)
}

pub fn impute(settings: &Settings) -> Result<Outcome, CliError> {
    let cohort = load(settings)?;
    let metric = metric(settings, &cohort)?;
    let hp = hyperparameters(settings, metric)?;
    let mut out = Outcome::default();
    let d = distances(&cohort, metric, &mut out)?;
    let model = FillModel::fit(&cohort, hp)?;
    let results = impute_unknowns(&cohort, &model, &d)?;
    out.file("imputation.csv", render(|b| write_imputation(&results, b))?);
    out.file(
        "impute_summary.toml",
        render(|b| write_imputation_summary(&cohort, &model, &results, b))?,
    );
    let called = results
        .iter()
        .filter(|r| r.decision == fill_core::Decision::Pos)
        .count();
    out.messages
        .push(format!("{called} of {} UNKNOWN records classified POS", results.len()));
    Ok(out)
}

pub fn loo(settings: &Settings) -> Result<Outcome, CliError> {
    let cohort = load(settings)?;
    let metric = metric(settings, &cohort)?;
    let hp = hyperparameters(settings, metric)?;
    let mut out = Outcome::default();
    let d = distances(&cohort, metric, &mut out)?;
    let m = loo_evaluate(&cohort, &hp, &d)?;
    out.file("loo_report.toml", render(|b| write_loo_report(b, &hp, &m))?);
    out.messages.push(format!(
        "TP = {}, FP = {}, precision = {}",
        m.true_positives,
        m.false_positives,
        m.precision.map_or("NA".to_string(), |p| format!("{p:.4}"))
    ));
    Ok(out)
}

/// Record ids become file name stems; anything outside `[A-Za-z0-9._-]` is
/// replaced by `_`.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn explain(settings: &Settings, ids: &[String]) -> Result<Outcome, CliError> {
    if ids.is_empty() {
        return Err(CliError::Usage("explain needs at least one record id".into()));
    }
    let cohort = load(settings)?;
    let metric = metric(settings, &cohort)?;
    let hp = hyperparameters(settings, metric)?;
    let top = settings.top.unwrap_or(DEFAULT_TOP_K);
    let mut out = Outcome::default();
    let d = distances(&cohort, metric, &mut out)?;
    let model = FillModel::fit(&cohort, hp)?;

    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    for id in ids {
        if seen.insert(id.as_str()) {
            unique.push(id.clone());
        } else {
            out.warnings
                .push(format!("record {id:?} requested more than once; explained once"));
        }
    }
    let results = Execution::default().map_slice(&unique, |id| explain_record(id, &cohort, &model, &d));

    let mut explained = Vec::new();
    let mut errors = String::from("record_id,error\n");
    let mut stems = HashSet::new();
    for (id, result) in unique.iter().zip(results) {
        match result {
            Ok(e) => {
                let mut stem = file_stem(id);
                while !stems.insert(stem.clone()) {
                    stem.push('_');
                }
                out.file(format!("volcano_{stem}.csv"), render(|b| write_volcano(&e, b))?);
                explained.push(e);
            }
            Err(e) => {
                out.warnings.push(format!("{id}: {e}"));
                errors.push_str(&format!("{id},\"{}\"\n", e.to_string().replace('"', "'")));
            }
        }
    }
    out.file("top_features.csv", render(|b| write_top_table(&explained, top, b))?);
    if explained.len() < unique.len() {
        out.file("explain_errors.csv", errors.into_bytes());
    }
    out.messages
        .push(format!("explained {} of {} records", explained.len(), unique.len()));
    if explained.is_empty() {
        out.exit_code = 1;
    }
    Ok(out)
}

pub fn baseline(settings: &Settings) -> Result<Outcome, CliError> {
    let cohort = load(settings)?;
    let report = run_baseline(&cohort, FitOptions::default())?;
    let names: Vec<String> = cohort
        .schema()
        .binary_names()
        .iter()
        .chain(cohort.schema().continuous_names())
        .cloned()
        .collect();
    let mut out = Outcome::default();
    out.file(
        "baseline_report.toml",
        render(|b| write_baseline_report(&report, &names, b))?,
    );
    if !report.model.converged {
        out.warnings.push(format!(
            "logistic fit stopped after {} iterations without converging",
            report.model.iterations
        ));
    }
    out.messages.push(format!(
        "accuracy {:.3} (optimal cutoff {:.3}), c-statistic {:.3}",
        report.default.accuracy, report.optimal.accuracy, report.default.c_statistic
    ));
    Ok(out)
}

pub fn synth(settings: &Settings) -> Result<Outcome, CliError> {
    let seed = settings.seed.unwrap_or(0);
    let n_labeled = settings.n_labeled.unwrap_or(DEFAULT_N_LABELED);
    let n_unlabeled = settings.n_unlabeled.unwrap_or(DEFAULT_N_UNLABELED);
    let spec = match settings.preset.as_deref().unwrap_or("overlapping") {
        "overlapping" => SynthSpec::overlapping(seed, n_labeled, n_unlabeled),
        "separated" => SynthSpec::separated(seed, n_labeled, n_unlabeled),
        other => {
            return Err(CliError::Usage(format!(
                "preset must be `overlapping` or `separated`, got {other:?}"
            )))
        }
    };
    let s = synth_cohort(&spec)?;
    let mut out = Outcome::default();
    out.file("cohort.csv", render(|b| write_cohort(&s.cohort, b))?);
    out.file("schema.txt", schema_text(s.cohort.schema()).into_bytes());
    let mut truth = String::from("record_id,label,phenotype\n");
    for ((r, label), phenotype) in s.cohort.records().iter().zip(&s.true_labels).zip(&s.phenotypes) {
        let p = phenotype.map_or("background".to_string(), |p| p.to_string());
        truth.push_str(&format!("{},{label},{p}\n", r.id));
    }
    out.file("truth.csv", truth.into_bytes());
    out.messages.push(format!(
        "{} records ({n_labeled} labeled, {n_unlabeled} hidden), seed {seed}",
        s.cohort.len()
    ));
    Ok(out)
}
