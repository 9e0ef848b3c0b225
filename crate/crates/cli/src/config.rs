//! Flat `key = value` files: run configs and schema descriptions.
//!
//! One pair per line, `#` starts a comment when it opens the line or follows
//! whitespace, values may be wrapped in double quotes. Keys accept `-` or `_`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fill_core::FeatureSchema;

use crate::CliError;

pub type Pairs = BTreeMap<String, String>;

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

pub fn parse_pairs(text: &str, origin: &str, allowed: &[&str]) -> Result<Pairs, CliError> {
    let mut pairs = Pairs::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw.trim_start_matches('\u{feff}')).trim();
        if line.is_empty() {
            continue;
        }
        let bad = |why: String| CliError::Usage(format!("{origin}:{}: {why}", n + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim().replace('-', "_");
        if !allowed.contains(&key.as_str()) {
            return Err(bad(format!("unknown key {key:?}")));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if pairs.insert(key.clone(), value.to_string()).is_some() {
            return Err(bad(format!("key {key:?} given twice")));
        }
    }
    Ok(pairs)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_pairs(path: &Path, allowed: &[&str]) -> Result<Pairs, CliError> {
    parse_pairs(&read(path)?, &path.display().to_string(), allowed)
}

pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Keys: `id`, `label`, `binary`, `continuous` (comma-separated lists).
pub fn read_schema(path: &Path) -> Result<FeatureSchema, CliError> {
    let pairs = read_pairs(path, &["id", "label", "binary", "continuous"])?;
    let get = |k: &str| pairs.get(k).map(String::as_str);
    FeatureSchema::new(
        get("id").unwrap_or("id"),
        get("label").unwrap_or("label"),
        get("binary").map(split_list).unwrap_or_default(),
        get("continuous").map(split_list).unwrap_or_default(),
    )
    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn schema_text(schema: &FeatureSchema) -> String {
    format!(
        "id = {}\nlabel = {}\nbinary = {}\ncontinuous = {}\n",
        schema.id_column(),
        schema.label_column(),
        schema.binary_names().join(","),
        schema.continuous_names().join(",")
    )
}

/// Settings after merging the config file with command-line flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub features: Option<Vec<String>>,
    pub metric: Option<String>,
    pub criterion: Option<String>,
    pub min_precision: Option<f64>,
    pub min_tp: Option<usize>,
    pub radius: Option<f64>,
    pub pvalue: Option<f64>,
    pub s_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub top: Option<usize>,
    pub preset: Option<String>,
    pub n_labeled: Option<usize>,
    pub n_unlabeled: Option<usize>,
}

pub const CONFIG_KEYS: [&str; 18] = [
    "input",
    "schema",
    "features",
    "metric",
    "criterion",
    "min_precision",
    "min_tp",
    "radius",
    "pvalue",
    "s_grid",
    "t_grid",
    "seed",
    "out",
    "threads",
    "top",
    "preset",
    "n_labeled",
    "n_unlabeled",
];

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let items = split_list(value);
    if items.is_empty() {
        return Err(CliError::Usage(format!("{key} must not be empty")));
    }
    items.iter().map(|v| number(key, v)).collect()
}

impl Settings {
    pub fn from_pairs(pairs: &Pairs) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (key, value) in pairs {
            match key.as_str() {
                "input" => s.input = Some(value.into()),
                "schema" => s.schema = Some(value.into()),
                "features" => s.features = Some(split_list(value)),
                "metric" => s.metric = Some(value.clone()),
                "criterion" => s.criterion = Some(value.clone()),
                "min_precision" => s.min_precision = Some(number(key, value)?),
                "min_tp" => s.min_tp = Some(number(key, value)?),
                "radius" => s.radius = Some(number(key, value)?),
                "pvalue" => s.pvalue = Some(number(key, value)?),
                "s_grid" => s.s_grid = Some(parse_grid(key, value)?),
                "t_grid" => s.t_grid = Some(parse_grid(key, value)?),
                "seed" => s.seed = Some(number(key, value)?),
                "out" => s.out = Some(value.into()),
                "threads" => s.threads = Some(number(key, value)?),
                "top" => s.top = Some(number(key, value)?),
                "preset" => s.preset = Some(value.clone()),
                "n_labeled" => s.n_labeled = Some(number(key, value)?),
                "n_unlabeled" => s.n_unlabeled = Some(number(key, value)?),
                _ => unreachable!("keys are checked while parsing"),
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_pairs(&read_pairs(path, &CONFIG_KEYS)?)
    }

    /// Fields set in `flags` replace those read from the file.
    pub fn overridden_by(self, flags: Settings) -> Settings {
        Settings {
            input: flags.input.or(self.input),
            schema: flags.schema.or(self.schema),
            features: flags.features.or(self.features),
            metric: flags.metric.or(self.metric),
            criterion: flags.criterion.or(self.criterion),
            min_precision: flags.min_precision.or(self.min_precision),
            min_tp: flags.min_tp.or(self.min_tp),
            radius: flags.radius.or(self.radius),
            pvalue: flags.pvalue.or(self.pvalue),
            s_grid: flags.s_grid.or(self.s_grid),
            t_grid: flags.t_grid.or(self.t_grid),
            seed: flags.seed.or(self.seed),
            out: flags.out.or(self.out),
            threads: flags.threads.or(self.threads),
            top: flags.top.or(self.top),
            preset: flags.preset.or(self.preset),
            n_labeled: flags.n_labeled.or(self.n_labeled),
            n_unlabeled: flags.n_unlabeled.or(self.n_unlabeled),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_quotes_and_dashes() {
        let text = "# run\nmin-precision = 0.9  # floor\ninput = \"data/a#b.csv\"\n\nt_grid = 0.01, 0.05\n";
        let s = Settings::from_pairs(&parse_pairs(text, "cfg", &CONFIG_KEYS).unwrap()).unwrap();
        assert_eq!(s.min_precision, Some(0.9));
        assert_eq!(s.input, Some(PathBuf::from("data/a#b.csv")));
        assert_eq!(s.t_grid, Some(vec![0.01, 0.05]));
    }

    #[test]
    fn rejects_unknown_duplicate_and_empty_grid() {
        assert!(
            matches!(parse_pairs("colour = red", "cfg", &CONFIG_KEYS), Err(CliError::Usage(m)) if m.contains("cfg:1"))
        );
        assert!(parse_pairs("seed = 1\nseed = 2", "cfg", &CONFIG_KEYS).is_err());
        assert!(parse_pairs("just words", "cfg", &CONFIG_KEYS).is_err());
        let pairs = parse_pairs("t_grid = ", "cfg", &CONFIG_KEYS).unwrap();
        assert!(Settings::from_pairs(&pairs).is_err());
    }

    #[test]
    fn flags_win() {
        let file = Settings {
            seed: Some(1),
            radius: Some(0.5),
            ..Default::default()
        };
        let flags = Settings {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overridden_by(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.radius, Some(0.5));
    }
}
