use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn fill(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = fill_cli::run_with(std::iter::once("fill").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic cohort in `dir/data`.
fn synth(dir: &Path, seed: &str) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    let r = fill(&[
        "synth",
        "--seed",
        seed,
        "--n-labeled",
        "120",
        "--n-unlabeled",
        "40",
        "--out",
        s(&data),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    (data.join("cohort.csv"), data.join("schema.txt"))
}

fn toml_file(path: &Path) -> toml::Table {
    fs::read_to_string(path).unwrap().parse().unwrap()
}

#[test]
fn synth_writes_cohort_schema_and_truth() {
    let dir = TempDir::new().unwrap();
    let (input, schema) = synth(dir.path(), "3");
    let csv = fs::read_to_string(&input).unwrap();
    assert!(csv.starts_with("id,label,A1,"));
    assert_eq!(csv.lines().count(), 161);
    assert_eq!(
        csv.lines().filter(|l| l.split(',').nth(1) == Some("UNKNOWN")).count(),
        40
    );
    assert!(fs::read_to_string(schema).unwrap().contains("binary = A1,"));
    let truth = fs::read_to_string(dir.path().join("data/truth.csv")).unwrap();
    assert!(truth.starts_with("record_id,label,phenotype\n"));
    assert!(truth.lines().skip(1).all(|l| !l.contains("UNKNOWN")));

    let again = TempDir::new().unwrap();
    synth(again.path(), "3");
    for f in ["cohort.csv", "schema.txt", "truth.csv"] {
        assert_eq!(
            fs::read(dir.path().join("data").join(f)).unwrap(),
            fs::read(again.path().join("data").join(f)).unwrap()
        );
    }
}

#[test]
fn tune_then_impute() {
    let dir = TempDir::new().unwrap();
    let (input, schema) = synth(dir.path(), "5");
    let out = dir.path().join("out");
    let base = ["--input", s(&input), "--schema", s(&schema), "--out", s(&out)];
    let r = fill(&[&["tune", "--criterion", "b", "--min-precision", "0.8"][..], &base].concat());
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("winner under"));
    let report = toml_file(&out.join("tune_report.toml"));
    let grid = fs::read_to_string(out.join("tune_grid.csv")).unwrap();
    assert!(grid.lines().count() > 10);
    assert!(fs::read_to_string(out.join("frontier.csv"))
        .unwrap()
        .starts_with("min_precision,feasible,S,T,"));
    assert!(report.contains_key("winner"), "{report:?}");

    let r = fill(&[&["impute", "--radius", "0.5", "--pvalue", "0.05"][..], &base].concat());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let calls = fs::read_to_string(out.join("imputation.csv")).unwrap();
    assert_eq!(calls.lines().count(), 41);
    let summary = toml_file(&out.join("impute_summary.toml"));
    assert_eq!(summary["candidates"].as_integer(), Some(40));
    assert_eq!(summary["records"].as_integer(), Some(160));

    let r = fill(&[&["loo", "--radius", "0.5", "--pvalue", "0.05"][..], &base].concat());
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(toml_file(&out.join("loo_report.toml")).contains_key("labeled_records"));

    let r = fill(&[&["baseline"][..], &base].concat());
    assert_eq!(r.code, 0, "{}", r.stderr);
    toml_file(&out.join("baseline_report.toml"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (input, schema) = synth(dir.path(), "8");
    let mut outputs = Vec::new();
    for (run, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{run}"));
        let base = [
            "--input",
            s(&input),
            "--schema",
            s(&schema),
            "--threads",
            threads,
            "--out",
            s(&out),
        ];
        assert_eq!(fill(&[&["tune"][..], &base].concat()).code, 0);
        assert_eq!(
            fill(&[&["impute", "--radius", "0.6", "--pvalue", "0.01"][..], &base].concat()).code,
            0
        );
        let mut files: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn config_file_values_and_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let (input, schema) = synth(dir.path(), "2");
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# fixed cell\ninput = \"{}\"\nschema = {}\nout = {}\nradius = 0.3\npvalue = 0.05\n",
            s(&input),
            s(&schema),
            s(&out)
        ),
    )
    .unwrap();
    assert_eq!(fill(&["loo", "--config", s(&cfg)]).code, 0);
    let report = toml_file(&out.join("loo_report.toml"));
    assert_eq!(report["radius"].as_float(), Some(0.3));
    assert_eq!(fill(&["loo", "--config", s(&cfg), "--radius", "0.45"]).code, 0);
    let report = toml_file(&out.join("loo_report.toml"));
    assert_eq!(report["radius"].as_float(), Some(0.45));
    assert_eq!(report["threshold"].as_float(), Some(0.05));

    fs::write(&cfg, "radius = 0.3\ncolour = blue\n").unwrap();
    let r = fill(&["loo", "--config", s(&cfg)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("run.cfg:2"), "{}", r.stderr);
}

#[test]
fn usage_and_input_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let (input, schema) = synth(dir.path(), "1");
    let base = ["--input", s(&input), "--schema", s(&schema), "--out", s(dir.path())];

    let r = fill(&[&["tune", "--t-grid", ""][..], &base].concat());
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("t_grid must not be empty"), "{}", r.stderr);

    assert_eq!(fill(&[&["impute"][..], &base].concat()).code, 1);
    assert_eq!(fill(&[&["tune", "--criterion", "z"][..], &base].concat()).code, 1);
    assert_eq!(fill(&[&["tune", "--features", "A1,nope"][..], &base].concat()).code, 1);
    assert_eq!(fill(&["frobnicate"]).code, 1);
    assert_eq!(fill(&["--help"]).code, 0);

    let bad = dir.path().join("bad.csv");
    let mut csv = fs::read_to_string(&input).unwrap();
    csv = csv.replacen(",NEG,", ",NEG,,", 1);
    fs::write(&bad, csv).unwrap();
    let r = fill(&[
        "tune",
        "--input",
        s(&bad),
        "--schema",
        s(&schema),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("line"), "{}", r.stderr);
}

#[test]
fn no_feasible_cell_exits_2_with_report() {
    let dir = TempDir::new().unwrap();
    let (input, schema) = synth(dir.path(), "4");
    let out = dir.path().join("out");
    let r = fill(&[
        "tune",
        "--input",
        s(&input),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--criterion",
        "a",
        "--min-tp",
        "100000",
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    let report = toml_file(&out.join("tune_report.toml"));
    assert_eq!(report["winner"]["feasible"].as_bool(), Some(false));
    assert!(r.stdout.contains("no grid cell satisfies"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_fill");
    let status = Command::new(bin)
        .args(["tune", "--t-grid", ","])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(1));
    let out = Command::new(bin).arg("--version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn explain_writes_one_volcano_per_record() {
    let dir = TempDir::new().unwrap();
    let (input, schema) = synth(dir.path(), "6");
    let out = dir.path().join("out");
    let ids: Vec<String> = (0..9).map(|i| format!("s{:05}", i * 10)).collect();
    let mut args = vec![
        "explain",
        "--input",
        s(&input),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--radius",
        "0.6",
        "--pvalue",
        "0.05",
    ];
    args.extend(ids.iter().map(String::as_str));
    args.push("s00000");
    args.push("missing");
    let r = fill(&args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stderr.contains("more than once"));
    for id in &ids {
        assert!(out.join(format!("volcano_{id}.csv")).exists(), "{id}");
    }
    let volcanoes = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("volcano_")
        })
        .count();
    assert_eq!(volcanoes, 9);
    let errors = fs::read_to_string(out.join("explain_errors.csv")).unwrap();
    assert!(errors.lines().nth(1).unwrap().starts_with("missing,"));
    assert!(out.join("top_features.csv").exists());

    let r = fill(&[
        "explain",
        "--input",
        s(&input),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--radius",
        "0.6",
        "--pvalue",
        "0.05",
        "missing",
    ]);
    assert_eq!(r.code, 1);
}

#[test]
fn cohort_without_unknowns_imputes_nothing() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    let r = fill(&["synth", "--n-labeled", "60", "--n-unlabeled", "0", "--out", s(&data)]);
    assert_eq!(r.code, 0);
    let r = fill(&[
        "impute",
        "--input",
        s(&data.join("cohort.csv")),
        "--schema",
        s(&data.join("schema.txt")),
        "--out",
        s(dir.path()),
        "--radius",
        "0.5",
        "--pvalue",
        "0.05",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let summary = toml_file(&dir.path().join("impute_summary.toml"));
    assert_eq!(summary["candidates"].as_integer(), Some(0));
    assert_eq!(
        fs::read_to_string(dir.path().join("imputation.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn feature_subset_changes_the_metric_space() {
    let dir = TempDir::new().unwrap();
    let (input, schema) = synth(dir.path(), "9");
    let run = |features: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["loo", "--input", s(&input), "--schema", s(&schema), "--out", s(&out)];
        args.extend(["--radius", "0.3", "--pvalue", "0.05"]);
        if let Some(f) = features {
            args.extend(["--features", f]);
        }
        assert_eq!(fill(&args).code, 0);
        fs::read_to_string(out.join("loo_report.toml")).unwrap()
    };
    let all = run(None, "all");
    let subset = run(Some("A1,A2,A3,A4,B1,B2"), "subset");
    assert_ne!(all, subset);
}
