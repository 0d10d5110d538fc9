use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const EVENTS: &str = "timepoint,variant_id,adopter_id
1,a,u1
1,b,u2
1,a,u3
2,a,u1
2,c,u2
3,c,u1
3,d,u2
3,d,u2
";

fn cultabc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cultabc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cultabc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every data file in `dir`, i.e. everything but the manifest.
fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A small simulated table to feed the analysis commands.
fn small_table(tmp: &TempDir) -> PathBuf {
    let dir = tmp.path().join("sim");
    ok(&[
        "simulate",
        "--population-size",
        "150",
        "--innovation-rate",
        "0.05",
        "--warmup-steps",
        "30",
        "--timepoints",
        "10",
        "--bias=-0.02",
        "--seed",
        "11",
        "--out-dir",
        s(&dir),
    ]);
    dir.join("table.csv")
}

#[test]
fn ingest_estimates_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let events = tmp.path().join("events.csv");
    fs::write(&events, EVENTS).unwrap();
    let out = tmp.path().join("a");
    ok(&["ingest", s(&events), "--out-dir", s(&out)]);

    let params = json(out.join("params.json"));
    assert_eq!(params["population_size"], 2);
    assert!((params["innovation_rate"].as_f64().unwrap() - 5.0 / 12.0).abs() < 1e-12);
    assert_eq!(
        fs::read_to_string(out.join("table.csv")).unwrap(),
        "timepoint,a,b,c,d\n1,2,1,0,0\n2,1,0,1,0\n3,0,0,1,2\n"
    );

    let m = manifest(&out);
    assert_eq!(m["command"], "ingest");
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 1);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 3);
    for o in outputs {
        let bytes = fs::read(out.join(o["path"].as_str().unwrap())).unwrap();
        let digest = sha256_of(&bytes);
        assert_eq!(o["sha256"].as_str().unwrap(), digest);
    }

    let again = tmp.path().join("b");
    ok(&["ingest", s(&events), "--out-dir", s(&again)]);
    assert_eq!(data_files(&out), data_files(&again));
    assert_eq!(fs::read_to_string(&events).unwrap(), EVENTS);
}

fn sha256_of(bytes: &[u8]) -> String {
    // coreutils, so the check does not share code with the tool
    let tmp = tempfile::NamedTempFile::new().unwrap();
    fs::write(tmp.path(), bytes).unwrap();
    let out = Command::new("sha256sum")
        .arg(tmp.path())
        .output()
        .expect("sha256sum available");
    String::from_utf8(out.stdout)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .to_owned()
}

#[test]
fn missing_input_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.csv");
    let out = cultabc(&["ingest", s(&missing), "--out-dir", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn malformed_events_report_line() {
    let tmp = TempDir::new().unwrap();
    let events = tmp.path().join("events.csv");
    fs::write(&events, "timepoint,variant_id,adopter_id\n1,a,u1\nx,b,u2\n").unwrap();
    let out = cultabc(&["ingest", s(&events), "--out-dir", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn zero_tolerance_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let table = small_table(&tmp);
    let out = cultabc(&[
        "infer",
        s(&table),
        "--tolerance",
        "0",
        "--out-dir",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerance"));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(cultabc(&["infer", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn degenerate_profile_exits_one() {
    let tmp = TempDir::new().unwrap();
    let table = tmp.path().join("flat.csv");
    fs::write(&table, "timepoint,a,b\n1,5,1\n2,5,1\n3,5,1\n").unwrap();
    let out = cultabc(&[
        "turnover",
        s(&table),
        "--y-max",
        "2",
        "--out-dir",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate profile"));
}

#[test]
fn manifest_for_another_command_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let table = small_table(&tmp);
    let m = tmp.path().join("sim/manifest.json");
    let out = cultabc(&[
        "infer",
        s(&table),
        "--config",
        s(&m),
        "--out-dir",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{"population_size": 80, "timepoints": 6, "warmup_steps": 10, "seed": 5}"#,
    )
    .unwrap();
    let out = tmp.path().join("o");
    ok(&[
        "simulate",
        "--config",
        s(&config),
        "--timepoints",
        "4",
        "--out-dir",
        s(&out),
    ]);
    let m = manifest(&out);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["population_size"], 80);
    assert_eq!(m["config"]["timepoints"], 4);
    assert_eq!(m["config"]["innovation_rate"], 0.037);
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
}

/// Runs `args` at 1 and 3 workers and replays the first run from its
/// manifest; all three must write the same bytes.
fn assert_reproducible(tmp: &TempDir, name: &str, args: &[&str]) -> PathBuf {
    let one = tmp.path().join(format!("{name}-1"));
    let three = tmp.path().join(format!("{name}-3"));
    let replay = tmp.path().join(format!("{name}-replay"));
    let with = |dir: &Path, extra: &[&str]| {
        let mut v: Vec<String> = args.iter().map(|a| a.to_string()).collect();
        v.extend(extra.iter().map(|a| a.to_string()));
        v.push("--out-dir".into());
        v.push(s(dir).into());
        v
    };
    let run = |v: Vec<String>| ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    run(with(&one, &["--workers", "1"]));
    run(with(&three, &["--workers", "3"]));
    let m = one.join("manifest.json");
    ok(&[args[0], "--config", s(&m), "--out-dir", s(&replay)]);
    let files = data_files(&one);
    assert!(!files.is_empty());
    assert_eq!(files, data_files(&three), "{name}: worker count changed outputs");
    assert_eq!(files, data_files(&replay), "{name}: manifest replay changed outputs");
    let recorded: Vec<String> = manifest(&one)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(recorded.len(), files.len());
    one
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    assert_reproducible(
        &tmp,
        "simulate",
        &[
            "simulate",
            "--population-size",
            "100",
            "--warmup-steps",
            "20",
            "--timepoints",
            "8",
            "--bias",
            "0.05",
            "--seed",
            "3",
        ],
    );
}

#[test]
fn turnover_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let table = small_table(&tmp);
    let dir = assert_reproducible(
        &tmp,
        "turnover",
        &[
            "turnover",
            s(&table),
            "--y-max",
            "10",
            "--neutral-reps",
            "6",
            "--population-size",
            "150",
            "--innovation-rate",
            "0.05",
            "--warmup-steps",
            "30",
        ],
    );
    let ks = json(dir.join("neutral_ks.json"));
    let d = ks["statistic"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&d));
    let csv = fs::read_to_string(dir.join("turnover.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "y,mean_turnover,fitted,neutral_mean_turnover"
    );
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn warmup_is_reproducible_and_decays_without_innovation() {
    let tmp = TempDir::new().unwrap();
    let dir = assert_reproducible(
        &tmp,
        "warmup",
        &[
            "warmup",
            "--population-size",
            "20",
            "--innovation-rate",
            "0",
            "--horizon",
            "400",
            "--iterations",
            "4",
        ],
    );
    let plateau = json(dir.join("plateau.json"));
    assert_eq!(plateau["final_diversity"], 0.0);
}

#[test]
fn infer_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let table = small_table(&tmp);
    let dir = assert_reproducible(
        &tmp,
        "infer",
        &[
            "infer",
            s(&table),
            "--y-max",
            "10",
            "--population-size",
            "150",
            "--innovation-rate",
            "0.05",
            "--warmup-steps",
            "30",
            "--iterations",
            "400",
            "--tolerance",
            "0.05",
            "--gof",
            "100",
            "--cv",
            "20",
        ],
    );
    let post = json(dir.join("posterior.json"));
    assert_eq!(post["n_accepted"], 20);
    let median = post["median"].as_f64().unwrap();
    assert!((-0.2..=0.2).contains(&median));
    assert!(post["hdpi_low"].as_f64().unwrap() <= post["hdpi_high"].as_f64().unwrap());
    assert_eq!(
        fs::read_to_string(dir.join("accepted.csv")).unwrap().lines().count(),
        21
    );
    assert_eq!(
        fs::read_to_string(dir.join("reference.csv")).unwrap().lines().count(),
        401
    );
    assert_eq!(fs::read_to_string(dir.join("cv.csv")).unwrap().lines().count(), 4);
    let p = json(dir.join("gof.json"))["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn choose_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let table = small_table(&tmp);
    let dir = assert_reproducible(
        &tmp,
        "choose",
        &[
            "choose",
            s(&table),
            "--y-max",
            "10",
            "--population-size",
            "150",
            "--innovation-rate",
            "0.05",
            "--warmup-steps",
            "30",
            "--n-per-model",
            "20",
            "--trees",
            "25",
            "--posterior-trees",
            "10",
        ],
    );
    let result = json(dir.join("result.json"));
    let votes = &result["votes"];
    let total: u64 = ["conformity", "novelty", "neutrality"]
        .iter()
        .map(|k| votes[k].as_u64().unwrap())
        .sum();
    assert_eq!(total, 25);
    assert_eq!(result["n_trees"], 25);
    let schema = json(dir.join("reference_schema.json"));
    // 2 scalars + 10 turn-over sizes + 10 timepoints + 2 LDA axes
    assert_eq!(schema["columns"].as_array().unwrap().len(), 24);
    let lda = fs::read_to_string(dir.join("lda.csv")).unwrap();
    assert_eq!(lda.lines().count(), 1 + 60 + 1);
    assert!(lda.lines().last().unwrap().starts_with("observed,"));
    assert_eq!(
        fs::read_to_string(dir.join("oob_curve.csv")).unwrap().lines().count(),
        26
    );
}
