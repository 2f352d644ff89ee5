use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_intraeff");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_synth_config(dir: &Path, n_symbols: usize, n_days: usize) -> std::path::PathBuf {
    let path = dir.join("synth.toml");
    fs::write(
        &path,
        format!("seed = 3\nn_symbols = {n_symbols}\nn_days = {n_days}\nstart = \"2001-01-01\"\n"),
    )
    .unwrap();
    path
}

#[test]
fn ingest_counts_match_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synth_config(dir.path(), 3, 2);
    let trades = dir.path().join("trades.csv");
    let o = run(&["synth", "--config", p(&cfg), "--store", p(&dir.path().join("gen")), "--trades", p(&trades)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut text = fs::read_to_string(&trades).unwrap();
    let lines = text.lines().count() - 1;
    let store = dir.path().join("bars");
    let o = run(&["ingest", "--store", p(&store), p(&trades)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains(&format!("rows: {lines}")), "{out}");
    assert!(out.contains(&format!("accepted: {lines}")), "{out}");
    assert!(out.contains("malformed: 0"));
    assert!(out.contains("symbol_days_built: 6"), "{out}");

    // the rebuilt bars equal the generated ones
    let a = run(&["bars", "--store", p(&dir.path().join("gen")), "--date", "2001-01-02", "--symbol", "S0001"]);
    let b = run(&["bars", "--store", p(&store), "--date", "2001-01-02", "--symbol", "S0001"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 391);

    text.push_str("garbage\n2001-01-02T10:00:00-05:00,S0001,-4.0,10,S\n2001-01-02T10:00:00-05:00,S0001,12.0,abc,S\n");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, text).unwrap();
    let o = run(&["ingest", "--store", p(&dir.path().join("bars2")), p(&bad)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("malformed: 3"), "{}", stdout(&o));
}

#[test]
fn ingest_of_a_missing_file_fails_without_a_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("bars");
    let o = run(&["ingest", "--store", p(&store), p(&dir.path().join("nope.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("symbol_days_built: 0"));
    assert!(!store.exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["run"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_name_the_key_before_any_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[experiment]\nstart = \"2001-01-01\"\nend = \"2003-03-31\"\n[grid]\nbps = [2, 7x]\n").unwrap();
    let o = run(&["run", "--config", p(&cfg), "--store", p(dir.path()), "--out", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("exp.toml"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn selfcheck_lists_each_check_once_and_passes() {
    let o = run(&["selfcheck"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for name in intraeff::selfcheck::CHECK_NAMES {
        assert_eq!(out.matches(&format!(" {name}:")).count(), 1, "{out}");
    }
    assert!(!out.contains("FAIL"));
}

#[test]
fn random_only_run_writes_every_artifact_and_a_default_split_notice() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("bars");
    let cfg = write_synth_config(dir.path(), 8, 560);
    assert!(run(&["synth", "--config", p(&cfg), "--store", p(&store)]).status.success());
    let exp = dir.path().join("exp.toml");
    fs::write(
        &exp,
        "[experiment]\nstart = \"2001-01-01\"\nend = \"2003-02-28\"\nlearners = [\"random\"]\nseed = 9\n[universe]\nsize = 5\n",
    )
    .unwrap();
    let hft = dir.path().join("hft.csv");
    fs::write(&hft, "month,hft_ratio\n2003-01,0.3\n2003-02,0.35\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--config", p(&exp), "--store", p(&store), "--out", p(&out), "--hft-file", p(&hft)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("notice: no split date configured; using 2008-09-30"));
    for f in [
        "manifest.json",
        "trades_random.csv",
        "daily_returns.csv",
        "cumulative.csv",
        "smoothed.csv",
        "return_hist.csv",
        "precision_hist.csv",
        "split_report.csv",
        "hft_pairs.csv",
        "correlations.csv",
        "models/random/2003-02_up.iemd",
        "models/random/2003-02_down.iemd",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["split_date"], "2008-09-30");
    assert_eq!(manifest["seed"], serde_json::Value::Null);
    assert_eq!(manifest["extra"]["seed"], 9);
    assert_eq!(manifest["learners"]["random"]["months"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["learners"]["random"]["months"][0]["cells"].as_array().unwrap().len(), 12);

    // the report command regenerates identical files from daily_returns.csv
    let before = fs::read(out.join("split_report.csv")).unwrap();
    fs::remove_file(out.join("split_report.csv")).unwrap();
    let o = run(&["report", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(out.join("split_report.csv")).unwrap(), before);

    // a store missing the history is a data error
    let short = dir.path().join("short");
    let cfg = write_synth_config(dir.path(), 8, 40);
    assert!(run(&["synth", "--config", p(&cfg), "--store", p(&short)]).status.success());
    let o = run(&["run", "--config", p(&exp), "--store", p(&short), "--out", p(&dir.path().join("o2"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
