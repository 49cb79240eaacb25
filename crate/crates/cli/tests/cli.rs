use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tvdar"));
    c.env("RUST_LOG", "warn");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_pipes_into_fit_local() {
    let dir = TempDir::new().unwrap();
    let mut sim = bin()
        .args([
            "simulate",
            "--seed",
            "7",
            "--len",
            "400",
            "--series-out",
            "-",
        ])
        .args(["--out", s(&dir.path().join("sim"))])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let fit = bin()
        .args(["fit-local", "-i", "-", "--grid-points", "21"])
        .args(["--out", s(&dir.path().join("fl"))])
        .stdin(sim.stdout.take().unwrap())
        .output()
        .unwrap();
    assert!(sim.wait().unwrap().success());
    assert_eq!(code(&fit), 0, "{}", stderr(&fit));
    let r = read_json(&dir.path().join("fl/report.json"));
    assert_eq!(r["local_fit"]["n_obs"], 400);
    assert_eq!(r["local_fit"]["points"].as_array().unwrap().len(), 21);
}

#[test]
fn stdin_input_matches_file_input() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = run(&["fit", "-i", s(&fixture("synthetic.csv")), "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut child = bin()
        .args(["fit", "-i", "-", "--out", s(&b)])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(&fs::read(fixture("synthetic.csv")).unwrap())
        .unwrap();
    assert!(child.wait().unwrap().success());
    assert_eq!(
        read_json(&a.join("report.json"))["fit"],
        read_json(&b.join("report.json"))["fit"]
    );
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = s(dir.path());

    let missing = run(&["fit", "-i", "/nonexistent/prices.csv", "--out", out]);
    assert_eq!(code(&missing), 2);

    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "date,close\n2020-01-01,1.0\n2020-01-02,oops\n2020-01-03,1.0\n",
    )
    .unwrap();
    let o = run(&["fit", "-i", s(&bad), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = run(&[
        "stability",
        "-i",
        s(&fixture("synthetic.csv")),
        "--level",
        "1.5",
        "--out",
        out,
    ]);
    assert_eq!(code(&o), 2);

    let o = run(&["fit", "--bogus-flag"]);
    assert_eq!(code(&o), 2);

    let flat = dir.path().join("flat.csv");
    let mut text = String::from("date,close\n");
    for d in 1..=28 {
        text.push_str(&format!("2021-02-{d:02},1.0\n"));
    }
    fs::write(&flat, text).unwrap();
    let o = run(&["fit", "-i", s(&flat), "--demean", "global", "--out", out]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "windoww = 30\n").unwrap();
    let o = run(&[
        "fit",
        "-i",
        s(&fixture("synthetic.csv")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("windoww"));
}

#[test]
fn later_source_wins_on_conflict() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "window = 30\nstarts = 3\n").unwrap();
    let input = fixture("synthetic.csv");

    let after = dir.path().join("after");
    let o = run(&[
        "fit",
        "-i",
        s(&input),
        "--out",
        s(&after),
        "--config",
        s(&cfg),
        "--window",
        "40",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("--window overrides"), "{}", stderr(&o));
    let c = &read_json(&after.join("report.json"))["metadata"]["config"];
    assert_eq!(c["window"], 40);
    assert_eq!(c["starts"], 3);

    let before = dir.path().join("before");
    let o = run(&[
        "fit",
        "-i",
        s(&input),
        "--window",
        "40",
        "--out",
        s(&before),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("`window`"), "{}", stderr(&o));
    assert_eq!(
        read_json(&before.join("report.json"))["metadata"]["config"]["window"],
        30
    );
}

fn strip_volatile(mut v: Value) -> Value {
    let m = v["metadata"].as_object_mut().unwrap();
    m.remove("created");
    m["config"].as_object_mut().unwrap().remove("out");
    v
}

fn assert_rerun_identical(args: &[&str]) {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let mut a: Vec<&str> = args.to_vec();
    a.extend(["--out", s(&first)]);
    let o = run(&a);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = first.join("report.json");
    let o = run(&[args[0], "--config", s(&report), "--out", s(&second)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let mut names: Vec<_> = fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        let x = first.join(&name);
        let y = second.join(&name);
        if name == "report.json" {
            assert_eq!(strip_volatile(read_json(&x)), strip_volatile(read_json(&y)));
        } else {
            assert_eq!(
                fs::read(&x).unwrap(),
                fs::read(&y).unwrap(),
                "{name:?} differs"
            );
        }
    }
}

#[test]
fn rerun_from_report_reproduces_fit_local() {
    assert_rerun_identical(&[
        "fit-local",
        "-i",
        s(&fixture("synthetic.csv")),
        "--grid-points",
        "31",
    ]);
}

#[test]
fn rerun_from_report_reproduces_forecast() {
    assert_rerun_identical(&[
        "forecast",
        "-i",
        s(&fixture("synthetic.csv")),
        "--level",
        "0.9",
    ]);
}

#[test]
fn forecast_tables_carry_events() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "forecast",
        "-i",
        s(&fixture("synthetic.csv")),
        "--events",
        s(&fixture("events.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("forecast.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert!(header.starts_with("date,"));
    assert!(header.ends_with(",event"));
    assert!(table
        .lines()
        .any(|l| l.starts_with("2020-03-12") && l.ends_with("second marker")));
    let r = read_json(&dir.path().join("report.json"));
    // the final record forecasts the day after the sample ends
    let last = r["forecasts"]["records"]
        .as_array()
        .unwrap()
        .last()
        .unwrap()
        .clone();
    assert_eq!(last["date"], "2022-09-23");
    assert!(last["actual"].is_null());
}

#[test]
fn describe_and_tests_write_their_sections() {
    let dir = TempDir::new().unwrap();
    let input = fixture("synthetic.csv");
    for (args, key) in [
        (vec!["describe"], "descriptive"),
        (vec!["test", "whiteness"], "whiteness"),
        (vec!["test", "xi"], "tests"),
        (vec!["test", "homoscedasticity", "--gamma", "0.9,0.7"], "cp"),
    ] {
        let out = dir.path().join(key);
        let mut a = args.clone();
        a.extend(["-i", s(&input), "--out", s(&out)]);
        let o = run(&a);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        let r = read_json(&out.join("report.json"));
        assert!(!r[key].is_null(), "{args:?} lacks {key}");
    }
    let r = read_json(&dir.path().join("cp/report.json"));
    assert_eq!(r["tests"].as_array().unwrap().len(), 2);
}

#[test]
fn small_montecarlo_run() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "montecarlo",
        "--reps",
        "40",
        "--t-values",
        "50,100",
        "--surface",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["montecarlo"]["by_t"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("mc_density.csv").exists());
    assert!(dir.path().join("lyapunov_surface.csv").exists());
}

#[test]
fn simulate_time_varying_path_from_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("tv.toml");
    fs::write(
        &cfg,
        r#"len = 300
seed = 4
[path.phi]
type = "linear"
from = 0.2
to = 0.8
[path.omega]
type = "constant"
value = 0.01
[path.alpha]
type = "constant"
value = 0.3
"#,
    )
    .unwrap();
    let series = dir.path().join("tv.csv");
    let o = run(&[
        "simulate",
        "--config",
        s(&cfg),
        "--series-out",
        s(&series),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&series).unwrap().lines().count(), 301);
}
