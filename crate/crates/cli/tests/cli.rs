//! End-to-end runs of the `provsketch` binary on the cities data.

use std::path::Path;
use std::process::{Command, Output};

const Q2: &str = "topk(avgden desc, 1, agg([state], avg(popden) as avgden, scan(cities)))";
const Q_POP_STATE_LOW: &str = "select(totden < 7000, agg([state], sum(popden) as totden, scan(cities)))";
const T_REUSE: &str = "select(cnt > $2, agg([state], count(*) as cnt, select(popden > $1, scan(cities))))";

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provsketch")).arg("--data").arg(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let csv = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cities.csv");
    let o = bin(dir.path(), &["load", csv.to_str().unwrap(), "--schema", "popden:int,city:str,state:str"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "loaded cities: 7 rows\n");
    dir
}

#[test]
fn run_prints_result() {
    let d = setup();
    let o = bin(d.path(), &["run", Q2]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "state | avgden\nCA | 5500\n");
}

#[test]
fn capture_on_state_fragments_gives_first_fragment() {
    let d = setup();
    let o = bin(d.path(), &["capture", Q2, "--partition", "cities.state:bounds:'DE','MI','OK'"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("entry 1: cities.state bits 1000 hex 0x8 "), "{}", stdout(&o));
}

#[test]
fn capture_with_equi_depth_boundaries() {
    let d = setup();
    let o = bin(d.path(), &["capture", Q2, "--partition", "cities.state:equi-depth:4"]);
    assert_eq!(o.status.code(), Some(0));
    // Boundaries AK, CA, NY from the data: CA is the second fragment.
    assert!(stdout(&o).starts_with("entry 1: cities.state bits 0100 hex 0x4 "), "{}", stdout(&o));
    let show = stdout(&bin(d.path(), &["catalog", "show", "1"]));
    assert!(show.contains("1 f2 ('AK', 'CA']"), "{show}");
}

#[test]
fn unproven_safety_exits_one() {
    let d = setup();
    let o = bin(d.path(), &["check-safe", Q_POP_STATE_LOW, "--attrs", "cities.popden"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "verdict: unknown\n");
    let o = bin(d.path(), &["check-safe", Q2, "--attrs", "cities.state", "--explain"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("verdict: safe\n"));
    assert!(stdout(&o).contains("psi: "));
}

#[test]
fn reuse_verdicts() {
    let d = setup();
    let o = bin(d.path(), &["check-reuse", T_REUSE, "--captured", "100, 10", "--incoming", "100, 15"]);
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), "verdict: reusable\n"));
    let o = bin(d.path(), &["check-reuse", T_REUSE, "--captured", "(100, 15)", "--incoming", "(100, 10)"]);
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(1), "verdict: unknown\n"));
}

#[test]
fn empty_catalog_lists_nothing() {
    let d = setup();
    let o = bin(d.path(), &["catalog", "list"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
    assert!(!d.path().join("catalog.jsonl").exists());
}

#[test]
fn sketch_use_skips_rows_and_counts_uses() {
    let d = setup();
    bin(d.path(), &["capture", Q2, "--partition", "cities.state:bounds:'DE','MI','OK'"]);
    let o = bin(d.path(), &["run", Q2, "--use-sketch", "1", "--show-rewrite"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("select(cities.state <= 'DE', scan(cities))"), "{out}");
    assert!(out.contains("CA | 5500\n"));
    assert!(out.ends_with("scanned cities: 3/7 rows\n"), "{out}");
    let list = stdout(&bin(d.path(), &["catalog", "list"]));
    assert!(list.lines().nth(1).unwrap().contains("\t1\t"), "{list}");
    // A different query of another template is refused.
    let o = bin(d.path(), &["run", Q_POP_STATE_LOW, "--use-sketch", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unsafe_capture_needs_force() {
    let d = setup();
    let part = "cities.popden:bounds:4000";
    let o = bin(d.path(), &["capture", Q2, "--partition", part]);
    assert_eq!(o.status.code(), Some(1));
    let o = bin(d.path(), &["capture", Q2, "--partition", part, "--force"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("bits 01 hex 0x4"), "{}", stdout(&o));
    assert!(stdout(&o).contains("[unsafe]"));
    assert_eq!(bin(d.path(), &["run", Q2, "--use-sketch", "1"]).status.code(), Some(1));
    // Forcing reproduces the wrong answer of the unsafe sketch.
    let o = bin(d.path(), &["run", Q2, "--use-sketch", "1", "--force"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("NY | 7000\n"), "{}", stdout(&o));
}

#[test]
fn drop_compacts_catalog() {
    let d = setup();
    let part = "cities.state:equi-depth:2";
    bin(d.path(), &["capture", Q2, "--partition", part]);
    bin(d.path(), &["capture", Q2, "--partition", part]);
    bin(d.path(), &["run", Q2, "--use-sketch", "2"]);
    let cat = d.path().join("catalog.jsonl");
    assert_eq!(std::fs::read_to_string(&cat).unwrap().lines().count(), 3);
    let o = bin(d.path(), &["catalog", "drop", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&cat).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"use_count\":1"));
    assert_eq!(bin(d.path(), &["catalog", "show", "1"]).status.code(), Some(2));
}

#[test]
fn usage_and_io_errors_exit_two() {
    let d = setup();
    assert_eq!(bin(d.path(), &["bogus"]).status.code(), Some(2));
    assert_eq!(bin(d.path(), &["run", "scan(nowhere)"]).status.code(), Some(2));
    assert_eq!(bin(d.path(), &["capture", Q2, "--partition", "cities.state:zigzag:3"]).status.code(), Some(2));
    let csv = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cities.csv");
    let o = bin(d.path(), &["load", csv.to_str().unwrap(), "--schema", "popden:int,city:str,state:str"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = d.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\nx,3\n").unwrap();
    let o = bin(d.path(), &["load", bad.to_str().unwrap(), "--schema", "a:int,b:int"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.csv:3:"));
}

#[test]
fn simulation_is_deterministic_and_reports_series() {
    let d = setup();
    let spec = d.path().join("w.json");
    std::fs::write(
        &spec,
        format!(
            r#"{{"queries": 20, "seed": 3, "policy": {{"fragments": 4, "verify": true}},
                "templates": [{{"text": "{T_REUSE}", "params": [{{"normal": {{"mean": 4500, "stddev": 300}}}}, {{"fixed": "1"}}]}}]}}"#
        ),
    )
    .unwrap();
    let run = |out: &str, seed: &str| {
        let r = d.path().join(out);
        let o = bin(d.path(), &["--seed", seed, "simulate", "--workload", spec.to_str().unwrap(), "--report", r.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (stdout(&o), std::fs::read_to_string(r).unwrap())
    };
    let (a, ra) = run("a.json", "3");
    let (b, rb) = run("b.json", "3");
    assert_eq!((a, &ra), (b, &rb));
    let report: serde_json::Value = serde_json::from_str(&ra).unwrap();
    assert_eq!(report["cumulative"].as_array().unwrap().len(), 20);
    assert_eq!(report["mismatches"], 0);
    assert_eq!(report["strategy"], "adaptive");
    let o = bin(d.path(), &["simulate", "--workload", spec.to_str().unwrap(), "--policy", "lazy"]);
    assert_eq!(o.status.code(), Some(2));
}
