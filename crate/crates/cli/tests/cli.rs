use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(format!("{name}.bpop"))
}

fn bpop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpop")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(name: &str) -> String {
    corpus(name).to_string_lossy().into_owned()
}

#[test]
fn solve_prints_the_global_verdict() {
    let o = bpop(&["solve", &path("ex34_locmin")]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("F_min 0.2000 [global]"), "{s}");
    assert!(s.contains("x=(1.9000) y=(0.2000)"), "{s}");
}

#[test]
fn solve_json_is_stable_across_runs() {
    let a = bpop(&["solve", &path("ex34_locmin"), "--json"]);
    let b = bpop(&["solve", &path("ex34_locmin"), "--json", "--threads", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["problem"], "ex34_locmin");
    assert_eq!(v["verdict"], "global");
    assert!(v["branches"][0].get("seconds").is_none());
    let t: Value = serde_json::from_slice(&bpop(&["solve", &path("ex34_locmin"), "--json", "--timings"]).stdout).unwrap();
    assert!(t["branches"][0]["seconds"].is_number());
}

#[test]
fn branch_prints_the_cut_loop() {
    let o = bpop(&["branch", &path("ex67"), "--J", "1,3,5,6"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("(y1, y2, 3, 0)"), "{s}");
    assert!(s.contains("status solved value -7.5279"), "{s}");
}

#[test]
fn plme_for_one_support() {
    let o = bpop(&["plme", &path("ex22"), "--J", "2,3"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("J={2,3}"), "{s}");
    assert!(s.contains("0.1111111111111111*x1, 0.1111111111111111*x1"), "{s}");
    let all: Value = serde_json::from_slice(&bpop(&["plme", &path("ex22"), "--json"]).stdout).unwrap();
    assert_eq!(all["t"], 2);
    assert_eq!(all["plme"].as_array().unwrap().len(), 6);
}

#[test]
fn linear_extension_from_the_command_line() {
    let o = bpop(&["fe", &path("bf2"), "--x", "1,1", "--y", "3.5,4", "--z", "0,4", "--method", "linear"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("q1 = 0\n") && s.contains("q2 = y2\n"), "{s}");
    assert!(s.contains("check passed"), "{s}");
}

#[test]
fn local_checks() {
    let good = stdout(&bpop(&["check-local", &path("ex34_locmin"), "--point", "0.75,0.75"]));
    assert!(good.trim_end().ends_with("certified local"), "{good}");
    let bad = stdout(&bpop(&["check-local", &path("ex34_locmin"), "--point", "1.5,1"]));
    assert!(bad.trim_end().ends_with("not certified"), "{bad}");
    let off = stdout(&bpop(&["check-local", &path("ex34_locmin"), "--point", "1.5,0"]));
    assert!(off.trim_end().ends_with("infeasible point") || off.trim_end().ends_with("not bilevel feasible"), "{off}");
}

#[test]
fn errors_exit_with_one() {
    let o = bpop(&["solve", "missing.bpop"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.bpop"));
    assert_eq!(bpop(&["branch", &path("ex22"), "--J", "1"]).status.code(), Some(1));
    assert_eq!(bpop(&["solve", &path("ex22"), "--rho", "0"]).status.code(), Some(1));
    assert_eq!(bpop(&["fe", &path("bf2"), "--x", "1", "--y", "1,1", "--z", "1,1"]).status.code(), Some(1));
}

#[test]
fn directory_solve_filters_by_suite() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["ex34_locmin", "bf2"] {
        std::fs::copy(corpus(name), dir.path().join(format!("{name}.bpop"))).unwrap();
    }
    std::fs::write(dir.path().join("bf2.expected.json"), r#"{"suite": "extended"}"#).unwrap();
    let d = dir.path().to_string_lossy().into_owned();
    let core = stdout(&bpop(&["solve", &d]));
    assert!(core.contains("problem ex34_locmin") && !core.contains("problem bf2"), "{core}");
    let all = bpop(&["solve", &d, "--suite", "extended", "--json"]);
    assert_eq!(all.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&all.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|d| d["problem"].as_str().unwrap()).collect();
    assert_eq!(names, ["bf2", "ex34_locmin"]);
}
