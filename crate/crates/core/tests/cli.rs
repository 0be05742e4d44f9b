use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dynspanner::harness::{read_ops_csv, CSV_SCHEMA};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynspanner"))
}

fn run(cmd: &mut Command) -> (i32, Output) {
    let out = cmd.output().expect("binary runs");
    (out.status.code().expect("exit code"), out)
}

const DESK: &str = r#"{"dim": 2, "eps": 0.5, "R": 2.0, "mode": "practical",
  "overrides": {"c": 1.05, "k": 8, "lambda": 8.0, "epsPrime": 0.1}}"#;

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        let d = Dir(tempfile::tempdir().unwrap());
        d.write("desk.json", DESK);
        d
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }
}

fn run_trace(d: &Dir, trace: &Path, prefix: &str) -> i32 {
    run(bin()
        .arg("run")
        .arg("--trace")
        .arg(trace)
        .arg("--config")
        .arg(d.path("desk.json"))
        .arg("--out")
        .arg(d.path(prefix)))
    .0
}

#[test]
fn empty_trace_writes_a_header_only_csv() {
    let d = Dir::new();
    let t = d.write("empty.trace", "dim 2\n");
    assert_eq!(run_trace(&d, &t, "empty"), 0);
    let csv = d.read("empty.ops.csv");
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(csv.lines().next(), Some(CSV_SCHEMA));
}

#[test]
fn two_inserts_add_one_light_edge() {
    let d = Dir::new();
    let t = d.write("two.trace", "dim 2\n+ 0 0\n+ 10 0\n");
    assert_eq!(run_trace(&d, &t, "two"), 0);
    let summary: serde_json::Value = serde_json::from_str(&d.read("two.summary.json")).unwrap();
    assert_eq!(summary["final_light_edges"], 1);
    let csv = d.read("two.ops.csv");
    let last = csv.lines().last().unwrap();
    // cum_light_edge_events is the tenth column.
    assert_eq!(last.split(',').nth(9), Some("1"));
}

#[test]
fn corrupted_trace_is_an_input_error() {
    let d = Dir::new();
    let t = d.write("bad.trace", "dim 2\n+ 0 zero\n");
    assert_eq!(run_trace(&d, &t, "bad"), 1);
    let t = d.write("wrongdim.trace", "dim 3\n+ 0 0 0\n");
    assert_eq!(run_trace(&d, &t, "wrongdim"), 1);
}

#[test]
fn gen_is_deterministic_and_rejects_unknown_generators() {
    let d = Dir::new();
    for name in ["a.trace", "b.trace"] {
        let (code, _) = run(bin()
            .args(["gen", "churn", "--seed", "9", "--out"])
            .arg(d.path(name))
            .args(["n_base=20", "n_ops=30", "placement=expclusters", "log2_span=12"]));
        assert_eq!(code, 0);
    }
    assert_eq!(d.read("a.trace"), d.read("b.trace"));
    assert!(d.read("a.trace").starts_with("# gen churn seed=9"));
    let (code, _) = run(bin().args(["gen", "spiral", "--out"]).arg(d.path("c.trace")));
    assert_eq!(code, 1);
    let (code, _) = run(bin()
        .args(["gen", "uniform", "--out"])
        .arg(d.path("c.trace"))
        .arg("n=ten"));
    assert_eq!(code, 1);
}

#[test]
fn verify_accepts_clean_input_and_flags_a_broken_state() {
    let d = Dir::new();
    let t = d.path("clean.trace");
    let (code, _) = run(bin()
        .args(["gen", "uniform", "--seed", "2", "--out"])
        .arg(&t)
        .arg("n=20"));
    assert_eq!(code, 0);
    let (code, out) = run(bin().arg("verify").arg(&t).arg("--config").arg(d.path("desk.json")));
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n"], 20);

    let state = "state v1\ndim 2\npoint 0 0 0\npoint 1 10 0\n\
                 cluster 0 5 parent=none\ncluster 0 4 parent=0@5\n\
                 cluster 1 3 parent=0@4\nbucket 7 0 1 10\n";
    let s = d.write("ok.state", state);
    let (code, out) = run(bin().arg("verify").arg(&s).arg("--config").arg(d.path("desk.json")));
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&out.stderr));
    // Same hierarchy with the second center moved next to the first.
    let s = d.write("broken.state", &state.replace("point 1 10 0", "point 1 0.5 0"));
    let (code, _) = run(bin().arg("verify").arg(&s).arg("--config").arg(d.path("desk.json")));
    assert_eq!(code, 2);
    let (code, _) = run(bin()
        .arg("verify")
        .arg(d.path("missing"))
        .arg("--config")
        .arg(d.path("desk.json")));
    assert_eq!(code, 1);
}

#[test]
fn report_aggregates_runs_and_rejects_foreign_csv() {
    let d = Dir::new();
    for (name, n) in [("r1", 30), ("r2", 60)] {
        let t = d.path(&format!("{name}.trace"));
        let (code, _) = run(bin()
            .args(["gen", "uniform", "--seed", "1", "--out"])
            .arg(&t)
            .arg(format!("n={n}")));
        assert_eq!(code, 0);
        run_trace(&d, &t, name);
        assert_eq!(read_ops_csv(&d.read(&format!("{name}.ops.csv"))).unwrap().n, n);
    }
    let (code, out) = run(bin().arg("report").arg(d.path("r1.ops.csv")).arg(d.path("r2.ops.csv")));
    assert_eq!(code, 0);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("n,runs,amortized_ins"));
    assert!(table.contains("\n30,1,") && table.contains("\n60,1,"));
    assert!(table.contains("# fit amortized_ins"));
    let bad = d.write("bad.csv", "schema=0\n");
    let (code, _) = run(bin().arg("report").arg(bad));
    assert_eq!(code, 1);
}
