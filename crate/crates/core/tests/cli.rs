use std::path::Path;
use std::process::Command;

fn rilt(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rilt")).args(args).current_dir(dir).env("RILT_CACHE_DIR", dir.join("cache")).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(rilt(&["law-validate", "--law", "default"], d).0, 0);
    assert_eq!(rilt(&["kernel", "--law", "srw", "--radius", "8"], d).0, 1);
    assert_eq!(rilt(&["couple", "--n", "64", "--delta", "1"], d).0, 1);
    assert_eq!(rilt(&["count", "--n", "64", "--bogus"], d).0, 64);
    assert_eq!(rilt(&["no-such-command"], d).0, 64);
}

#[test]
fn count_prints_the_chain_total() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = rilt(&["count", "--k", "2", "--offsets", "0,0", "--n", "500", "--out", "series.csv"], dir.path());
    assert_eq!(code, 0);
    assert!(out.starts_with("B_2(n) = "), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(csv.lines().count(), 502);
}

#[test]
fn plan_runs_write_a_hashed_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let plan = r#"{"experiment":"coupling-rate","n_grid":[64,256,1024],"replicas":30,"seed":3,"view_step":0.0009765625}"#;
    std::fs::write(d.join("plan.json"), plan).unwrap();
    let (code, out) = rilt(&["invariance", "--config", "plan.json", "--out", "runs"], d);
    assert!(code == 0 || code == 2, "{code}: {out}");
    let runs: Vec<_> = std::fs::read_dir(d.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let run = &runs[0];
    assert!(run.file_name().unwrap().to_str().unwrap().starts_with("coupling-rate-"));
    for f in ["plan.json", "report.json", "replicas.csv", "trend.tsv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let first = std::fs::read(run.join("report.json")).unwrap();
    let (again, _) = rilt(&["invariance", "--config", "plan.json", "--out", "runs"], d);
    assert_eq!(again, code);
    assert_eq!(std::fs::read(run.join("report.json")).unwrap(), first);
    let (shown, _) = rilt(&["report", "--run-dir", run.to_str().unwrap()], d);
    assert_eq!(shown, code);
    assert_eq!(rilt(&["holder", "--config", "plan.json"], d).0, 1);
}
