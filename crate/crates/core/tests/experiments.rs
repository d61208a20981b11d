use std::fs;

use rilt::experiments::{criteria_map, run, ExperimentKind, ExperimentPlan, RunContext};
use rilt::Error;

fn small_coupling() -> ExperimentPlan {
    ExperimentPlan { seed: 11, view_step: 1.0 / 1024.0, ..ExperimentPlan::new(ExperimentKind::CouplingRate, vec![64, 256, 1024], 30) }
}

#[test]
fn every_criterion_has_exactly_one_owner() {
    let map = criteria_map();
    let ids: Vec<u8> = map.iter().map(|c| c.criterion).collect();
    assert_eq!(ids, (1..=11).collect::<Vec<u8>>());
    for kind in ExperimentKind::ALL {
        assert!(map.iter().any(|c| c.experiment == kind), "{kind} owns no rule");
    }
}

#[test]
fn acceptance_presets_validate() {
    for kind in ExperimentKind::ALL {
        let plan = ExperimentPlan::acceptance(kind);
        plan.validate().unwrap();
        let back = ExperimentPlan::from_json(&serde_json::to_string(&plan).unwrap()).unwrap();
        assert_eq!(back.config_hash(), plan.config_hash());
    }
}

#[test]
fn invalid_plans_name_the_offending_key() {
    let cases = [
        (r#"{"experiment":"invariance","n_grid":[64],"replicas":10,"tau_grid":[0.2]}"#, "replicas"),
        (r#"{"experiment":"coupling-rate","n_grid":[64],"replicas":40,"delta":0.5}"#, "delta"),
        (r#"{"experiment":"coupling-rate","n_grid":[],"replicas":40}"#, "n_grid"),
        (r#"{"experiment":"invariance","n_grid":[64],"replicas":40}"#, "tau_grid"),
    ];
    for (json, key) in cases {
        let err = ExperimentPlan::from_json(json).and_then(|p| p.validate()).unwrap_err();
        match err {
            Error::Config { key: k, .. } => assert_eq!(k, key, "{json}"),
            other => panic!("{json}: {other}"),
        }
    }
    assert!(ExperimentPlan::from_json(r#"{"experiment":"holder","n_grid":[64],"replicas":40,"bogus":1}"#).is_err());
}

#[test]
fn reports_are_byte_reproducible() {
    let ctx = RunContext::default();
    let a = run(&small_coupling(), &ctx).unwrap();
    let b = run(&small_coupling(), &ctx).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.replicas.to_csv(), b.replicas.to_csv());
    let other = ExperimentPlan { seed: 12, ..small_coupling() };
    assert_ne!(run(&other, &ctx).unwrap().report.report_hash(), a.report.report_hash());
}

#[test]
fn interrupted_runs_resume_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = RunContext { checkpoint_dir: Some(dir.path().to_path_buf()), ..RunContext::default() };
    let plan = small_coupling();
    let full = run(&plan, &ctx).unwrap();
    let ckpt = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().is_some_and(|e| e == "jsonl")).unwrap();
    let text = fs::read_to_string(&ckpt).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 90);
    // keep a third of the replicas and a torn final record
    let mut cut = lines[..30].join("\n");
    cut.push('\n');
    cut.push_str(&lines[30][..lines[30].len() / 2]);
    fs::write(&ckpt, cut).unwrap();
    let resumed = run(&plan, &ctx).unwrap();
    assert_eq!(resumed.report.to_json(), full.report.to_json());
    assert_eq!(fs::read_to_string(&ckpt).unwrap().lines().count(), 90);
    let out = dir.path().join("out");
    resumed.write(&out).unwrap();
    for f in ["report.json", "replicas.csv", "trend.tsv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
