mod common;

use std::fs;

use common::data_dir;
use pro_benefit::dataset::{load_dataset, read_dataset, write_dataset};
use pro_benefit::report::{assess_files, write_assessment, FULL_POPULATION};

fn toy() -> pro_benefit::report::AssessmentOutput {
    let dir = data_dir();
    assess_files(&dir.join("toy.csv"), &dir.join("toy.toml")).unwrap()
}

#[test]
fn two_factor_subgroups_give_five_populations() {
    let out = toy();
    let labels: Vec<&str> = out.report.populations.iter().map(|p| p.label.as_str()).collect();
    assert_eq!(labels, [FULL_POPULATION, "sex=F", "sex=M", "region=EU", "region=US"]);
    let full = &out.report.populations[0];
    for factor in ["sex", "region"] {
        let parts: Vec<_> = out.report.populations.iter().filter(|p| p.factor.as_deref() == Some(factor)).collect();
        assert_eq!(parts.len(), 2);
        for k in 0..2 {
            assert_eq!(parts.iter().map(|p| p.n[k]).sum::<usize>(), full.n[k], "{factor}");
        }
    }
}

#[test]
fn toy_assessment_has_no_errors_and_excludes_the_unvalidated_scale() {
    let out = toy();
    assert!(out.report.errors.is_empty(), "{:?}", out.report.errors);
    assert!(out.report.extent_summary.iter().all(|r| !r.endpoint_id.starts_with("FATIGUE")));
    assert!(out.report.excluded_from_summary.iter().any(|r| r.endpoint_id.starts_with("FATIGUE")));
}

#[test]
fn summary_numbers_come_from_the_report() {
    let out = toy();
    let summary = out.report.summary();
    let json: serde_json::Value = serde_json::from_str(&out.report.to_json().unwrap()).unwrap();
    let rows = json["extent_summary"].as_array().unwrap();
    assert!(!rows.is_empty());
    for row in rows {
        let id = row["endpoint_id"].as_str().unwrap();
        let line = summary.lines().find(|l| l.trim_start().starts_with(&format!("{id}:"))).expect(id);
        assert!(line.contains(row["extent"].as_str().unwrap()), "{line}");
        for key in ["point", "ci_low", "ci_high"] {
            if let Some(x) = row[key].as_f64() {
                assert!(line.contains(&x.to_string()), "{key} {x} missing from `{line}`");
            }
        }
    }
}

#[test]
fn csv_round_trip_preserves_the_dataset() {
    let dir = data_dir();
    let loaded = load_dataset(&dir.join("toy.csv"), &dir.join("toy.toml")).unwrap();
    let mut buf = Vec::new();
    write_dataset(&loaded.dataset, &mut buf).unwrap();
    let (again, warnings, dropped) = read_dataset(buf.as_slice(), loaded.dataset.design().clone()).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(dropped, 0);
    assert_eq!(again.subjects(), loaded.dataset.subjects());
}

#[test]
fn outputs_are_written() {
    let out = toy();
    let tmp = tempfile::tempdir().unwrap();
    write_assessment(&out, tmp.path()).unwrap();
    for name in ["report.json", "summary.txt", "km.csv", "trajectory_PAIN.csv", "trajectory_QL.csv"] {
        assert!(tmp.path().join(name).is_file(), "{name}");
    }
    let report = fs::read_to_string(tmp.path().join("report.json")).unwrap();
    assert_eq!(report, out.report.to_json().unwrap());
    let traj = fs::read_to_string(tmp.path().join("trajectory_PAIN.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("visit,week,arm,n,estimate,ci_low,ci_high,mode"));
    let km = fs::read_to_string(tmp.path().join("km.csv")).unwrap();
    assert!(km.lines().count() > 1);
}
