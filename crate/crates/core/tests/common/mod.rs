#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use pro_benefit::dataset::{
    AnalysisPopulation, Arm, ArmLabels, Direction, Observation, ScaleDomain, ScaleMeta, Severity, StudyDesign,
    Subject, TrialDataset, Visit,
};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn scale(id: &str, min: f64, max: f64) -> ScaleMeta {
    ScaleMeta {
        scale_id: id.into(),
        min,
        max,
        direction: Direction::HigherIsWorse,
        domain: ScaleDomain::Symptom,
        severity: Some(Severity::Serious),
        validated: true,
        prespecified_mid: None,
        mid_prespecified_flag: false,
        scoring: None,
        disease_specific: true,
    }
}

/// Visits labelled `W{week}`; the first is baseline.
pub fn design(weeks: &[f64], scales: Vec<ScaleMeta>) -> StudyDesign {
    StudyDesign {
        arms: ArmLabels { intervention: "DRUG".into(), comparator: "CTRL".into() },
        visits: weeks
            .iter()
            .enumerate()
            .map(|(i, &w)| Visit { label: format!("W{w}"), week: w, baseline: i == 0 })
            .collect(),
        scales,
        subgroup_factors: vec![],
        data_cut_week: None,
        population: AnalysisPopulation::Randomized,
    }
}

pub fn subject(id: &str, arm: Arm, scale_id: &str, scores: &[(f64, Option<f64>)]) -> Subject {
    Subject {
        id: id.into(),
        arm,
        randomized: true,
        treated: true,
        discontinuation_week: None,
        discontinuation_reason: None,
        death_week: None,
        subgroup_values: BTreeMap::new(),
        observations: scores
            .iter()
            .map(|&(w, score)| Observation {
                visit: format!("W{w}"),
                week: w,
                scale_id: scale_id.into(),
                item_values: BTreeMap::new(),
                scale_score: score,
            })
            .collect(),
    }
}

/// Two-visit trial (W0, W12) where the first `missing[k]` subjects of arm k
/// have no score at W12.
pub fn two_visit_trial(n: [usize; 2], missing: [usize; 2]) -> TrialDataset {
    let mut subjects = Vec::new();
    for (k, arm) in [Arm::Intervention, Arm::Comparator].into_iter().enumerate() {
        for i in 0..n[k] {
            let follow = (i >= missing[k]).then_some(40.0);
            subjects.push(subject(&format!("{arm}{i:03}"), arm, "S", &[(0.0, Some(50.0)), (12.0, follow)]));
        }
    }
    TrialDataset::new(design(&[0.0, 12.0], vec![scale("S", 0.0, 100.0)]), subjects).unwrap()
}
