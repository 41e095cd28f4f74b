//! Return rates, missingness gates, and dropout descriptives.
//!
//! Gate comparisons are done on integer counts so that boundary cases
//! (exactly 70 %, exactly 30 %, exactly 15 percentage points) are decided
//! without floating-point noise.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::{Arm, DiscontinuationReason, TrialDataset};
use crate::error::{Error, Result};
use crate::scoring::{change_from_baseline, ScoreSeries};

/// Minimum return rate per visit and arm, as a percentage (inclusive).
pub const MIN_RETURN_RATE_PCT: u64 = 70;
/// Maximum excluded share of the analysis set, as a percentage (strict).
pub const MAX_EXCLUDED_PCT: u64 = 30;
/// Maximum between-arm difference in excluded share, in percentage points (strict).
pub const MAX_EXCLUDED_DIFF_PP: u64 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub count: usize,
    pub denominator: usize,
    pub value: f64,
}

impl Proportion {
    pub fn new(count: usize, denominator: usize) -> Self {
        let value = if denominator == 0 { 0.0 } else { count as f64 / denominator as f64 };
        Proportion { count, denominator, value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitReturnRate {
    pub visit: String,
    pub week: f64,
    pub intervention: Proportion,
    pub comparator: Proportion,
}

impl VisitReturnRate {
    pub fn arm(&self, arm: Arm) -> Proportion {
        match arm {
            Arm::Intervention => self.intervention,
            Arm::Comparator => self.comparator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnRates {
    pub scale_id: String,
    pub visits: Vec<VisitReturnRate>,
}

/// Questionnaires with a score divided by every analysis-set subject of the
/// arm. The denominator is fixed across visits; deaths and dropouts stay in.
pub fn return_rates(ds: &TrialDataset, scale_id: &str) -> Result<ReturnRates> {
    ds.scale(scale_id)?;
    for arm in Arm::BOTH {
        if ds.arm_size(arm) == 0 {
            return Err(Error::EmptyArm(ds.arms().label(arm).to_string()));
        }
    }
    let visits = ds
        .visits()
        .iter()
        .map(|v| {
            let rate = |arm: Arm| {
                let mut n = 0;
                let mut returned = 0;
                for s in ds.analysis_subjects().filter(|s| s.arm == arm) {
                    n += 1;
                    if s.score(scale_id, &v.label).is_some() {
                        returned += 1;
                    }
                }
                Proportion::new(returned, n)
            };
            VisitReturnRate {
                visit: v.label.clone(),
                week: v.week,
                intervention: rate(Arm::Intervention),
                comparator: rate(Arm::Comparator),
            }
        })
        .collect();
    Ok(ReturnRates { scale_id: scale_id.to_string(), visits })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VisitGate {
    pub visit: String,
    pub pass: bool,
}

fn rate_ok(p: Proportion) -> bool {
    (p.count as u128) * 100 >= (MIN_RETURN_RATE_PCT as u128) * (p.denominator as u128)
}

/// A visit passes when both arms reach the minimum return rate. The endpoint
/// is usable only at passing visits.
pub fn return_rate_gate(rates: &ReturnRates) -> Vec<VisitGate> {
    rates
        .visits
        .iter()
        .map(|v| VisitGate {
            visit: v.visit.clone(),
            pass: rate_ok(v.intervention) && rate_ok(v.comparator),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingnessVerdict {
    pub visit: String,
    pub excluded_intervention: Proportion,
    pub excluded_comparator: Proportion,
    pub excluded_overall: Proportion,
    /// Absolute between-arm difference in excluded share, percentage points.
    pub arm_difference_pp: f64,
    pub overall_pass: bool,
    pub difference_pass: bool,
    pub pass: bool,
}

/// Counts-only form of the missingness gate, usable without a dataset.
pub fn missingness_verdict(
    visit: &str,
    excluded: [usize; 2],
    n: [usize; 2],
) -> MissingnessVerdict {
    let [e1, e2] = excluded.map(|x| x as u128);
    let [n1, n2] = n.map(|x| x as u128);
    let overall_pass = (e1 + e2) * 100 <= (MAX_EXCLUDED_PCT as u128) * (n1 + n2);
    let cross = (e1 * n2).abs_diff(e2 * n1);
    let difference_pass = cross * 100 <= (MAX_EXCLUDED_DIFF_PP as u128) * n1 * n2;
    let pi = Proportion::new(excluded[0], n[0]);
    let pc = Proportion::new(excluded[1], n[1]);
    MissingnessVerdict {
        visit: visit.to_string(),
        excluded_intervention: pi,
        excluded_comparator: pc,
        excluded_overall: Proportion::new(excluded[0] + excluded[1], n[0] + n[1]),
        arm_difference_pp: (pi.value - pc.value).abs() * 100.0,
        overall_pass,
        difference_pass,
        pass: overall_pass && difference_pass,
    }
}

/// A subject is excluded at `visit` when it is not evaluable for the
/// responder analysis there: no baseline, or no score at the visit (death
/// before the visit counts as evaluable under the composite estimand).
pub fn missingness_gate(ds: &TrialDataset, scale_id: &str, visit: &str) -> Result<MissingnessVerdict> {
    ds.visit(visit)?;
    let series = change_from_baseline(ds, scale_id)?;
    Ok(missingness_from_series(ds, &series, visit))
}

pub(crate) fn missingness_from_series(ds: &TrialDataset, series: &[ScoreSeries], visit: &str) -> MissingnessVerdict {
    let mut excluded = [0usize; 2];
    let mut n = [0usize; 2];
    for (s, subject) in series.iter().zip(ds.analysis_subjects()) {
        let k = match subject.arm {
            Arm::Intervention => 0,
            Arm::Comparator => 1,
        };
        n[k] += 1;
        if !s.evaluable_at(visit) {
            excluded[k] += 1;
        }
    }
    missingness_verdict(visit, excluded, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingQuartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quartiles(mut weeks: Vec<f64>) -> Option<TimingQuartiles> {
    if weeks.is_empty() {
        return None;
    }
    weeks.sort_by(f64::total_cmp);
    Some(TimingQuartiles {
        q1: quantile(&weeks, 0.25),
        median: quantile(&weeks, 0.5),
        q3: quantile(&weeks, 0.75),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropoutRow {
    pub reason: DiscontinuationReason,
    pub arm: Arm,
    pub count: usize,
    pub timing: TimingQuartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmDropout {
    pub arm: Arm,
    pub n: usize,
    pub discontinued: usize,
    pub deaths: usize,
    pub timing: Option<TimingQuartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropoutSummary {
    /// One row per (reason, arm) with at least one discontinuation.
    pub rows: Vec<DropoutRow>,
    pub arms: Vec<ArmDropout>,
}

pub fn dropout_summary(ds: &TrialDataset) -> DropoutSummary {
    let mut by_key: BTreeMap<(DiscontinuationReason, Arm), Vec<f64>> = BTreeMap::new();
    for s in ds.analysis_subjects() {
        if let (Some(r), Some(w)) = (s.discontinuation_reason, s.discontinuation_week) {
            by_key.entry((r, s.arm)).or_default().push(w);
        }
    }
    let rows = by_key
        .into_iter()
        .map(|((reason, arm), weeks)| DropoutRow {
            reason,
            arm,
            count: weeks.len(),
            timing: quartiles(weeks).expect("nonempty"),
        })
        .collect();
    let arms = Arm::BOTH
        .into_iter()
        .map(|arm| {
            let members: Vec<_> = ds.analysis_subjects().filter(|s| s.arm == arm).collect();
            let weeks: Vec<f64> = members.iter().filter_map(|s| s.discontinuation_week).collect();
            ArmDropout {
                arm,
                n: members.len(),
                discontinued: weeks.len(),
                deaths: members.iter().filter(|s| s.death_week.is_some()).count(),
                timing: quartiles(weeks),
            }
        })
        .collect();
    DropoutSummary { rows, arms }
}

/// All completeness diagnostics for one scale and analysis visit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletenessReport {
    pub scale_id: String,
    pub return_rates: ReturnRates,
    pub return_rate_gate: Vec<VisitGate>,
    pub analysis_visit: String,
    pub analysis_visit_return_pass: bool,
    pub missingness: MissingnessVerdict,
}

impl CompletenessReport {
    pub fn pass(&self) -> bool {
        self.analysis_visit_return_pass && self.missingness.pass
    }
}

pub fn assess_completeness(ds: &TrialDataset, scale_id: &str, visit: &str) -> Result<CompletenessReport> {
    let rates = return_rates(ds, scale_id)?;
    let gate = return_rate_gate(&rates);
    let pass_at_visit = gate
        .iter()
        .find(|g| g.visit == visit)
        .map(|g| g.pass)
        .ok_or_else(|| Error::UnknownVisit(visit.to_string()))?;
    Ok(CompletenessReport {
        scale_id: scale_id.to_string(),
        return_rates: rates,
        return_rate_gate: gate,
        analysis_visit: visit.to_string(),
        analysis_visit_return_pass: pass_at_visit,
        missingness: missingness_gate(ds, scale_id, visit)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::*;
    use crate::dataset::{Direction, Subject};

    /// `n` subjects per arm; the first `returned[arm]` have a score at week 12.
    fn dataset(n: usize, returned: [usize; 2]) -> TrialDataset {
        let d = design(&[0.0, 12.0], vec![scale("QL", 0.0, 100.0, Direction::HigherIsBetter)]);
        let mut subjects = Vec::new();
        for (k, arm) in Arm::BOTH.into_iter().enumerate() {
            for i in 0..n {
                let w12 = if i < returned[k] { Some(50.0) } else { None };
                subjects.push(subject(&format!("{arm}{i}"), arm, &[(0.0, Some(40.0)), (12.0, w12)], "QL"));
            }
        }
        TrialDataset::new(d, subjects).unwrap()
    }

    #[test]
    fn return_rate_is_a_ratio_over_the_full_arm() {
        let r = return_rates(&dataset(100, [80, 75]), "QL").unwrap();
        let w12 = &r.visits[1];
        assert_eq!(w12.intervention.value, 0.80);
        assert_eq!(w12.comparator.value, 0.75);
        assert_eq!(r.visits[0].intervention.value, 1.0);
        assert!(return_rate_gate(&r)[1].pass);
    }

    #[test]
    fn deaths_stay_in_the_denominator() {
        let ds = dataset(100, [80, 80]);
        let subjects: Vec<Subject> = ds
            .subjects()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut s = s.clone();
                if (90..100).contains(&i) {
                    // missing at week 12 because they died at week 10
                    s.death_week = Some(10.0);
                }
                s
            })
            .collect();
        let with_deaths = ds.with_subjects(subjects);
        let a = return_rates(&ds, "QL").unwrap();
        let b = return_rates(&with_deaths, "QL").unwrap();
        assert_eq!(a, b);
        for v in &b.visits {
            assert_eq!(v.intervention.denominator, 100);
        }
    }

    #[test]
    fn return_rate_gate_boundaries() {
        let gate = |i, c| return_rate_gate(&return_rates(&dataset(100, [i, c]), "QL").unwrap())[1].pass;
        assert!(!gate(65, 90));
        assert!(gate(70, 70));
        assert!(!gate(69, 100));
    }

    #[test]
    fn empty_arm_is_an_error() {
        let d = design(&[0.0, 12.0], vec![scale("QL", 0.0, 100.0, Direction::HigherIsBetter)]);
        let s = subject("A", Arm::Intervention, &[(0.0, Some(1.0))], "QL");
        let ds = TrialDataset::new(d, vec![s]).unwrap();
        assert!(matches!(return_rates(&ds, "QL"), Err(Error::EmptyArm(_))));
    }

    #[test]
    fn missingness_gate_rules() {
        // 31 % excluded overall
        let v = missingness_gate(&dataset(100, [69, 69]), "QL", "W12").unwrap();
        assert!(!v.overall_pass && v.difference_pass && !v.pass);
        // 10 % vs 27 %: 17 pp
        let v = missingness_gate(&dataset(100, [90, 73]), "QL", "W12").unwrap();
        assert!(v.overall_pass && !v.difference_pass);
        assert!((v.arm_difference_pp - 17.0).abs() < 1e-9);
        let v = missingness_gate(&dataset(100, [100, 100]), "QL", "W12").unwrap();
        assert!(v.pass);
        assert_eq!(v.excluded_overall.value, 0.0);
    }

    #[test]
    fn missingness_boundaries_are_exact() {
        // 30.0 % overall: pass; 15.0 pp: pass
        assert!(missingness_verdict("v", [30, 30], [100, 100]).overall_pass);
        assert!(missingness_verdict("v", [10, 25], [100, 100]).difference_pass);
        assert!(!missingness_verdict("v", [61, 61], [200, 200]).overall_pass);
        assert!(!missingness_verdict("v", [20, 51], [200, 200]).difference_pass);
    }

    #[test]
    fn missing_baseline_counts_as_excluded() {
        let d = design(&[0.0, 12.0], vec![scale("QL", 0.0, 100.0, Direction::HigherIsBetter)]);
        let a = subject("A", Arm::Intervention, &[(12.0, Some(1.0))], "QL");
        let b = subject("B", Arm::Comparator, &[(0.0, Some(1.0)), (12.0, Some(1.0))], "QL");
        let ds = TrialDataset::new(d, vec![a, b]).unwrap();
        let v = missingness_gate(&ds, "QL", "W12").unwrap();
        assert_eq!(v.excluded_intervention.count, 1);
        assert_eq!(v.excluded_comparator.count, 0);
    }

    #[test]
    fn dropout_table() {
        let ds = dataset(20, [20, 20]);
        assert!(dropout_summary(&ds).rows.is_empty());

        let subjects: Vec<Subject> = ds
            .subjects()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut s = s.clone();
                let ae = (i < 10) || (20..22).contains(&i);
                if ae {
                    s.discontinuation_week = Some([4.0, 8.0, 12.0][i % 3]);
                    s.discontinuation_reason = Some(DiscontinuationReason::AdverseEvent);
                }
                s
            })
            .collect();
        let t = dropout_summary(&ds.with_subjects(subjects));
        assert_eq!(t.rows.len(), 2);
        assert_eq!((t.rows[0].reason, t.rows[0].arm, t.rows[0].count), (DiscontinuationReason::AdverseEvent, Arm::Intervention, 10));
        assert_eq!((t.rows[1].arm, t.rows[1].count), (Arm::Comparator, 2));
    }

    #[test]
    fn median_of_three_weeks() {
        let q = quartiles(vec![12.0, 4.0, 8.0]).unwrap();
        assert_eq!(q.median, 8.0);
        assert_eq!(q.q1, 6.0);
        assert_eq!(q.q3, 10.0);
    }

    #[test]
    fn adding_a_complete_subject_to_the_worse_arm_never_fails_the_gate() {
        for e1 in 0..=20usize {
            for e2 in 0..=20usize {
                let before = missingness_verdict("v", [e1, e2], [20, 20]);
                let n_after = if e1 >= e2 { [21, 20] } else { [20, 21] };
                let after = missingness_verdict("v", [e1, e2], n_after);
                if before.pass {
                    assert!(after.pass, "e1={e1} e2={e2}");
                }
            }
        }
    }
}
