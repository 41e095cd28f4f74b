//! Item scoring, change from baseline, and direction-free orientation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Direction, EstimandStrategy, ItemScoringRule, ScaleRange, TrialDataset};
use crate::error::{Error, Result};

/// Which way a change is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Improvement,
    Deterioration,
}

impl Sense {
    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Improvement => "improvement",
            Sense::Deterioration => "deterioration",
        }
    }
}

/// Scores a multi-item scale: weighted mean of answered items, linearly
/// rescaled from the item range onto the scale range.
///
/// With the half rule, at least half of the items must be answered
/// (exactly half is enough); otherwise the score is missing. Without it,
/// every item must be answered.
pub fn score_scale(
    items: &BTreeMap<String, Option<f64>>,
    rule: &ItemScoringRule,
    range: ScaleRange,
) -> Result<Option<f64>> {
    let mut answered = 0usize;
    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for (k, name) in rule.items.iter().enumerate() {
        let Some(x) = items.get(name).copied().flatten() else {
            continue;
        };
        if !(x >= rule.item_min && x <= rule.item_max) {
            return Err(Error::Scoring(format!(
                "item `{name}` value {x} outside [{}, {}]",
                rule.item_min, rule.item_max
            )));
        }
        let w = rule.weights.as_ref().map_or(1.0, |w| w[k]);
        answered += 1;
        weighted += w * x;
        total_weight += w;
    }
    let n = rule.items.len();
    let enough = if rule.half_rule { 2 * answered >= n } else { answered == n };
    if answered == 0 || !enough {
        return Ok(None);
    }
    let mean = weighted / total_weight;
    let unit = (mean - rule.item_min) / (rule.item_max - rule.item_min);
    Ok(Some(range.clamp(range.min + unit * range.width())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub visit: String,
    /// Actual assessment week when observed, planned week otherwise.
    pub week: f64,
    pub score: Option<f64>,
    pub change: Option<f64>,
}

/// Per-subject baseline and post-baseline trajectory for one scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSeries {
    pub subject_id: String,
    pub scale_id: String,
    pub direction: Direction,
    pub baseline: Option<f64>,
    pub baseline_week: f64,
    /// One point per scheduled post-baseline visit, in schedule order.
    pub points: Vec<SeriesPoint>,
    pub death_week: Option<f64>,
    /// Set under the composite estimand: death counts as worst outcome.
    pub death_is_worst_outcome: bool,
}

impl ScoreSeries {
    /// Responder analyses need a baseline value.
    pub fn evaluable(&self) -> bool {
        self.baseline.is_some()
    }

    pub fn point(&self, visit: &str) -> Option<&SeriesPoint> {
        self.points.iter().find(|p| p.visit == visit)
    }

    /// Death on or before the visit week, with the composite estimand active.
    pub fn died_by(&self, visit: &str) -> bool {
        self.death_is_worst_outcome
            && match (self.death_week, self.point(visit)) {
                (Some(d), Some(p)) => d <= p.week,
                _ => false,
            }
    }

    /// Whether the responder status at `visit` is determinable.
    pub fn evaluable_at(&self, visit: &str) -> bool {
        self.baseline.is_some()
            && self
                .point(visit)
                .is_some_and(|p| p.score.is_some() || self.died_by(visit))
    }

    /// Post-baseline points with a known change, in order.
    pub fn available(&self) -> impl Iterator<Item = &SeriesPoint> {
        self.points.iter().filter(|p| p.change.is_some())
    }
}

/// Builds one series per analysis-set subject, in file order.
pub fn change_from_baseline(ds: &TrialDataset, scale_id: &str) -> Result<Vec<ScoreSeries>> {
    let scale = ds.scale(scale_id)?;
    let baseline_visit = ds.baseline_visit()?;
    let post = ds.post_baseline_visits()?;
    let composite = ds.estimand() == EstimandStrategy::CompositeDeathAsEvent;
    Ok(ds
        .analysis_subjects()
        .map(|s| {
            let baseline = s.score(scale_id, &baseline_visit.label);
            let baseline_week = s
                .observation(scale_id, &baseline_visit.label)
                .map_or(baseline_visit.week, |o| o.week);
            let points = post
                .iter()
                .map(|v| {
                    let obs = s.observation(scale_id, &v.label);
                    let score = obs.and_then(|o| o.scale_score);
                    SeriesPoint {
                        visit: v.label.clone(),
                        week: match obs {
                            Some(o) if o.scale_score.is_some() => o.week,
                            _ => v.week,
                        },
                        score,
                        change: match (score, baseline) {
                            (Some(x), Some(b)) => Some(x - b),
                            _ => None,
                        },
                    }
                })
                .collect();
            ScoreSeries {
                subject_id: s.id.clone(),
                scale_id: scale.scale_id.clone(),
                direction: scale.direction,
                baseline,
                baseline_week,
                points,
                death_week: s.death_week,
                death_is_worst_outcome: composite,
            }
        })
        .collect())
}

/// Magnitude of movement in the queried sense; positive means the score
/// moved that way.
pub fn orient_change(change: f64, direction: Direction, sense: Sense) -> f64 {
    let improvement = match direction {
        Direction::HigherIsWorse => -change,
        Direction::HigherIsBetter => change,
    };
    match sense {
        Sense::Improvement => improvement,
        Sense::Deterioration => -improvement,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::*;
    use crate::dataset::Arm;
    use proptest::prelude::*;

    fn four_items() -> ItemScoringRule {
        ItemScoringRule {
            items: (1..=4).map(|k| k.to_string()).collect(),
            item_min: 1.0,
            item_max: 4.0,
            weights: None,
            half_rule: true,
        }
    }

    fn answers(v: &[Option<f64>]) -> BTreeMap<String, Option<f64>> {
        v.iter().enumerate().map(|(k, x)| ((k + 1).to_string(), *x)).collect()
    }

    const RANGE: ScaleRange = ScaleRange { min: 0.0, max: 100.0 };

    /// Reference scorer written straight from the half-rule definition.
    fn reference_score(v: &[Option<f64>]) -> Option<f64> {
        let got: Vec<f64> = v.iter().flatten().copied().collect();
        if got.len() * 2 < v.len() || got.is_empty() {
            return None;
        }
        let mean = got.iter().sum::<f64>() / got.len() as f64;
        Some((mean - 1.0) / 3.0 * 100.0)
    }

    #[test]
    fn half_rule_scoring() {
        let v = [Some(3.0), Some(3.0), None, Some(3.0)];
        let got = score_scale(&answers(&v), &four_items(), RANGE).unwrap().unwrap();
        // (3 - 1) / (4 - 1) * 100
        assert!((got - 66.666_666_666_666_67).abs() < 1e-9);
        assert!((got - reference_score(&v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn missing_items() {
        assert_eq!(score_scale(&answers(&[None; 4]), &four_items(), RANGE).unwrap(), None);
        let one = [Some(2.0), None, None, None];
        assert_eq!(score_scale(&answers(&one), &four_items(), RANGE).unwrap(), None);
        let two = [Some(2.0), None, Some(4.0), None];
        assert!(score_scale(&answers(&two), &four_items(), RANGE).unwrap().is_some());
    }

    #[test]
    fn without_half_rule_all_items_needed() {
        let mut rule = four_items();
        rule.half_rule = false;
        let v = [Some(3.0), Some(3.0), None, Some(3.0)];
        assert_eq!(score_scale(&answers(&v), &rule, RANGE).unwrap(), None);
    }

    #[test]
    fn weights_shift_the_mean() {
        let mut rule = four_items();
        rule.weights = Some(vec![3.0, 1.0, 1.0, 1.0]);
        let v = [Some(4.0), Some(1.0), Some(1.0), Some(1.0)];
        // weighted mean = (12 + 3) / 6 = 2.5
        let got = score_scale(&answers(&v), &rule, RANGE).unwrap().unwrap();
        assert!((got - 50.0).abs() < 1e-12);
    }

    #[test]
    fn item_out_of_range_errors() {
        let v = [Some(5.0), Some(3.0), Some(3.0), Some(3.0)];
        assert!(score_scale(&answers(&v), &four_items(), RANGE).is_err());
    }

    #[test]
    fn change_from_baseline_cases() {
        let d = design(&[0.0, 4.0, 12.0], vec![scale("QL", 0.0, 100.0, Direction::HigherIsWorse)]);
        let a = subject("A", Arm::Intervention, &[(0.0, Some(40.0)), (12.0, Some(20.0))], "QL");
        let b = subject("B", Arm::Comparator, &[(4.0, Some(30.0)), (12.0, Some(20.0))], "QL");
        let c = subject(
            "C",
            Arm::Comparator,
            &[(0.0, Some(30.0)), (4.0, Some(30.0)), (12.0, Some(30.0))],
            "QL",
        );
        let ds = TrialDataset::new(d, vec![a, b, c]).unwrap();
        let series = change_from_baseline(&ds, "QL").unwrap();
        assert_eq!(series[0].point("W12").unwrap().change, Some(-20.0));
        assert_eq!(series[0].point("W4").unwrap().change, None);
        assert!(!series[1].evaluable());
        assert!(series[1].points.iter().all(|p| p.change.is_none()));
        assert!(series[2].points.iter().all(|p| p.change == Some(0.0)));
    }

    #[test]
    fn change_from_baseline_requires_baseline_visit() {
        let mut d = design(&[0.0, 12.0], vec![scale("QL", 0.0, 100.0, Direction::HigherIsWorse)]);
        d.visits[0].baseline = false;
        let ds = TrialDataset::new(d, vec![]).unwrap();
        assert!(matches!(change_from_baseline(&ds, "QL"), Err(Error::NoBaselineVisit)));
    }

    #[test]
    fn orientation_examples() {
        assert_eq!(orient_change(-20.0, Direction::HigherIsWorse, Sense::Improvement), 20.0);
        assert_eq!(orient_change(-20.0, Direction::HigherIsBetter, Sense::Improvement), -20.0);
        for d in [Direction::HigherIsWorse, Direction::HigherIsBetter] {
            for s in [Sense::Improvement, Sense::Deterioration] {
                assert_eq!(orient_change(0.0, d, s), 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn orientation_is_antisymmetric(x in -1e6f64..1e6, worse in any::<bool>()) {
            let d = if worse { Direction::HigherIsWorse } else { Direction::HigherIsBetter };
            prop_assert_eq!(
                orient_change(x, d, Sense::Improvement),
                -orient_change(x, d, Sense::Deterioration)
            );
        }

        #[test]
        fn scoring_is_permutation_invariant_and_in_range(
            raw in prop::collection::vec(prop::option::of(1u8..=4), 4),
            shift in 0usize..4,
        ) {
            let v: Vec<Option<f64>> = raw.iter().map(|x| x.map(f64::from)).collect();
            let mut rotated = v.clone();
            rotated.rotate_left(shift);
            let a = score_scale(&answers(&v), &four_items(), RANGE).unwrap();
            let b = score_scale(&answers(&rotated), &four_items(), RANGE).unwrap();
            match (a, b) {
                (Some(x), Some(y)) => {
                    prop_assert!((x - y).abs() < 1e-9);
                    prop_assert!(RANGE.contains(x));
                }
                (None, None) => {}
                _ => prop_assert!(false, "scoring depends on item order"),
            }
        }
    }
}
