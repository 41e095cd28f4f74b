//! Response thresholds, responder classification and event-time
//! construction for time-to-deterioration / time-to-improvement.

use serde::{Deserialize, Serialize};

use crate::dataset::{Arm, ScaleMeta, TrialDataset};
use crate::error::{Error, Result};
use crate::scoring::{change_from_baseline, orient_change, ScoreSeries};

pub use crate::scoring::Sense;

/// Universal individual response threshold, percent of the scale range.
pub const FIFTEEN_PERCENT: f64 = 15.0;
/// Relative slack when comparing a MID against 15 % of the range.
const MID_TOL: f64 = 1e-12;

/// Share of the scale width, computed as `width * pct / 100` so that whole
/// widths give the correctly rounded value.
pub fn percent_of_range(scale: &ScaleMeta, pct: f64) -> f64 {
    scale.range().width() * pct / 100.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPolicy {
    /// The 15 % criterion was named in the analysis plan.
    #[serde(default)]
    pub fifteen_percent_prespecified: bool,
    /// Only continuous analyses were requested for every scale.
    #[serde(default)]
    pub continuous_only: bool,
    /// Also run responder analyses with a rejected MID, reported alongside.
    #[serde(default = "yes")]
    pub report_rejected_mid: bool,
}

fn yes() -> bool {
    true
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy { fifteen_percent_prespecified: false, continuous_only: false, report_rejected_mid: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    PrespecifiedMidAccepted,
    FifteenPercentPosthoc,
    FifteenPercentPrespecified,
    /// Supplementary analysis with a MID that did not meet the criterion.
    RejectedMid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdDecision {
    pub scale_id: String,
    pub threshold_points: f64,
    pub source: ThresholdSource,
    /// 1: prespecified MID >= 15 % accepted; 2: prespecified MID < 15 %
    /// replaced by 15 %; 3: no prespecified MID, 15 % used; 4: continuous
    /// analysis only (Hedges' g path).
    pub scenario: u8,
    pub rejected_mid: Option<f64>,
    pub continuous_only: bool,
    pub rationale: String,
}

impl ThresholdDecision {
    /// Decision for the supplementary analysis with the rejected MID.
    pub fn supplementary(&self) -> Option<ThresholdDecision> {
        self.rejected_mid.map(|mid| ThresholdDecision {
            scale_id: self.scale_id.clone(),
            threshold_points: mid,
            source: ThresholdSource::RejectedMid,
            scenario: self.scenario,
            rejected_mid: None,
            continuous_only: self.continuous_only,
            rationale: format!("supplementary analysis with rejected MID {mid}; not used for the verdict"),
        })
    }

    /// Threshold that is a property of the scale, not of any population:
    /// counts as accepted for extent derivation.
    pub fn accepted(&self) -> bool {
        self.source != ThresholdSource::RejectedMid
    }
}

/// Resolves the responder threshold for a scale.
///
/// A prespecified MID of at least 15 % of the range is accepted. A smaller
/// prespecified MID, or a MID that was not prespecified, is replaced by the
/// 15 % criterion. Without a MID the 15 % criterion applies.
pub fn resolve_threshold(scale: &ScaleMeta, policy: &ThresholdPolicy) -> ThresholdDecision {
    let fifteen = percent_of_range(scale, FIFTEEN_PERCENT);
    let fifteen_source = if policy.fifteen_percent_prespecified {
        ThresholdSource::FifteenPercentPrespecified
    } else {
        ThresholdSource::FifteenPercentPosthoc
    };
    let (threshold_points, source, mut scenario, rejected_mid, rationale) = match scale.prespecified_mid {
        Some(mid) if scale.mid_prespecified_flag && mid >= fifteen * (1.0 - MID_TOL) => (
            mid,
            ThresholdSource::PrespecifiedMidAccepted,
            1,
            None,
            format!("prespecified MID {mid} >= 15% of range ({fifteen}): accepted"),
        ),
        Some(mid) if scale.mid_prespecified_flag => (
            fifteen,
            fifteen_source,
            2,
            Some(mid),
            format!("prespecified MID {mid} < 15% of range ({fifteen}): rejected, 15% criterion used"),
        ),
        Some(mid) => (
            fifteen,
            fifteen_source,
            3,
            (mid != fifteen).then_some(mid),
            format!("MID {mid} not prespecified: 15% of range ({fifteen}) used"),
        ),
        None => (
            fifteen,
            fifteen_source,
            3,
            None,
            format!("no MID: 15% of range ({fifteen}) used"),
        ),
    };
    if policy.continuous_only {
        scenario = 4;
    }
    ThresholdDecision {
        scale_id: scale.scale_id.clone(),
        threshold_points,
        source,
        scenario,
        rejected_mid,
        continuous_only: policy.continuous_only,
        rationale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Responder,
    NonResponder,
    NonEvaluable,
}

/// Responder iff the oriented change at `visit` reaches the threshold
/// (inclusive). Under the composite estimand a death by the visit counts as
/// deterioration.
pub fn classify_response(series: &ScoreSeries, visit: &str, decision: &ThresholdDecision, sense: Sense) -> ResponseStatus {
    if !series.evaluable_at(visit) {
        return ResponseStatus::NonEvaluable;
    }
    let point = series.point(visit).expect("evaluable implies present");
    match point.change {
        Some(change) => {
            if orient_change(change, series.direction, sense) >= decision.threshold_points {
                ResponseStatus::Responder
            } else {
                ResponseStatus::NonResponder
            }
        }
        // only reachable through a death under the composite estimand
        None => match sense {
            Sense::Deterioration => ResponseStatus::Responder,
            Sense::Improvement => ResponseStatus::NonResponder,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ArmCounts {
    pub responders: usize,
    pub non_responders: usize,
    pub non_evaluable: usize,
}

impl ArmCounts {
    pub fn evaluable(&self) -> usize {
        self.responders + self.non_responders
    }

    pub fn risk(&self) -> f64 {
        self.responders as f64 / self.evaluable() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponderTable {
    pub visit: String,
    pub sense: Sense,
    pub threshold_points: f64,
    pub intervention: ArmCounts,
    pub comparator: ArmCounts,
}

impl ResponderTable {
    pub fn arm(&self, arm: Arm) -> ArmCounts {
        match arm {
            Arm::Intervention => self.intervention,
            Arm::Comparator => self.comparator,
        }
    }
}

pub fn responder_table(
    ds: &TrialDataset,
    scale_id: &str,
    visit: &str,
    decision: &ThresholdDecision,
    sense: Sense,
) -> Result<ResponderTable> {
    ds.visit(visit)?;
    let series = change_from_baseline(ds, scale_id)?;
    responder_table_from_series(ds, &series, visit, decision, sense)
}

pub(crate) fn responder_table_from_series(
    ds: &TrialDataset,
    series: &[ScoreSeries],
    visit: &str,
    decision: &ThresholdDecision,
    sense: Sense,
) -> Result<ResponderTable> {
    let mut counts = [ArmCounts::default(); 2];
    for (s, subject) in series.iter().zip(ds.analysis_subjects()) {
        let c = &mut counts[(subject.arm == Arm::Comparator) as usize];
        match classify_response(s, visit, decision, sense) {
            ResponseStatus::Responder => c.responders += 1,
            ResponseStatus::NonResponder => c.non_responders += 1,
            ResponseStatus::NonEvaluable => c.non_evaluable += 1,
        }
    }
    if counts.iter().all(|c| c.evaluable() == 0) {
        return Err(Error::NoEvaluable(format!("responder analysis of `{}` at `{visit}`", decision.scale_id)));
    }
    Ok(ResponderTable {
        visit: visit.to_string(),
        sense,
        threshold_points: decision.threshold_points,
        intervention: counts[0],
        comparator: counts[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FirstDeterioration,
    ConfirmedDeterioration,
    FirstImprovement,
    ConfirmedImprovement,
}

impl EventKind {
    pub fn new(sense: Sense, confirmed: bool) -> Self {
        match (sense, confirmed) {
            (Sense::Deterioration, false) => EventKind::FirstDeterioration,
            (Sense::Deterioration, true) => EventKind::ConfirmedDeterioration,
            (Sense::Improvement, false) => EventKind::FirstImprovement,
            (Sense::Improvement, true) => EventKind::ConfirmedImprovement,
        }
    }

    pub fn sense(self) -> Sense {
        match self {
            EventKind::FirstDeterioration | EventKind::ConfirmedDeterioration => Sense::Deterioration,
            EventKind::FirstImprovement | EventKind::ConfirmedImprovement => Sense::Improvement,
        }
    }

    pub fn confirmed(self) -> bool {
        matches!(self, EventKind::ConfirmedDeterioration | EventKind::ConfirmedImprovement)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::FirstDeterioration => "first_deterioration",
            EventKind::ConfirmedDeterioration => "confirmed_deterioration",
            EventKind::FirstImprovement => "first_improvement",
            EventKind::ConfirmedImprovement => "confirmed_improvement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathHandling {
    Event,
    Censor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub subject_id: String,
    pub event: bool,
    pub time_weeks: f64,
    pub kind: EventKind,
    pub death_handled_as: DeathHandling,
}

/// Builds the event record for one subject, or `None` when the subject has
/// no baseline value.
///
/// First events occur at the first visit whose oriented change reaches the
/// threshold. Confirmed events additionally need the next available visit
/// (skipping missing ones) to reach it; the time is that of the first visit
/// of the pair. Censoring is at the last visit with a known change, or at
/// baseline if there is none. Death only ever becomes an event for
/// deterioration kinds.
pub fn time_to_event(
    series: &ScoreSeries,
    decision: &ThresholdDecision,
    kind: EventKind,
    death: DeathHandling,
) -> Option<EventRecord> {
    series.baseline?;
    let sense = kind.sense();
    let death = if series.death_is_worst_outcome && sense == Sense::Deterioration {
        DeathHandling::Event
    } else if sense == Sense::Improvement {
        DeathHandling::Censor
    } else {
        death
    };
    let available: Vec<(f64, bool)> = series
        .available()
        .map(|p| {
            let hit = orient_change(p.change.expect("available"), series.direction, sense) >= decision.threshold_points;
            (p.week, hit)
        })
        .collect();
    let found = if kind.confirmed() {
        available
            .windows(2)
            .find(|w| w[0].1 && w[1].1)
            .map(|w| w[0].0)
    } else {
        available.iter().find(|(_, hit)| *hit).map(|(w, _)| *w)
    };
    let record = |event, time_weeks| EventRecord {
        subject_id: series.subject_id.clone(),
        event,
        time_weeks,
        kind,
        death_handled_as: death,
    };
    if let Some(t) = found {
        return Some(record(true, t));
    }
    if let (DeathHandling::Event, Some(d)) = (death, series.death_week) {
        return Some(record(true, d));
    }
    let last = available.last().map_or(series.baseline_week, |(w, _)| *w);
    Some(record(false, last))
}

/// Event records for every evaluable subject, paired with its arm.
pub fn event_records(
    ds: &TrialDataset,
    series: &[ScoreSeries],
    decision: &ThresholdDecision,
    kind: EventKind,
    death: DeathHandling,
) -> Vec<(Arm, EventRecord)> {
    series
        .iter()
        .zip(ds.analysis_subjects())
        .filter_map(|(s, subj)| time_to_event(s, decision, kind, death).map(|r| (subj.arm, r)))
        .collect()
}
