//! Extent-of-added-benefit rules.
//!
//! Estimates are first oriented so that values below the null favour the
//! intervention. Ratio estimates are then compared with the category
//! thresholds on the upper confidence limit; continuous estimates can only
//! establish a non-quantifiable benefit.

use serde::Serialize;

use crate::completeness::{CompletenessReport, MAX_EXCLUDED_DIFF_PP, MAX_EXCLUDED_PCT, MIN_RETURN_RATE_PCT};
use crate::dataset::{Direction, ScaleDomain, ScaleMeta, Severity};
use crate::error::{Error, Result};
use crate::estimators::{smd_relevance, EffectEstimate, Measure, Orientation, SmdRelevance};
use crate::responder::{Sense, ThresholdDecision};

/// Minimum event risk in at least one arm for a "major" call in the
/// serious/HRQoL category.
pub const MAJOR_MIN_RISK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPolarity {
    /// More events is worse (deterioration, death).
    NegativeEvent,
    /// More events is better (improvement).
    PositiveEvent,
}

impl EventPolarity {
    pub fn for_sense(sense: Sense) -> Self {
        match sense {
            Sense::Deterioration => EventPolarity::NegativeEvent,
            Sense::Improvement => EventPolarity::PositiveEvent,
        }
    }

    /// Polarity of a raw score change: a rise is an event of this polarity.
    pub fn for_direction(direction: Direction) -> Self {
        match direction {
            Direction::HigherIsWorse => EventPolarity::NegativeEvent,
            Direction::HigherIsBetter => EventPolarity::PositiveEvent,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            EventPolarity::NegativeEvent => EventPolarity::PositiveEvent,
            EventPolarity::PositiveEvent => EventPolarity::NegativeEvent,
        }
    }
}

/// Puts an intervention-versus-comparator estimate on the footing where
/// values below 1 (ratios) or 0 (differences) favour the intervention.
/// Already oriented estimates are returned unchanged.
pub fn orient_effect(est: &EffectEstimate, polarity: EventPolarity) -> EffectEstimate {
    if est.orientation == Orientation::Lt1FavorsIntervention {
        return est.clone();
    }
    let mut out = est.clone();
    out.orientation = Orientation::Lt1FavorsIntervention;
    if polarity == EventPolarity::PositiveEvent {
        if est.measure.is_ratio() {
            out.point = 1.0 / est.point;
            out.ci_low = 1.0 / est.ci_high;
            out.ci_high = 1.0 / est.ci_low;
        } else {
            out.point = -est.point;
            out.ci_low = -est.ci_high;
            out.ci_high = -est.ci_low;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Hrqol,
    Symptom,
    Mortality,
}

impl EndpointKind {
    pub fn of_scale(scale: &ScaleMeta) -> Self {
        match scale.domain {
            ScaleDomain::Hrqol => EndpointKind::Hrqol,
            ScaleDomain::Symptom => EndpointKind::Symptom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeCategory {
    AllCauseMortality,
    SeriousSymptomsHrqol,
    NonSeriousSymptoms,
}

impl OutcomeCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeCategory::AllCauseMortality => "all-cause mortality",
            OutcomeCategory::SeriousSymptomsHrqol => "serious symptoms / HRQoL",
            OutcomeCategory::NonSeriousSymptoms => "non-serious symptoms",
        }
    }
}

pub fn categorize_outcome(scale: &ScaleMeta, kind: EndpointKind) -> Result<OutcomeCategory> {
    match kind {
        EndpointKind::Mortality => Ok(OutcomeCategory::AllCauseMortality),
        EndpointKind::Hrqol => Ok(OutcomeCategory::SeriousSymptomsHrqol),
        EndpointKind::Symptom => match scale.severity {
            Some(Severity::Serious) => Ok(OutcomeCategory::SeriousSymptomsHrqol),
            Some(Severity::NonSerious) => Ok(OutcomeCategory::NonSeriousSymptoms),
            None => Err(Error::MissingSeverity(scale.scale_id.clone())),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extent {
    Major,
    Considerable,
    Minor,
    NoneProven,
    NonQuantifiable,
    LessBenefit,
}

impl Extent {
    pub fn as_str(self) -> &'static str {
        match self {
            Extent::Major => "major",
            Extent::Considerable => "considerable",
            Extent::Minor => "minor",
            Extent::NoneProven => "none_proven",
            Extent::NonQuantifiable => "non_quantifiable",
            Extent::LessBenefit => "less_benefit",
        }
    }

    /// Order of the quantified extents; higher is more benefit.
    pub fn rank(self) -> i32 {
        match self {
            Extent::Major => 3,
            Extent::Considerable => 2,
            Extent::Minor => 1,
            Extent::NoneProven | Extent::NonQuantifiable => 0,
            Extent::LessBenefit => -1,
        }
    }
}

/// Upper-limit thresholds for (major, considerable, minor).
pub fn thresholds(category: OutcomeCategory) -> [Option<f64>; 3] {
    match category {
        OutcomeCategory::AllCauseMortality => [Some(0.85), Some(0.95), Some(1.00)],
        OutcomeCategory::SeriousSymptomsHrqol => [Some(0.75), Some(0.90), Some(1.00)],
        OutcomeCategory::NonSeriousSymptoms => [None, Some(0.80), Some(0.90)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtentDecision {
    pub extent: Extent,
    pub rationale: Vec<String>,
}

/// Largest extent whose threshold strictly exceeds the upper confidence
/// limit. `risks` are the (intervention, comparator) event risks and are
/// needed for "major" in the serious/HRQoL category.
pub fn extent_of_effect(est: &EffectEstimate, category: OutcomeCategory, risks: Option<[f64; 2]>) -> Result<ExtentDecision> {
    if est.orientation != Orientation::Lt1FavorsIntervention {
        return Err(Error::Unoriented);
    }
    if !matches!(est.measure, Measure::RR | Measure::HR | Measure::OR) {
        return Err(Error::UnsupportedMeasure(est.measure.as_str().into()));
    }
    let mut rationale = vec![format!(
        "{} {} [{}, {}], category {}",
        est.measure.as_str(),
        est.point,
        est.ci_low,
        est.ci_high,
        category.as_str()
    )];
    if est.ci_low > 1.0 {
        rationale.push(format!("lower limit {} > 1: less benefit", est.ci_low));
        return Ok(ExtentDecision { extent: Extent::LessBenefit, rationale });
    }
    let [major, considerable, minor] = thresholds(category);
    let levels = [(Extent::Major, major), (Extent::Considerable, considerable), (Extent::Minor, minor)];
    for (extent, threshold) in levels {
        let Some(t) = threshold else {
            rationale.push(format!("{}: not applicable in category {}; capped at considerable", extent.as_str(), category.as_str()));
            continue;
        };
        if !(est.ci_high < t) {
            rationale.push(format!("{}: upper limit {} < {} not met", extent.as_str(), est.ci_high, t));
            continue;
        }
        if extent == Extent::Major && category == OutcomeCategory::SeriousSymptomsHrqol {
            match risks {
                Some([r1, r2]) if r1 >= MAJOR_MIN_RISK || r2 >= MAJOR_MIN_RISK => {
                    rationale.push(format!(
                        "major: risks {r1} / {r2}, at least one >= {MAJOR_MIN_RISK}"
                    ));
                }
                Some([r1, r2]) => {
                    rationale.push(format!(
                        "major: upper limit {} < {t} met but risks {r1} / {r2} both < {MAJOR_MIN_RISK}",
                        est.ci_high
                    ));
                    continue;
                }
                None => {
                    rationale.push(format!(
                        "major: upper limit {} < {t} met but arm risks unavailable",
                        est.ci_high
                    ));
                    continue;
                }
            }
        }
        rationale.push(format!("{}: upper limit {} < {}", extent.as_str(), est.ci_high, t));
        return Ok(ExtentDecision { extent, rationale });
    }
    rationale.push("no threshold met: added benefit not proven".into());
    Ok(ExtentDecision { extent: Extent::NoneProven, rationale })
}

/// Evidence available for one endpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    /// Responder or time-to-event ratio estimate, not yet oriented.
    Ratio {
        estimate: EffectEstimate,
        polarity: EventPolarity,
        /// (intervention, comparator) event risks.
        risks: Option<[f64; 2]>,
    },
    /// Standardized mean difference only.
    Continuous { smd: EffectEstimate, polarity: EventPolarity },
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateSummary {
    pub validated: bool,
    pub return_rate_pass: bool,
    pub analysis_visit_return_pass: bool,
    pub excluded_overall: f64,
    pub arm_difference_pp: f64,
    pub missingness_pass: bool,
}

impl GateSummary {
    pub fn pass(&self) -> bool {
        self.validated && self.analysis_visit_return_pass && self.missingness_pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenefitVerdict {
    pub endpoint_id: String,
    pub category: Option<OutcomeCategory>,
    pub extent: Extent,
    pub driving_estimate: Option<EffectEstimate>,
    pub smd_relevance: Option<SmdRelevance>,
    pub gates: Option<GateSummary>,
    pub threshold_points: Option<f64>,
    pub rationale: Vec<String>,
}

pub struct EndpointInputs<'a> {
    pub endpoint_id: String,
    pub scale: &'a ScaleMeta,
    pub kind: EndpointKind,
    pub completeness: Option<&'a CompletenessReport>,
    pub threshold: Option<&'a ThresholdDecision>,
    pub evidence: Evidence,
}

/// Runs validity gate, completeness gates and the extent rules in order.
/// Always produces a verdict; failed steps end in `none_proven`.
pub fn derive_endpoint_verdict(inputs: EndpointInputs<'_>) -> BenefitVerdict {
    let mut rationale = Vec::new();
    let category = match categorize_outcome(inputs.scale, inputs.kind) {
        Ok(c) => Some(c),
        Err(e) => {
            rationale.push(e.to_string());
            None
        }
    };
    let gates = inputs.completeness.map(|c| GateSummary {
        validated: inputs.scale.validated,
        return_rate_pass: c.return_rate_gate.iter().all(|g| g.pass),
        analysis_visit_return_pass: c.analysis_visit_return_pass,
        excluded_overall: c.missingness.excluded_overall.value,
        arm_difference_pp: c.missingness.arm_difference_pp,
        missingness_pass: c.missingness.pass,
    });
    let mut verdict = BenefitVerdict {
        endpoint_id: inputs.endpoint_id,
        category,
        extent: Extent::NoneProven,
        driving_estimate: None,
        smd_relevance: None,
        gates: gates.clone(),
        threshold_points: inputs.threshold.map(|d| d.threshold_points),
        rationale: Vec::new(),
    };
    if let Some(d) = inputs.threshold {
        rationale.push(d.rationale.clone());
    }

    if !inputs.scale.validated {
        rationale.push(format!("instrument `{}` is not validated: only validated instruments are assessed", inputs.scale.scale_id));
        verdict.rationale = rationale;
        return verdict;
    }
    rationale.push(format!("instrument `{}` is validated", inputs.scale.scale_id));

    if let Some(c) = inputs.completeness {
        let m = &c.missingness;
        if !c.analysis_visit_return_pass {
            rationale.push(format!(
                "return rate at `{}` below {MIN_RETURN_RATE_PCT}% in at least one arm",
                c.analysis_visit
            ));
        } else {
            rationale.push(format!("return rate at `{}` at least {MIN_RETURN_RATE_PCT}% in both arms", c.analysis_visit));
        }
        if !m.overall_pass {
            rationale.push(format!(
                "{} of subjects excluded: more than {MAX_EXCLUDED_PCT}% of the study population",
                m.excluded_overall.value
            ));
        } else {
            rationale.push(format!("{} of subjects excluded: within {MAX_EXCLUDED_PCT}%", m.excluded_overall.value));
        }
        if !m.difference_pass {
            rationale.push(format!(
                "exclusion differs by {} percentage points between arms: more than {MAX_EXCLUDED_DIFF_PP}",
                m.arm_difference_pp
            ));
        } else {
            rationale.push(format!(
                "exclusion differs by {} percentage points between arms: within {MAX_EXCLUDED_DIFF_PP}",
                m.arm_difference_pp
            ));
        }
        if !(c.analysis_visit_return_pass && m.pass) {
            rationale.push("completeness gates failed: added benefit not proven".into());
            verdict.rationale = rationale;
            return verdict;
        }
    }

    match inputs.evidence {
        Evidence::Unavailable(reason) => {
            rationale.push(format!("no estimate available: {reason}"));
        }
        Evidence::Ratio { estimate, polarity, risks } => {
            let oriented = orient_effect(&estimate, polarity);
            if polarity == EventPolarity::PositiveEvent {
                rationale.push("positive event: comparison carried out in reverse".into());
            }
            match category {
                None => rationale.push("no outcome category: extent not derived".into()),
                Some(cat) => match extent_of_effect(&oriented, cat, risks) {
                    Ok(d) => {
                        verdict.extent = d.extent;
                        rationale.extend(d.rationale);
                    }
                    Err(e) => rationale.push(e.to_string()),
                },
            }
            verdict.driving_estimate = Some(oriented);
        }
        Evidence::Continuous { smd, polarity } => {
            let oriented = orient_effect(&smd, polarity);
            let relevance = smd_relevance(&oriented);
            rationale.push(format!(
                "continuous analysis only: Hedges' g {} [{}, {}]",
                oriented.point, oriented.ci_low, oriented.ci_high
            ));
            verdict.extent = match relevance {
                SmdRelevance::RelevantBenefit => {
                    rationale.push("relevant_benefit: interval entirely below -0.2; extent not quantifiable for continuous endpoints".into());
                    Extent::NonQuantifiable
                }
                SmdRelevance::RelevantHarm => {
                    rationale.push("relevant_harm: interval entirely above 0.2".into());
                    Extent::LessBenefit
                }
                SmdRelevance::NotRelevant => {
                    rationale.push("interval not entirely beyond +/-0.2: relevance not shown".into());
                    Extent::NoneProven
                }
            };
            verdict.smd_relevance = Some(relevance);
            verdict.driving_estimate = Some(oriented);
        }
    }
    verdict.rationale = rationale;
    verdict
}
