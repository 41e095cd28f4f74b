//! Per-endpoint analyses: responder, time-to-event and continuous, each
//! ending in a benefit verdict.

use serde::Serialize;

use crate::benefit::{derive_endpoint_verdict, BenefitVerdict, EndpointInputs, EndpointKind, EventPolarity, Evidence};
use crate::completeness::CompletenessReport;
use crate::dataset::{Arm, ScaleMeta, TrialDataset};
use crate::error::Result;
use crate::estimators::{
    cox_hr, hedges_g, kaplan_meier, mean_difference, odds_ratio, risk_difference, risk_ratio, smd_relevance, ArmSummary,
    CoxFit, EffectEstimate, KaplanMeier, SmdRelevance, SurvivalObs, TieMethod, TwoByTwo,
};
use crate::responder::{event_records, responder_table_from_series, DeathHandling, EventKind, ResponderTable, Sense, ThresholdDecision};
use crate::scoring::ScoreSeries;

/// Shared inputs for every analysis of one scale in one population.
pub struct EndpointContext<'a> {
    pub ds: &'a TrialDataset,
    pub scale: &'a ScaleMeta,
    pub series: &'a [ScoreSeries],
    pub decision: &'a ThresholdDecision,
    pub visit: &'a str,
    pub alpha: f64,
    pub completeness: Option<&'a CompletenessReport>,
}

impl EndpointContext<'_> {
    fn verdict(&self, endpoint_id: String, evidence: Evidence) -> BenefitVerdict {
        derive_endpoint_verdict(EndpointInputs {
            endpoint_id,
            scale: self.scale,
            kind: EndpointKind::of_scale(self.scale),
            completeness: self.completeness,
            threshold: Some(self.decision),
            evidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponderAnalysis {
    pub sense: Sense,
    pub visit: String,
    pub threshold_points: f64,
    pub table: ResponderTable,
    pub rr: Option<EffectEstimate>,
    pub or: Option<EffectEstimate>,
    pub rd: Option<EffectEstimate>,
    pub notes: Vec<String>,
    pub verdict: BenefitVerdict,
}

fn keep(result: Result<EffectEstimate>, notes: &mut Vec<String>) -> Option<EffectEstimate> {
    result.map_err(|e| notes.push(e.to_string())).ok()
}

/// Responder analysis at the context visit with RR as the driving measure.
pub fn responder_analysis(ctx: &EndpointContext<'_>, sense: Sense, polarity: EventPolarity) -> Result<ResponderAnalysis> {
    let table = responder_table_from_series(ctx.ds, ctx.series, ctx.visit, ctx.decision, sense)?;
    let cells = TwoByTwo::from(&table);
    let mut notes = Vec::new();
    let rr = keep(risk_ratio(&cells, ctx.alpha), &mut notes);
    let or = keep(odds_ratio(&cells, ctx.alpha), &mut notes);
    let rd = keep(risk_difference(&cells, ctx.alpha), &mut notes);
    notes.dedup();
    let risks = (cells.n1 > 0 && cells.n2 > 0).then(|| {
        let (r1, r2) = cells.risks();
        [r1, r2]
    });
    let evidence = match &rr {
        Some(estimate) => Evidence::Ratio { estimate: estimate.clone(), polarity, risks },
        None => Evidence::Unavailable(notes.first().cloned().unwrap_or_default()),
    };
    let verdict = ctx.verdict(format!("{}:{}:responder", ctx.scale.scale_id, sense.as_str()), evidence);
    Ok(ResponderAnalysis {
        sense,
        visit: ctx.visit.to_string(),
        threshold_points: ctx.decision.threshold_points,
        table,
        rr,
        or,
        rd,
        notes,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeToEventAnalysis {
    pub kind: EventKind,
    pub death_handling: DeathHandling,
    /// (intervention, comparator)
    pub subjects: [usize; 2],
    pub events: [usize; 2],
    pub median_weeks: [Option<f64>; 2],
    pub cox: Option<CoxFit>,
    pub notes: Vec<String>,
    pub verdict: BenefitVerdict,
    #[serde(skip)]
    pub curves: Vec<(Arm, KaplanMeier)>,
}

/// Time to first or confirmed deterioration/improvement with KM curves per
/// arm and a Cox hazard ratio as the driving measure.
pub fn time_to_event_analysis(
    ctx: &EndpointContext<'_>,
    kind: EventKind,
    death: DeathHandling,
    ties: TieMethod,
    polarity: EventPolarity,
) -> Result<TimeToEventAnalysis> {
    let records = event_records(ctx.ds, ctx.series, ctx.decision, kind, death);
    let split = |arm: Arm| -> Vec<SurvivalObs> {
        records
            .iter()
            .filter(|(a, _)| *a == arm)
            .map(|(_, r)| SurvivalObs::new(r.time_weeks, r.event))
            .collect()
    };
    let (int, cmp) = (split(Arm::Intervention), split(Arm::Comparator));
    let mut notes = Vec::new();
    let mut curves = Vec::new();
    let mut median_weeks = [None, None];
    for (k, (arm, obs)) in [(Arm::Intervention, &int), (Arm::Comparator, &cmp)].into_iter().enumerate() {
        match kaplan_meier(obs, ctx.alpha) {
            Ok(km) => {
                median_weeks[k] = km.median;
                curves.push((arm, km));
            }
            Err(e) => notes.push(format!("{}: {e}", ctx.ds.arms().label(arm))),
        }
    }
    let events = [int.iter().filter(|o| o.event).count(), cmp.iter().filter(|o| o.event).count()];
    let cox = match cox_hr(&int, &cmp, ties, ctx.alpha) {
        Ok(fit) => Some(fit),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    let risks = (!int.is_empty() && !cmp.is_empty())
        .then(|| [events[0] as f64 / int.len() as f64, events[1] as f64 / cmp.len() as f64]);
    let evidence = match &cox {
        Some(fit) => Evidence::Ratio { estimate: fit.estimate.clone(), polarity, risks },
        None => Evidence::Unavailable(notes.last().cloned().unwrap_or_default()),
    };
    let verdict = ctx.verdict(format!("{}:{}:time_to_event", ctx.scale.scale_id, kind.sense().as_str()), evidence);
    Ok(TimeToEventAnalysis {
        kind,
        death_handling: death,
        subjects: [int.len(), cmp.len()],
        events,
        median_weeks,
        cox,
        notes,
        verdict,
        curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousAnalysis {
    pub visit: String,
    pub intervention: Option<ArmSummary>,
    pub comparator: Option<ArmSummary>,
    pub md: Option<EffectEstimate>,
    pub smd: Option<EffectEstimate>,
    pub smd_relevance: Option<SmdRelevance>,
    pub notes: Vec<String>,
    pub verdict: BenefitVerdict,
}

/// Change from baseline at the context visit: Welch mean difference and
/// Hedges' g, with the relevance rule applied to g.
pub fn continuous_analysis(ctx: &EndpointContext<'_>, polarity: EventPolarity) -> Result<ContinuousAnalysis> {
    let mut changes = [Vec::new(), Vec::new()];
    for (s, subj) in ctx.series.iter().zip(ctx.ds.analysis_subjects()) {
        if let Some(c) = s.point(ctx.visit).and_then(|p| p.change) {
            changes[usize::from(subj.arm == Arm::Comparator)].push(c);
        }
    }
    let summary = |v: &Vec<f64>| (!v.is_empty()).then(|| ArmSummary::from_values(v));
    let (int, cmp) = (summary(&changes[0]), summary(&changes[1]));
    let mut notes = Vec::new();
    let (md, smd) = match (&int, &cmp) {
        (Some(a), Some(b)) => (keep(mean_difference(a, b, ctx.alpha), &mut notes), keep(hedges_g(a, b, ctx.alpha), &mut notes)),
        _ => {
            notes.push("an arm has no change values at the analysis visit".into());
            (None, None)
        }
    };
    notes.dedup();
    let oriented = smd.as_ref().map(|g| crate::benefit::orient_effect(g, polarity));
    let evidence = match &smd {
        Some(g) => Evidence::Continuous { smd: g.clone(), polarity },
        None => Evidence::Unavailable(notes.first().cloned().unwrap_or_default()),
    };
    let verdict = ctx.verdict(format!("{}:continuous", ctx.scale.scale_id), evidence);
    Ok(ContinuousAnalysis {
        visit: ctx.visit.to_string(),
        intervention: int,
        comparator: cmp,
        md,
        smd,
        smd_relevance: oriented.as_ref().map(smd_relevance),
        notes,
        verdict,
    })
}
