//! Course-of-study analyses: MMRM, per-visit trajectories and single-value
//! imputations for sensitivity analyses.

mod mmrm;

use std::io::Write;

use serde::Serialize;

pub use mmrm::{fit_mmrm, CovarianceStructure, MmrmContrast, MmrmFit, MmrmSettings, MMRM_MAX_ITER, MMRM_REL_TOL};

use crate::dataset::{Arm, Observation, Subject, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{t_crit, z_crit};
use crate::responder::{classify_response, ResponseStatus, Sense, ThresholdDecision};
use crate::scoring::change_from_baseline;

#[derive(Debug, Clone, Copy)]
pub enum TrajectoryMode<'a> {
    RawMeans,
    ResponderRates { decision: &'a ThresholdDecision, sense: Sense },
}

impl TrajectoryMode<'_> {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryMode::RawMeans => "raw_means",
            TrajectoryMode::ResponderRates { sense: Sense::Deterioration, .. } => "deterioration_rate",
            TrajectoryMode::ResponderRates { sense: Sense::Improvement, .. } => "improvement_rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub visit: String,
    pub week: f64,
    pub arm: Arm,
    pub n: usize,
    pub estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub mode: String,
}

/// Per-visit, per-arm observed means (t interval) or responder proportions
/// (Wilson interval). Means cover every scheduled visit; rates cover
/// post-baseline visits.
pub fn trajectory_summary(ds: &TrialDataset, scale_id: &str, mode: TrajectoryMode<'_>, alpha: f64) -> Result<Vec<TrajectoryPoint>> {
    ds.scale(scale_id)?;
    let mut out = Vec::new();
    match mode {
        TrajectoryMode::RawMeans => {
            for visit in ds.visits() {
                for arm in Arm::BOTH {
                    let xs: Vec<f64> = ds
                        .analysis_subjects()
                        .filter(|s| s.arm == arm)
                        .filter_map(|s| s.score(scale_id, &visit.label))
                        .collect();
                    let n = xs.len();
                    let (estimate, ci_low, ci_high) = if n == 0 {
                        (None, None, None)
                    } else {
                        let mean = xs.iter().sum::<f64>() / n as f64;
                        if n == 1 {
                            (Some(mean), None, None)
                        } else {
                            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
                            let half = t_crit(alpha, (n - 1) as f64) * sd / (n as f64).sqrt();
                            (Some(mean), Some(mean - half), Some(mean + half))
                        }
                    };
                    out.push(TrajectoryPoint {
                        visit: visit.label.clone(),
                        week: visit.week,
                        arm,
                        n,
                        estimate,
                        ci_low,
                        ci_high,
                        mode: mode.as_str().into(),
                    });
                }
            }
        }
        TrajectoryMode::ResponderRates { decision, sense } => {
            let series = change_from_baseline(ds, scale_id)?;
            let subjects: Vec<&Subject> = ds.analysis_subjects().collect();
            for visit in ds.post_baseline_visits()? {
                for arm in Arm::BOTH {
                    let (mut hits, mut n) = (0usize, 0usize);
                    for (s, subj) in series.iter().zip(&subjects) {
                        if subj.arm != arm {
                            continue;
                        }
                        match classify_response(s, &visit.label, decision, sense) {
                            ResponseStatus::Responder => {
                                hits += 1;
                                n += 1;
                            }
                            ResponseStatus::NonResponder => n += 1,
                            ResponseStatus::NonEvaluable => {}
                        }
                    }
                    let (estimate, ci_low, ci_high) = match wilson(hits, n, alpha) {
                        Some((p, lo, hi)) => (Some(p), Some(lo), Some(hi)),
                        None => (None, None, None),
                    };
                    out.push(TrajectoryPoint {
                        visit: visit.label.clone(),
                        week: visit.week,
                        arm,
                        n,
                        estimate,
                        ci_low,
                        ci_high,
                        mode: mode.as_str().into(),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn wilson(hits: usize, n: usize, alpha: f64) -> Option<(f64, f64, f64)> {
    if n == 0 {
        return None;
    }
    let (k, n) = (hits as f64, n as f64);
    let z = z_crit(alpha);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    Some((p, (centre - half).max(0.0), (centre + half).min(1.0)))
}

/// Writes trajectory points with the header
/// `visit,week,arm,n,estimate,ci_low,ci_high,mode`.
pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], ds: &TrialDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["visit", "week", "arm", "n", "estimate", "ci_low", "ci_high", "mode"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for p in points {
        w.write_record([
            p.visit.clone(),
            p.week.to_string(),
            ds.arms().label(p.arm).to_string(),
            p.n.to_string(),
            opt(p.estimate),
            opt(p.ci_low),
            opt(p.ci_high),
            p.mode.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationStrategy {
    Locf,
    BaselineCarriedForward,
    WorstCase,
}

/// A dataset with filled cells. Never used for primary analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedDataset {
    pub label: &'static str,
    pub strategy: ImputationStrategy,
    pub scale_id: String,
    pub filled: usize,
    pub dataset: TrialDataset,
}

pub const SENSITIVITY_ONLY: &str = "SENSITIVITY-ONLY";

/// Fills missing post-baseline scores of one scale. LOCF and baseline
/// carried forward leave a cell empty when there is nothing to carry;
/// worst case gives the intervention arm the scale's worst value and the
/// comparator its best.
pub fn impute_sensitivity(ds: &TrialDataset, scale_id: &str, strategy: ImputationStrategy) -> Result<ImputedDataset> {
    let scale = ds.scale(scale_id)?.clone();
    let baseline = ds.baseline_visit()?.clone();
    let post: Vec<_> = ds.post_baseline_visits()?.into_iter().cloned().collect();
    let visit_order = |label: &str| ds.visits().iter().position(|v| v.label == label);
    let scale_order = |id: &str| ds.scales().iter().position(|s| s.scale_id == id);
    let mut filled = 0;
    let subjects = ds
        .subjects()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if !ds.in_population(&s) {
                return s;
            }
            let mut last = s.score(scale_id, &baseline.label);
            let base = last;
            for v in &post {
                if let Some(x) = s.score(scale_id, &v.label) {
                    last = Some(x);
                    continue;
                }
                let value = match strategy {
                    ImputationStrategy::Locf => last,
                    ImputationStrategy::BaselineCarriedForward => base,
                    ImputationStrategy::WorstCase => Some(match s.arm {
                        Arm::Intervention => scale.worst(),
                        Arm::Comparator => scale.best(),
                    }),
                };
                let Some(value) = value else { continue };
                filled += 1;
                match s.observations.iter_mut().find(|o| o.visit == v.label && o.scale_id == scale_id) {
                    Some(o) => o.scale_score = Some(value),
                    None => s.observations.push(Observation {
                        visit: v.label.clone(),
                        week: v.week,
                        scale_id: scale_id.to_string(),
                        item_values: Default::default(),
                        scale_score: Some(value),
                    }),
                }
            }
            s.observations.sort_by_key(|o| (visit_order(&o.visit), scale_order(&o.scale_id)));
            s
        })
        .collect();
    Ok(ImputedDataset {
        label: SENSITIVITY_ONLY,
        strategy,
        scale_id: scale_id.to_string(),
        filled,
        dataset: ds.with_subjects(subjects),
    })
}
