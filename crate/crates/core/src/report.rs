//! Assessment orchestration and report output.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::benefit::{derive_endpoint_verdict, BenefitVerdict, EndpointInputs, EndpointKind, EventPolarity, Evidence, Extent, OutcomeCategory};
use crate::completeness::{assess_completeness, dropout_summary, CompletenessReport, DropoutSummary};
use crate::config::{EventDefinition, PrimaryAnalysis, StudyConfig};
use crate::dataset::{load_dataset, read_dataset, validate_design, Arm, DesignWarning, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{risk_ratio, EffectEstimate, KaplanMeier, Measure, TwoByTwo};
use crate::longitudinal::{fit_mmrm, trajectory_summary, write_trajectory_csv, MmrmFit, MmrmSettings, TrajectoryMode, TrajectoryPoint};
use crate::pipeline::{
    continuous_analysis, responder_analysis, time_to_event_analysis, ContinuousAnalysis, EndpointContext, ResponderAnalysis,
    TimeToEventAnalysis,
};
use crate::responder::{resolve_threshold, responder_table_from_series, EventKind, ResponderTable, Sense, ThresholdDecision};
use crate::scoring::change_from_baseline;
use crate::simulator::{replicate_study, OperatingCharacteristics, SimConfig};

pub const TOOL: &str = concat!("pro-benefit ", env!("CARGO_PKG_VERSION"));
pub const FULL_POPULATION: &str = "full";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisError {
    pub population: String,
    pub scale_id: String,
    pub analysis: String,
    pub message: String,
}

/// Responder analysis with a MID that was not accepted. Shown for
/// transparency; never adjudicated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplementaryResponder {
    pub threshold_points: f64,
    pub table: ResponderTable,
    pub rr: Option<EffectEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SenseReport {
    pub sense: Sense,
    pub responder: Option<ResponderAnalysis>,
    pub supplementary_rejected_mid: Option<SupplementaryResponder>,
    pub time_to_event: Option<TimeToEventAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointVerdict {
    pub endpoint_id: String,
    pub analysis: String,
    pub sense: Option<Sense>,
    pub verdict: BenefitVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleReport {
    pub scale_id: String,
    pub threshold: ThresholdDecision,
    pub completeness: Option<CompletenessReport>,
    pub senses: Vec<SenseReport>,
    pub continuous: Option<ContinuousAnalysis>,
    pub mmrm: Option<MmrmFit>,
    pub endpoints: Vec<EndpointVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationReport {
    pub label: String,
    pub factor: Option<String>,
    pub level: Option<String>,
    /// (intervention, comparator)
    pub n: [usize; 2],
    pub dropout: DropoutSummary,
    pub scales: Vec<ScaleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtentRow {
    pub endpoint_id: String,
    pub category: Option<OutcomeCategory>,
    pub extent: Extent,
    pub measure: Option<Measure>,
    pub point: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedEndpoint {
    pub endpoint_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssessmentReport {
    pub tool: String,
    pub arms: [String; 2],
    pub estimand: crate::dataset::EstimandStrategy,
    pub population: crate::dataset::AnalysisPopulation,
    pub alpha: f64,
    pub analysis_visit: String,
    pub primary_analysis: PrimaryAnalysis,
    pub load_warnings: Vec<String>,
    pub design_warnings: Vec<String>,
    pub thresholds: Vec<ThresholdDecision>,
    pub extent_summary: Vec<ExtentRow>,
    pub excluded_from_summary: Vec<ExcludedEndpoint>,
    pub populations: Vec<PopulationReport>,
    pub errors: Vec<AnalysisError>,
}

impl AssessmentReport {
    /// Stable, pretty-printed JSON.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Output(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Human-readable summary built only from fields of the report.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "PRO benefit assessment ({})", self.tool);
        let _ = writeln!(out, "intervention {} vs comparator {}", self.arms[0], self.arms[1]);
        let _ = writeln!(
            out,
            "estimand {}, population {}, analysis visit {}, alpha {}",
            serde_plain(&self.estimand),
            serde_plain(&self.population),
            self.analysis_visit,
            self.alpha
        );
        for w in self.load_warnings.iter().chain(&self.design_warnings) {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(out, "\nThresholds");
        for t in &self.thresholds {
            let _ = writeln!(out, "  {}: {} points (scenario {}) - {}", t.scale_id, t.threshold_points, t.scenario, t.rationale);
        }
        let _ = writeln!(out, "\nExtent of added benefit ({FULL_POPULATION} population)");
        if self.extent_summary.is_empty() {
            let _ = writeln!(out, "  none");
        }
        for r in &self.extent_summary {
            let _ = write!(out, "  {}: {}", r.endpoint_id, r.extent.as_str());
            if let (Some(m), Some(p), Some(lo), Some(hi)) = (r.measure, r.point, r.ci_low, r.ci_high) {
                let _ = write!(out, " ({} {} [{}, {}])", m.as_str(), p, lo, hi);
            }
            let _ = writeln!(out);
        }
        for e in &self.excluded_from_summary {
            let _ = writeln!(out, "  {}: excluded - {}", e.endpoint_id, e.reason);
        }
        let _ = writeln!(out, "\nPopulations");
        for p in &self.populations {
            let _ = writeln!(out, "  {}: n {} / {}", p.label, p.n[0], p.n[1]);
            for s in &p.scales {
                for e in &s.endpoints {
                    let _ = writeln!(out, "    {}: {}", e.endpoint_id, e.verdict.extent.as_str());
                }
            }
        }
        let _ = writeln!(out, "\nErrors: {}", self.errors.len());
        for e in &self.errors {
            let _ = writeln!(out, "  [{}] {} {}: {}", e.population, e.scale_id, e.analysis, e.message);
        }
        out
    }
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// One Kaplan-Meier curve point for the plot-ready CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct KmRow {
    pub population: String,
    pub scale_id: String,
    pub kind: EventKind,
    pub arm: String,
    pub curve: KaplanMeier,
}

/// The report plus the plot-ready series that go to CSV files.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentOutput {
    pub report: AssessmentReport,
    pub km: Vec<KmRow>,
    /// Full-population trajectories per scale.
    pub trajectories: Vec<(String, Vec<TrajectoryPoint>)>,
    pub dataset: TrialDataset,
}

struct Population {
    label: String,
    factor: Option<String>,
    level: Option<String>,
    ds: TrialDataset,
}

fn populations(ds: &TrialDataset, config: &StudyConfig) -> Vec<Population> {
    let mut out = vec![Population { label: FULL_POPULATION.into(), factor: None, level: None, ds: ds.clone() }];
    for factor in &config.subgroups {
        for level in ds.subgroup_levels(factor) {
            out.push(Population {
                label: format!("{factor}={level}"),
                factor: Some(factor.clone()),
                level: Some(level.clone()),
                ds: ds.subgroup(factor, &level),
            });
        }
    }
    out
}

/// Primary-analysis verdict when the analysis itself could not run.
fn unavailable_verdict(
    endpoint_id: String,
    ds: &TrialDataset,
    scale_id: &str,
    completeness: Option<&CompletenessReport>,
    decision: &ThresholdDecision,
    reason: String,
) -> Result<BenefitVerdict> {
    let scale = ds.scale(scale_id)?;
    Ok(derive_endpoint_verdict(EndpointInputs {
        endpoint_id,
        scale,
        kind: EndpointKind::of_scale(scale),
        completeness,
        threshold: Some(decision),
        evidence: Evidence::Unavailable(reason),
    }))
}

fn analyze_scale(
    pop: &Population,
    scale_id: &str,
    decision: &ThresholdDecision,
    config: &StudyConfig,
    visit: &str,
) -> Result<(ScaleReport, Vec<KmRow>, Vec<AnalysisError>)> {
    let ds = &pop.ds;
    let scale = ds.scale(scale_id)?.clone();
    let mut errors = Vec::new();
    let mut fail = |analysis: &str, e: Error| {
        errors.push(AnalysisError {
            population: pop.label.clone(),
            scale_id: scale_id.to_string(),
            analysis: analysis.to_string(),
            message: e.to_string(),
        })
    };
    let series = change_from_baseline(ds, scale_id)?;
    let completeness = assess_completeness(ds, scale_id, visit).map_err(|e| fail("completeness", e)).ok();
    let ctx = EndpointContext {
        ds,
        scale: &scale,
        series: &series,
        decision,
        visit,
        alpha: config.alpha,
        completeness: completeness.as_ref(),
    };
    let settings = &config.analysis;
    let mut senses = Vec::new();
    let mut endpoints = Vec::new();
    let mut km = Vec::new();
    let continuous = continuous_analysis(&ctx, EventPolarity::for_direction(scale.direction))
        .map_err(|e| fail("continuous", e))
        .ok();
    for &sense in &settings.senses {
        let polarity = EventPolarity::for_sense(sense);
        let responder = responder_analysis(&ctx, sense, polarity);
        let supplementary = if config.threshold_policy.report_rejected_mid {
            decision.supplementary().and_then(|sup| {
                responder_table_from_series(ds, &series, visit, &sup, sense)
                    .map(|table| SupplementaryResponder {
                        threshold_points: sup.threshold_points,
                        rr: risk_ratio(&TwoByTwo::from(&table), config.alpha).ok(),
                        table,
                    })
                    .ok()
            })
        } else {
            None
        };
        let kind = EventKind::new(sense, settings.event_definition == EventDefinition::Confirmed);
        let tte = time_to_event_analysis(&ctx, kind, settings.death.for_sense(sense), settings.ties, polarity);
        if !decision.continuous_only {
            let (analysis, verdict) = match settings.primary {
                PrimaryAnalysis::Responder => ("responder", responder.as_ref().map(|r| r.verdict.clone())),
                PrimaryAnalysis::TimeToEvent => ("time_to_event", tte.as_ref().map(|t| t.verdict.clone())),
            };
            let endpoint_id = format!("{scale_id}:{}:{analysis}", sense.as_str());
            let verdict = match verdict {
                Ok(v) => v,
                Err(e) => unavailable_verdict(endpoint_id.clone(), ds, scale_id, completeness.as_ref(), decision, e.to_string())?,
            };
            endpoints.push(EndpointVerdict { endpoint_id, analysis: analysis.into(), sense: Some(sense), verdict });
        }
        let responder = responder.map_err(|e| fail(&format!("responder:{}", sense.as_str()), e)).ok();
        let tte = tte.map_err(|e| fail(&format!("time_to_event:{}", kind.as_str()), e)).ok();
        if let Some(t) = &tte {
            for (arm, curve) in &t.curves {
                km.push(KmRow {
                    population: pop.label.clone(),
                    scale_id: scale_id.to_string(),
                    kind,
                    arm: ds.arms().label(*arm).to_string(),
                    curve: curve.clone(),
                });
            }
        }
        senses.push(SenseReport { sense, responder, supplementary_rejected_mid: supplementary, time_to_event: tte });
    }
    if decision.continuous_only {
        let endpoint_id = format!("{scale_id}:continuous");
        let verdict = match &continuous {
            Some(c) => c.verdict.clone(),
            None => unavailable_verdict(endpoint_id.clone(), ds, scale_id, completeness.as_ref(), decision, "continuous analysis failed".into())?,
        };
        endpoints.push(EndpointVerdict { endpoint_id, analysis: "continuous".into(), sense: None, verdict });
    }
    let mmrm_settings = MmrmSettings { baseline_by_visit: settings.baseline_by_visit, alpha: config.alpha, ..Default::default() };
    let mmrm = fit_mmrm(ds, scale_id, settings.mmrm_structure, &mmrm_settings)
        .map_err(|e| fail("mmrm", e))
        .ok();
    Ok((
        ScaleReport {
            scale_id: scale_id.to_string(),
            threshold: decision.clone(),
            completeness,
            senses,
            continuous,
            mmrm,
            endpoints,
        },
        km,
        errors,
    ))
}

/// Runs every analysis for every scale and sense in the full population
/// and in each subgroup level. Failures of individual analyses are
/// recorded in `errors`; the report is still produced.
pub fn run_assessment(ds: &TrialDataset, config: &StudyConfig, load_warnings: Vec<String>) -> Result<AssessmentOutput> {
    let visit = match &config.analysis.analysis_visit {
        Some(v) => ds.visit(v)?.label.clone(),
        None => ds.visits().last().ok_or(Error::NoBaselineVisit)?.label.clone(),
    };
    ds.baseline_visit()?;
    let thresholds: Vec<ThresholdDecision> = ds.scales().iter().map(|s| resolve_threshold(s, &config.threshold_policy)).collect();
    let pops = populations(ds, config);
    let jobs: Vec<(usize, usize)> = (0..pops.len()).flat_map(|p| (0..thresholds.len()).map(move |s| (p, s))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(p, s)| analyze_scale(&pops[p], &thresholds[s].scale_id, &thresholds[s], config, &visit))
        .collect::<Result<_>>()?;

    let mut populations_out: Vec<PopulationReport> = pops
        .iter()
        .map(|p| PopulationReport {
            label: p.label.clone(),
            factor: p.factor.clone(),
            level: p.level.clone(),
            n: [p.ds.arm_size(Arm::Intervention), p.ds.arm_size(Arm::Comparator)],
            dropout: dropout_summary(&p.ds),
            scales: Vec::new(),
        })
        .collect();
    let mut km = Vec::new();
    let mut errors = Vec::new();
    for (&(p, _), (scale_report, rows, errs)) in jobs.iter().zip(results) {
        populations_out[p].scales.push(scale_report);
        km.extend(rows);
        errors.extend(errs);
    }

    let mut extent_summary = Vec::new();
    let mut excluded = Vec::new();
    for s in &populations_out[0].scales {
        let validated = ds.scale(&s.scale_id)?.validated;
        for e in &s.endpoints {
            if !validated {
                excluded.push(ExcludedEndpoint {
                    endpoint_id: e.endpoint_id.clone(),
                    reason: "instrument not validated".into(),
                });
                continue;
            }
            let est = e.verdict.driving_estimate.as_ref();
            extent_summary.push(ExtentRow {
                endpoint_id: e.endpoint_id.clone(),
                category: e.verdict.category,
                extent: e.verdict.extent,
                measure: est.map(|x| x.measure),
                point: est.map(|x| x.point),
                ci_low: est.map(|x| x.ci_low),
                ci_high: est.map(|x| x.ci_high),
            });
        }
    }

    let mut trajectories = Vec::new();
    for (scale, decision) in ds.scales().iter().zip(&thresholds) {
        let mut points = trajectory_summary(ds, &scale.scale_id, TrajectoryMode::RawMeans, config.alpha)?;
        for &sense in &config.analysis.senses {
            points.extend(trajectory_summary(ds, &scale.scale_id, TrajectoryMode::ResponderRates { decision, sense }, config.alpha)?);
        }
        trajectories.push((scale.scale_id.clone(), points));
    }

    let report = AssessmentReport {
        tool: TOOL.into(),
        arms: [ds.arms().intervention.clone(), ds.arms().comparator.clone()],
        estimand: ds.estimand(),
        population: config.population,
        alpha: config.alpha,
        analysis_visit: visit,
        primary_analysis: config.analysis.primary,
        load_warnings,
        design_warnings: validate_design(ds).iter().map(DesignWarning::to_string).collect(),
        thresholds,
        extent_summary,
        excluded_from_summary: excluded,
        populations: populations_out,
        errors,
    };
    Ok(AssessmentOutput { report, km, trajectories, dataset: ds.clone() })
}

/// Loads both files and runs the assessment.
pub fn assess_files(data: &Path, config: &Path) -> Result<AssessmentOutput> {
    let loaded = load_dataset(data, config)?;
    let mut warnings = loaded.warnings;
    if loaded.dropped_after_cut > 0 {
        warnings.push(format!("{} observation(s) after the data cut dropped", loaded.dropped_after_cut));
    }
    run_assessment(&loaded.dataset, &loaded.config, warnings)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn write_km_csv<W: std::io::Write>(rows: &[KmRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "population", "scale_id", "event", "arm", "time", "n_risk", "n_event", "n_censor", "survival", "ci_low", "ci_high",
    ])?;
    for r in rows {
        for s in &r.curve.steps {
            w.write_record([
                r.population.clone(),
                r.scale_id.clone(),
                r.kind.as_str().to_string(),
                r.arm.clone(),
                s.time.to_string(),
                s.n_risk.to_string(),
                s.n_event.to_string(),
                s.n_censor.to_string(),
                s.survival.to_string(),
                s.ci_low.to_string(),
                s.ci_high.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}

/// Writes `report.json`, `summary.txt`, `km.csv` and one
/// `trajectory_<scale>.csv` per scale into `dir`.
pub fn write_assessment(output: &AssessmentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, output.report.to_json()?).map_err(io_err(&report_path))?;
    let summary_path = dir.join("summary.txt");
    std::fs::write(&summary_path, output.report.summary()).map_err(io_err(&summary_path))?;
    let km_path = dir.join("km.csv");
    let file = std::fs::File::create(&km_path).map_err(io_err(&km_path))?;
    write_km_csv(&output.km, file)?;
    for (scale_id, points) in &output.trajectories {
        let path = dir.join(format!("trajectory_{scale_id}.csv"));
        let file = std::fs::File::create(&path).map_err(io_err(&path))?;
        write_trajectory_csv(points, &output.dataset, file)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validation {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Loads the data against the configuration and checks the design. Only
/// load failures count as errors.
pub fn validate(data: &Path, config: &Path) -> Validation {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    match StudyConfig::from_path(config) {
        Err(e) => errors.push(e.to_string()),
        Ok(cfg) => match std::fs::File::open(data).map_err(io_err(data)) {
            Err(e) => errors.push(e.to_string()),
            Ok(file) => match read_dataset(file, cfg.design()) {
                Err(Error::Load(issues)) => errors.extend(issues.0.iter().map(|i| i.to_string())),
                Err(e) => errors.push(e.to_string()),
                Ok((ds, load_warnings, dropped)) => {
                    warnings.extend(load_warnings);
                    if dropped > 0 {
                        warnings.push(format!("{dropped} observation(s) after the data cut dropped"));
                    }
                    warnings.extend(validate_design(&ds).iter().map(DesignWarning::to_string));
                }
            },
        },
    }
    Validation { errors, warnings }
}

/// Operating characteristics for the configured number of replicates.
pub fn run_simulation(cfg: &SimConfig) -> Result<OperatingCharacteristics> {
    replicate_study(cfg, cfg.replicates)
}

pub fn write_oc_csv<W: std::io::Write>(oc: &OperatingCharacteristics, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "replicate", "responders_intervention", "evaluable_intervention", "responders_comparator", "evaluable_comparator",
        "rr", "ci_low", "ci_high", "covered", "extent", "gates_pass", "missing_fraction",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in &oc.rows {
        w.write_record([
            r.replicate.to_string(),
            r.responders[0].to_string(),
            r.evaluable[0].to_string(),
            r.responders[1].to_string(),
            r.evaluable[1].to_string(),
            opt(r.rr),
            opt(r.ci_low),
            opt(r.ci_high),
            r.covered.map(|c| c.to_string()).unwrap_or_default(),
            r.extent.as_str().to_string(),
            r.gates_pass.to_string(),
            r.missing_fraction.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}

/// Writes `operating_characteristics.csv` (one row per replicate),
/// `operating_characteristics.json`, and replicate 0 as `replicate_0.csv`
/// with a matching `study.toml`.
pub fn write_simulation(cfg: &SimConfig, oc: &OperatingCharacteristics, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("operating_characteristics.csv");
    write_oc_csv(oc, std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?)?;
    let json_path = dir.join("operating_characteristics.json");
    let mut json = serde_json::to_string_pretty(oc).map_err(|e| Error::Output(e.to_string()))?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
    let data_path = dir.join("replicate_0.csv");
    let ds = crate::simulator::simulate_trial(cfg)?;
    crate::dataset::write_dataset(&ds, std::fs::File::create(&data_path).map_err(io_err(&data_path))?)?;
    let study_path = dir.join("study.toml");
    std::fs::write(&study_path, cfg.study_config().to_toml_string()?).map_err(io_err(&study_path))?;
    Ok(())
}
