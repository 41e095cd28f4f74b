//! Synthetic two-arm PRO trials with known truth and controllable
//! missingness, and Monte Carlo operating characteristics of the pipeline.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benefit::{EventPolarity, Extent};
use crate::completeness::assess_completeness;
use crate::config::StudyConfig;
use crate::dataset::{
    apply_estimand_filter, AnalysisPopulation, Arm, ArmLabels, Direction, EstimandStrategy, Observation, ScaleDomain,
    ScaleMeta, Severity, StudyDesign, Subject, TrialDataset, Visit,
};
use crate::error::{Error, Result};
use crate::estimators::{risk_ratio, TwoByTwo};
use crate::pipeline::{responder_analysis, EndpointContext};
use crate::responder::{resolve_threshold, responder_table_from_series, Sense, ThresholdPolicy};
use crate::scoring::change_from_baseline;

pub const SIM_SCALE_ID: &str = "SIM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    #[default]
    None,
    Mcar,
    Mar,
    Mnar,
}

/// Post-baseline missingness. MCAR uses the per-arm probabilities directly;
/// MAR and MNAR use `logistic(intercept[arm] + slope * z)` where `z` is the
/// previous observed (MAR) or current latent (MNAR) score mapped onto [0, 1]
/// with 1 the worst end of the scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutConfig {
    #[serde(default)]
    pub mechanism: Mechanism,
    /// MCAR probability, (intervention, comparator).
    #[serde(default)]
    pub rate: [f64; 2],
    /// Logistic intercept, (intervention, comparator).
    #[serde(default)]
    pub intercept: [f64; 2],
    #[serde(default)]
    pub slope: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        DropoutConfig { mechanism: Mechanism::None, rate: [0.0, 0.0], intercept: [0.0, 0.0], slope: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimAnalysis {
    #[serde(default = "deterioration")]
    pub sense: Sense,
    #[serde(default)]
    pub threshold_policy: ThresholdPolicy,
    #[serde(default)]
    pub estimand: EstimandStrategy,
}

fn deterioration() -> Sense {
    Sense::Deterioration
}

impl Default for SimAnalysis {
    fn default() -> Self {
        SimAnalysis { sense: Sense::Deterioration, threshold_policy: ThresholdPolicy::default(), estimand: EstimandStrategy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_per_arm: usize,
    /// Planned weeks; the first is the baseline visit.
    pub visit_weeks: Vec<f64>,
    pub scale_min: f64,
    pub scale_max: f64,
    pub direction: Direction,
    #[serde(default = "serious")]
    pub severity: Severity,
    #[serde(default = "symptom")]
    pub domain: ScaleDomain,
    /// Latent mean score per visit, intervention arm.
    pub mean_intervention: Vec<f64>,
    /// Latent mean score per visit, comparator arm.
    pub mean_comparator: Vec<f64>,
    /// Between-subject standard deviation.
    pub sd_subject: f64,
    /// Within-subject, per-visit standard deviation.
    pub sd_visit: f64,
    #[serde(default)]
    pub dropout: DropoutConfig,
    /// Constant death hazard per week, (intervention, comparator).
    #[serde(default)]
    pub death_hazard: [f64; 2],
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Known true responder RR at the last visit. Estimated by Monte Carlo
    /// when absent.
    #[serde(default)]
    pub true_rr: Option<f64>,
    #[serde(default = "truth_n")]
    pub truth_subjects: usize,
    #[serde(default)]
    pub analysis: SimAnalysis,
}

fn serious() -> Severity {
    Severity::Serious
}
fn symptom() -> ScaleDomain {
    ScaleDomain::Symptom
}
fn default_alpha() -> f64 {
    0.05
}
fn one() -> usize {
    1
}
fn truth_n() -> usize {
    200_000
}

fn prob(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::InvalidSimConfig(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSimConfig(m));
        let v = self.visit_weeks.len();
        if self.n_per_arm == 0 {
            return bad("n_per_arm must be positive".into());
        }
        if v < 2 {
            return bad("need a baseline and at least one post-baseline visit".into());
        }
        if self.visit_weeks.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("visit_weeks must be strictly increasing".into());
        }
        if !(self.scale_max > self.scale_min) {
            return bad("scale_max must exceed scale_min".into());
        }
        if self.mean_intervention.len() != v || self.mean_comparator.len() != v {
            return bad(format!("mean trajectories need {v} values"));
        }
        if !(self.sd_subject > 0.0 && self.sd_visit > 0.0) {
            return bad("variances must be positive".into());
        }
        if !self.dropout.rate.iter().all(|&p| prob(p)) {
            return bad("dropout rates must lie in [0, 1]".into());
        }
        if !self.death_hazard.iter().all(|&h| h >= 0.0 && h.is_finite()) {
            return bad("death hazards must be nonnegative".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if let Some(rr) = self.true_rr {
            if !(rr > 0.0) {
                return bad("true_rr must be positive".into());
            }
        }
        if self.truth_subjects == 0 {
            return bad("truth_subjects must be positive".into());
        }
        Ok(())
    }

    pub fn scale(&self) -> ScaleMeta {
        ScaleMeta {
            scale_id: SIM_SCALE_ID.into(),
            min: self.scale_min,
            max: self.scale_max,
            direction: self.direction,
            domain: self.domain,
            severity: Some(self.severity),
            validated: true,
            prespecified_mid: None,
            mid_prespecified_flag: false,
            scoring: None,
            disease_specific: true,
        }
    }

    fn visits(&self) -> Vec<Visit> {
        self.visit_weeks
            .iter()
            .enumerate()
            .map(|(i, &w)| Visit { label: format!("W{w}"), week: w, baseline: i == 0 })
            .collect()
    }

    pub fn design(&self) -> StudyDesign {
        StudyDesign {
            arms: ArmLabels { intervention: "INTERVENTION".into(), comparator: "COMPARATOR".into() },
            visits: self.visits(),
            scales: vec![self.scale()],
            subgroup_factors: vec![],
            data_cut_week: None,
            population: AnalysisPopulation::Randomized,
        }
    }

    /// Study configuration matching the simulated datasets, so that
    /// emitted CSVs can be loaded and assessed.
    pub fn study_config(&self) -> StudyConfig {
        let design = self.design();
        StudyConfig {
            arms: design.arms,
            visits: design.visits,
            scales: design.scales,
            subgroups: vec![],
            estimand: self.analysis.estimand,
            population: AnalysisPopulation::Randomized,
            threshold_policy: self.analysis.threshold_policy.clone(),
            alpha: self.alpha,
            data_cut_week: None,
            analysis: crate::config::AnalysisSettings { senses: vec![self.analysis.sense], ..Default::default() },
        }
    }

    /// Maps a score onto [0, 1] with 1 the worst end.
    fn badness(&self, score: f64) -> f64 {
        let u = (score - self.scale_min) / (self.scale_max - self.scale_min);
        match self.direction {
            Direction::HigherIsWorse => u,
            Direction::HigherIsBetter => 1.0 - u,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generator for replicate `k`: the base seed with stream `k`, so any
/// replicate can be regenerated on its own.
pub fn replicate_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Latent trajectory draws for one subject, shared by both arms when
/// simulating the truth.
struct Draws {
    subject: f64,
    noise: Vec<f64>,
}

fn draw(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Draws {
    let between = Normal::new(0.0, cfg.sd_subject).expect("checked");
    let within = Normal::new(0.0, cfg.sd_visit).expect("checked");
    Draws {
        subject: between.sample(rng),
        noise: cfg.visit_weeks.iter().map(|_| within.sample(rng)).collect(),
    }
}

fn latent(cfg: &SimConfig, arm: Arm, d: &Draws) -> Vec<f64> {
    let means = match arm {
        Arm::Intervention => &cfg.mean_intervention,
        Arm::Comparator => &cfg.mean_comparator,
    };
    means
        .iter()
        .zip(&d.noise)
        .map(|(m, e)| (m + d.subject + e).clamp(cfg.scale_min, cfg.scale_max))
        .collect()
}

fn simulate_with(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<TrialDataset> {
    let visits = cfg.visits();
    let last_week = *cfg.visit_weeks.last().expect("checked");
    let mut subjects = Vec::with_capacity(2 * cfg.n_per_arm);
    for (k, arm) in Arm::BOTH.into_iter().enumerate() {
        for i in 0..cfg.n_per_arm {
            let scores = latent(cfg, arm, &draw(cfg, rng));
            let death_week = if cfg.death_hazard[k] > 0.0 {
                let t = Exp::new(cfg.death_hazard[k]).expect("checked").sample(rng);
                (t <= last_week).then_some(t)
            } else {
                None
            };
            let mut observations = Vec::with_capacity(visits.len());
            let mut previous = scores[0];
            for (v, visit) in visits.iter().enumerate() {
                if death_week.is_some_and(|d| visit.week > d) {
                    break;
                }
                let p_missing = if v == 0 {
                    0.0
                } else {
                    match cfg.dropout.mechanism {
                        Mechanism::None => 0.0,
                        Mechanism::Mcar => cfg.dropout.rate[k],
                        Mechanism::Mar => logistic(cfg.dropout.intercept[k] + cfg.dropout.slope * cfg.badness(previous)),
                        Mechanism::Mnar => logistic(cfg.dropout.intercept[k] + cfg.dropout.slope * cfg.badness(scores[v])),
                    }
                };
                let observed = !(p_missing > 0.0 && rng.random::<f64>() < p_missing);
                if observed {
                    previous = scores[v];
                }
                observations.push(Observation {
                    visit: visit.label.clone(),
                    week: visit.week,
                    scale_id: SIM_SCALE_ID.into(),
                    item_values: BTreeMap::new(),
                    scale_score: observed.then_some(scores[v]),
                });
            }
            subjects.push(Subject {
                id: format!("{}{:05}", if arm == Arm::Intervention { "I" } else { "C" }, i + 1),
                arm,
                randomized: true,
                treated: true,
                discontinuation_week: None,
                discontinuation_reason: None,
                death_week,
                subgroup_values: BTreeMap::new(),
                observations,
            });
        }
    }
    let ds = TrialDataset::new(cfg.design(), subjects)?;
    Ok(apply_estimand_filter(&ds, cfg.analysis.estimand))
}

/// Replicate 0 of the configured trial.
pub fn simulate_trial(cfg: &SimConfig) -> Result<TrialDataset> {
    simulate_replicate(cfg, 0)
}

pub fn simulate_replicate(cfg: &SimConfig, k: u64) -> Result<TrialDataset> {
    cfg.check()?;
    simulate_with(cfg, &mut replicate_rng(cfg.seed, k))
}

/// True responder RR at the last visit without missingness or death:
/// `true_rr` when given, otherwise a Monte Carlo estimate in which both
/// arms share the same random draws.
pub fn true_responder_rr(cfg: &SimConfig) -> Result<f64> {
    cfg.check()?;
    if let Some(rr) = cfg.true_rr {
        return Ok(rr);
    }
    let scale = cfg.scale();
    let decision = resolve_threshold(&scale, &cfg.analysis.threshold_policy);
    let mut rng = replicate_rng(cfg.seed, u64::MAX);
    let v = cfg.visit_weeks.len() - 1;
    let mut hits = [0usize; 2];
    for _ in 0..cfg.truth_subjects {
        let d = draw(cfg, &mut rng);
        for (k, arm) in Arm::BOTH.into_iter().enumerate() {
            let s = latent(cfg, arm, &d);
            let change = crate::scoring::orient_change(s[v] - s[0], cfg.direction, cfg.analysis.sense);
            if change >= decision.threshold_points {
                hits[k] += 1;
            }
        }
    }
    if hits[1] == 0 {
        return Err(Error::InvalidSimConfig("comparator has no responders in the truth simulation".into()));
    }
    Ok(hits[0] as f64 / hits[1] as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub replicate: u64,
    pub responders: [usize; 2],
    pub evaluable: [usize; 2],
    pub rr: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub covered: Option<bool>,
    pub extent: Extent,
    pub return_pass: [bool; 2],
    pub overall_gate_pass: bool,
    pub difference_gate_pass: bool,
    pub gates_pass: bool,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingCharacteristics {
    pub replicates: usize,
    pub true_rr: f64,
    pub estimable: usize,
    pub coverage: f64,
    /// Share of replicates with a minor-or-better call.
    pub minor_or_better_rate: f64,
    pub considerable_or_better_rate: f64,
    pub extent_counts: BTreeMap<String, usize>,
    pub gate_failure_rate: f64,
    pub difference_gate_failure_rate: f64,
    pub overall_gate_failure_rate: f64,
    /// Share of replicates whose return rate passes, (intervention, comparator).
    pub return_pass_rate: [f64; 2],
    pub mean_missing_fraction: f64,
    pub rows: Vec<ReplicateRow>,
}

/// Runs the responder pipeline (threshold, completeness gates, RR, extent)
/// on one replicate.
pub fn analyze_replicate(cfg: &SimConfig, k: u64, true_rr: f64) -> Result<ReplicateRow> {
    let ds = simulate_replicate(cfg, k)?;
    let scale = ds.scale(SIM_SCALE_ID)?.clone();
    let visit = ds.visits().last().expect("checked").label.clone();
    let decision = resolve_threshold(&scale, &cfg.analysis.threshold_policy);
    let series = change_from_baseline(&ds, SIM_SCALE_ID)?;
    let completeness = assess_completeness(&ds, SIM_SCALE_ID, &visit)?;
    let post_cells = series.iter().map(|s| s.points.len()).sum::<usize>();
    let missing = series.iter().flat_map(|s| &s.points).filter(|p| p.score.is_none()).count();
    let missing_fraction = missing as f64 / post_cells.max(1) as f64;
    let ctx = EndpointContext {
        ds: &ds,
        scale: &scale,
        series: &series,
        decision: &decision,
        visit: &visit,
        alpha: cfg.alpha,
        completeness: Some(&completeness),
    };
    let (responders, evaluable, rr, extent) = match responder_analysis(&ctx, cfg.analysis.sense, EventPolarity::for_sense(cfg.analysis.sense)) {
        Ok(a) => (
            [a.table.intervention.responders, a.table.comparator.responders],
            [a.table.intervention.evaluable(), a.table.comparator.evaluable()],
            a.rr,
            a.verdict.extent,
        ),
        Err(_) => ([0, 0], [0, 0], None, Extent::NoneProven),
    };
    let rate = |p: crate::completeness::Proportion| (p.count as u128) * 100 >= 70 * (p.denominator as u128);
    let at_visit = completeness.return_rates.visits.iter().find(|v| v.visit == visit).expect("visit exists");
    Ok(ReplicateRow {
        replicate: k,
        responders,
        evaluable,
        rr: rr.as_ref().map(|e| e.point),
        ci_low: rr.as_ref().map(|e| e.ci_low),
        ci_high: rr.as_ref().map(|e| e.ci_high),
        covered: rr.as_ref().map(|e| e.ci_low <= true_rr && true_rr <= e.ci_high),
        extent,
        return_pass: [rate(at_visit.intervention), rate(at_visit.comparator)],
        overall_gate_pass: completeness.missingness.overall_pass,
        difference_gate_pass: completeness.missingness.difference_pass,
        gates_pass: completeness.pass(),
        missing_fraction,
    })
}

/// Runs `replicates` independent replicates in parallel. Row order and
/// every aggregate are independent of thread scheduling.
pub fn replicate_study(cfg: &SimConfig, replicates: usize) -> Result<OperatingCharacteristics> {
    cfg.check()?;
    if replicates == 0 {
        return Err(Error::InvalidSimConfig("replicates must be at least 1".into()));
    }
    let true_rr = true_responder_rr(cfg)?;
    let rows: Vec<ReplicateRow> = (0..replicates as u64)
        .into_par_iter()
        .map(|k| analyze_replicate(cfg, k, true_rr))
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let share = |f: &dyn Fn(&ReplicateRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
    let estimable = rows.iter().filter(|r| r.covered.is_some()).count();
    let coverage = rows.iter().filter(|r| r.covered == Some(true)).count() as f64 / estimable.max(1) as f64;
    let mut extent_counts = BTreeMap::new();
    for r in &rows {
        *extent_counts.entry(r.extent.as_str().to_string()).or_insert(0) += 1;
    }
    Ok(OperatingCharacteristics {
        replicates,
        true_rr,
        estimable,
        coverage,
        minor_or_better_rate: share(&|r| r.extent.rank() >= 1),
        considerable_or_better_rate: share(&|r| r.extent.rank() >= 2),
        extent_counts,
        gate_failure_rate: share(&|r| !r.gates_pass),
        difference_gate_failure_rate: share(&|r| !r.difference_gate_pass),
        overall_gate_failure_rate: share(&|r| !r.overall_gate_pass),
        return_pass_rate: [share(&|r| r.return_pass[0]), share(&|r| r.return_pass[1])],
        mean_missing_fraction: rows.iter().map(|r| r.missing_fraction).sum::<f64>() / n,
        rows,
    })
}

/// Responder RR of one replicate, without gates or verdict.
pub fn replicate_rr(cfg: &SimConfig, k: u64) -> Result<f64> {
    let ds = simulate_replicate(cfg, k)?;
    let scale = ds.scale(SIM_SCALE_ID)?;
    let decision = resolve_threshold(scale, &cfg.analysis.threshold_policy);
    let series = change_from_baseline(&ds, SIM_SCALE_ID)?;
    let visit = ds.visits().last().expect("checked").label.clone();
    let table = responder_table_from_series(&ds, &series, &visit, &decision, cfg.analysis.sense)?;
    Ok(risk_ratio(&TwoByTwo::from(&table), cfg.alpha)?.point)
}
