//! Subject-level trial data: domain types, validation, estimand filters and
//! design checks.
//!
//! A [`TrialDataset`] is built once (from CSV, the simulator, or an
//! imputation step) and never mutated afterwards. Filters and imputations
//! return new datasets.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, read_dataset, write_dataset, LoadedDataset};

/// Minimum planned treatment/observation duration, in weeks.
pub const MIN_DESIGN_WEEKS: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Intervention,
    Comparator,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Intervention, Arm::Comparator];

    pub fn other(self) -> Arm {
        match self {
            Arm::Intervention => Arm::Comparator,
            Arm::Comparator => Arm::Intervention,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Intervention => "intervention",
            Arm::Comparator => "comparator",
        })
    }
}

/// Labels used for the two arms in the data file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmLabels {
    pub intervention: String,
    pub comparator: String,
}

impl ArmLabels {
    pub fn label(&self, arm: Arm) -> &str {
        match arm {
            Arm::Intervention => &self.intervention,
            Arm::Comparator => &self.comparator,
        }
    }

    pub fn resolve(&self, label: &str) -> Option<Arm> {
        if label == self.intervention {
            Some(Arm::Intervention)
        } else if label == self.comparator {
            Some(Arm::Comparator)
        } else {
            None
        }
    }
}

/// One planned visit. Exactly one visit may be flagged as baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub label: String,
    pub week: f64,
    #[serde(default)]
    pub baseline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsWorse,
    HigherIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Serious,
    NonSerious,
}

/// What a scale measures; decides the outcome category together with
/// [`Severity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleDomain {
    Hrqol,
    Symptom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscontinuationReason {
    AdverseEvent,
    Progression,
    Withdrawal,
    Switch,
    Other,
}

impl DiscontinuationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscontinuationReason::AdverseEvent => "adverse_event",
            DiscontinuationReason::Progression => "progression",
            DiscontinuationReason::Withdrawal => "withdrawal",
            DiscontinuationReason::Switch => "switch",
            DiscontinuationReason::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "adverse_event" => DiscontinuationReason::AdverseEvent,
            "progression" => DiscontinuationReason::Progression,
            "withdrawal" => DiscontinuationReason::Withdrawal,
            "switch" => DiscontinuationReason::Switch,
            "other" => DiscontinuationReason::Other,
            _ => return None,
        })
    }
}

/// Closed score interval `[min, max]` with `max > min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRange {
    pub min: f64,
    pub max: f64,
}

impl ScaleRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::Config(format!("scale range [{min}, {max}] must have max > min")));
        }
        Ok(ScaleRange { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }
}

/// Generic mean-and-rescale scoring rule for multi-item scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScoringRule {
    /// Item names; item `k` is read from column `item_<k>`.
    pub items: Vec<String>,
    pub item_min: f64,
    pub item_max: f64,
    /// Optional per-item weights, same length as `items`.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Score only if at least half of the items are answered.
    #[serde(default = "default_true")]
    pub half_rule: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleMeta {
    #[serde(rename = "id")]
    pub scale_id: String,
    pub min: f64,
    pub max: f64,
    pub direction: Direction,
    #[serde(default = "default_domain")]
    pub domain: ScaleDomain,
    #[serde(default)]
    pub severity: Option<Severity>,
    pub validated: bool,
    #[serde(default, rename = "mid")]
    pub prespecified_mid: Option<f64>,
    #[serde(default, rename = "mid_prespecified")]
    pub mid_prespecified_flag: bool,
    #[serde(default)]
    pub scoring: Option<ItemScoringRule>,
    #[serde(default)]
    pub disease_specific: bool,
}

fn default_domain() -> ScaleDomain {
    ScaleDomain::Symptom
}

impl ScaleMeta {
    pub fn range(&self) -> ScaleRange {
        ScaleRange { min: self.min, max: self.max }
    }

    /// Worst attainable score given the scale direction.
    pub fn worst(&self) -> f64 {
        match self.direction {
            Direction::HigherIsWorse => self.max,
            Direction::HigherIsBetter => self.min,
        }
    }

    pub fn best(&self) -> f64 {
        match self.direction {
            Direction::HigherIsWorse => self.min,
            Direction::HigherIsBetter => self.max,
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        let range = ScaleRange::new(self.min, self.max)
            .map_err(|_| Error::Config(format!("scale `{}`: max must exceed min", self.scale_id)))?;
        if let Some(mid) = self.prespecified_mid {
            if !(mid > 0.0 && mid < range.width()) {
                return Err(Error::Config(format!(
                    "scale `{}`: MID {mid} must lie in (0, {})",
                    self.scale_id,
                    range.width()
                )));
            }
        }
        if let Some(rule) = &self.scoring {
            if rule.items.is_empty() {
                return Err(Error::Config(format!("scale `{}`: scoring rule lists no items", self.scale_id)));
            }
            if !(rule.item_max > rule.item_min) {
                return Err(Error::Config(format!("scale `{}`: item_max must exceed item_min", self.scale_id)));
            }
            if let Some(w) = &rule.weights {
                if w.len() != rule.items.len() || w.iter().any(|&x| !(x > 0.0)) {
                    return Err(Error::Config(format!(
                        "scale `{}`: weights must be positive, one per item",
                        self.scale_id
                    )));
                }
            }
            let unique: BTreeSet<_> = rule.items.iter().collect();
            if unique.len() != rule.items.len() {
                return Err(Error::Config(format!("scale `{}`: duplicate item names", self.scale_id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub visit: String,
    pub week: f64,
    pub scale_id: String,
    pub item_values: BTreeMap<String, Option<f64>>,
    pub scale_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub arm: Arm,
    pub randomized: bool,
    pub treated: bool,
    pub discontinuation_week: Option<f64>,
    pub discontinuation_reason: Option<DiscontinuationReason>,
    pub death_week: Option<f64>,
    pub subgroup_values: BTreeMap<String, String>,
    pub observations: Vec<Observation>,
}

impl Subject {
    pub fn observation(&self, scale_id: &str, visit: &str) -> Option<&Observation> {
        self.observations
            .iter()
            .find(|o| o.scale_id == scale_id && o.visit == visit)
    }

    /// Observed (non-missing) score at a visit.
    pub fn score(&self, scale_id: &str, visit: &str) -> Option<f64> {
        self.observation(scale_id, visit).and_then(|o| o.scale_score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandStrategy {
    #[default]
    TreatmentPolicy,
    WhileOnTreatment,
    CompositeDeathAsEvent,
}

/// Which subjects form the analysis set and its return-rate denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisPopulation {
    #[default]
    Randomized,
    Treated,
}

/// Everything about a study that is not per-subject data.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyDesign {
    pub arms: ArmLabels,
    pub visits: Vec<Visit>,
    pub scales: Vec<ScaleMeta>,
    pub subgroup_factors: Vec<String>,
    pub data_cut_week: Option<f64>,
    pub population: AnalysisPopulation,
}

impl StudyDesign {
    pub(crate) fn check(&self) -> Result<()> {
        if self.arms.intervention == self.arms.comparator {
            return Err(Error::Design("exactly two distinct arm labels are required".into()));
        }
        if self.visits.is_empty() {
            return Err(Error::Design("visit schedule is empty".into()));
        }
        for pair in self.visits.windows(2) {
            if !(pair[1].week > pair[0].week) {
                return Err(Error::Design(format!(
                    "visit schedule must be strictly increasing in week (`{}` at {} then `{}` at {})",
                    pair[0].label, pair[0].week, pair[1].label, pair[1].week
                )));
            }
        }
        let labels: BTreeSet<_> = self.visits.iter().map(|v| &v.label).collect();
        if labels.len() != self.visits.len() {
            return Err(Error::Design("duplicate visit labels".into()));
        }
        if self.visits.iter().filter(|v| v.baseline).count() > 1 {
            return Err(Error::Design("more than one baseline visit".into()));
        }
        let ids: BTreeSet<_> = self.scales.iter().map(|s| &s.scale_id).collect();
        if ids.len() != self.scales.len() {
            return Err(Error::Design("duplicate scale ids".into()));
        }
        for scale in &self.scales {
            scale.check()?;
        }
        Ok(())
    }
}

/// Validated, immutable subject-level trial data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    design: StudyDesign,
    estimand: EstimandStrategy,
    subjects: Vec<Subject>,
}

impl TrialDataset {
    /// Assembles a dataset, checking every structural invariant.
    pub fn new(design: StudyDesign, subjects: Vec<Subject>) -> Result<Self> {
        design.check()?;
        let mut issues = Vec::new();
        let mut seen_ids = BTreeSet::new();
        for s in &subjects {
            if !seen_ids.insert(s.id.as_str()) {
                issues.push(format!("duplicate subject `{}`", s.id));
            }
            if s.discontinuation_week.is_some() != s.discontinuation_reason.is_some() {
                issues.push(format!(
                    "subject `{}`: discontinuation week and reason must be given together",
                    s.id
                ));
            }
            for w in [s.discontinuation_week, s.death_week].into_iter().flatten() {
                if !(w >= 0.0) {
                    issues.push(format!("subject `{}`: negative event week {w}", s.id));
                }
            }
            for factor in &design.subgroup_factors {
                if !s.subgroup_values.contains_key(factor) {
                    issues.push(format!("subject `{}`: no level for subgroup `{factor}`", s.id));
                }
            }
            let mut keys = BTreeSet::new();
            for o in &s.observations {
                if !keys.insert((o.visit.as_str(), o.scale_id.as_str())) {
                    issues.push(format!(
                        "subject `{}`: duplicate observation for visit `{}` scale `{}`",
                        s.id, o.visit, o.scale_id
                    ));
                }
                if !design.visits.iter().any(|v| v.label == o.visit) {
                    issues.push(format!("subject `{}`: unknown visit `{}`", s.id, o.visit));
                }
                match design.scales.iter().find(|m| m.scale_id == o.scale_id) {
                    None => issues.push(format!("subject `{}`: unknown scale `{}`", s.id, o.scale_id)),
                    Some(meta) => {
                        if let Some(x) = o.scale_score {
                            if !meta.range().contains(x) {
                                issues.push(format!(
                                    "subject `{}`: score {x} outside [{}, {}] for scale `{}`",
                                    s.id, meta.min, meta.max, meta.scale_id
                                ));
                            }
                        }
                    }
                }
                if let Some(d) = s.death_week {
                    if o.week > d {
                        issues.push(format!(
                            "subject `{}`: observation at week {} after death at week {d}",
                            s.id, o.week
                        ));
                    }
                }
            }
        }
        if !issues.is_empty() {
            return Err(Error::Design(issues.join("; ")));
        }
        Ok(TrialDataset {
            design,
            estimand: EstimandStrategy::TreatmentPolicy,
            subjects,
        })
    }

    pub fn design(&self) -> &StudyDesign {
        &self.design
    }

    pub fn arms(&self) -> &ArmLabels {
        &self.design.arms
    }

    pub fn visits(&self) -> &[Visit] {
        &self.design.visits
    }

    pub fn scales(&self) -> &[ScaleMeta] {
        &self.design.scales
    }

    /// All subjects, including those outside the analysis population.
    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn estimand(&self) -> EstimandStrategy {
        self.estimand
    }

    pub fn scale(&self, scale_id: &str) -> Result<&ScaleMeta> {
        self.design
            .scales
            .iter()
            .find(|s| s.scale_id == scale_id)
            .ok_or_else(|| Error::UnknownScale(scale_id.to_string()))
    }

    pub fn visit(&self, label: &str) -> Result<&Visit> {
        self.design
            .visits
            .iter()
            .find(|v| v.label == label)
            .ok_or_else(|| Error::UnknownVisit(label.to_string()))
    }

    pub fn baseline_visit(&self) -> Result<&Visit> {
        self.design
            .visits
            .iter()
            .find(|v| v.baseline)
            .ok_or(Error::NoBaselineVisit)
    }

    /// Scheduled visits after baseline, in schedule order.
    pub fn post_baseline_visits(&self) -> Result<Vec<&Visit>> {
        let baseline = self.baseline_visit()?;
        Ok(self
            .design
            .visits
            .iter()
            .filter(|v| v.week > baseline.week)
            .collect())
    }

    pub fn in_population(&self, s: &Subject) -> bool {
        match self.design.population {
            AnalysisPopulation::Randomized => s.randomized,
            AnalysisPopulation::Treated => s.treated,
        }
    }

    /// Subjects in the analysis set, in file order.
    pub fn analysis_subjects(&self) -> impl Iterator<Item = &Subject> {
        self.subjects.iter().filter(move |s| self.in_population(s))
    }

    pub fn arm_size(&self, arm: Arm) -> usize {
        self.analysis_subjects().filter(|s| s.arm == arm).count()
    }

    /// Restricts the dataset to subjects with the given subgroup level.
    pub fn subgroup(&self, factor: &str, level: &str) -> TrialDataset {
        TrialDataset {
            design: self.design.clone(),
            estimand: self.estimand,
            subjects: self
                .subjects
                .iter()
                .filter(|s| s.subgroup_values.get(factor).map(String::as_str) == Some(level))
                .cloned()
                .collect(),
        }
    }

    /// Levels observed in the data for a subgroup factor, sorted.
    pub fn subgroup_levels(&self, factor: &str) -> Vec<String> {
        let levels: BTreeSet<&String> = self
            .subjects
            .iter()
            .filter_map(|s| s.subgroup_values.get(factor))
            .collect();
        levels.into_iter().cloned().collect()
    }

    /// Same trial with the roles of the two arms exchanged.
    pub fn with_swapped_arms(&self) -> TrialDataset {
        let mut design = self.design.clone();
        std::mem::swap(&mut design.arms.intervention, &mut design.arms.comparator);
        TrialDataset {
            design,
            estimand: self.estimand,
            subjects: self
                .subjects
                .iter()
                .map(|s| Subject { arm: s.arm.other(), ..s.clone() })
                .collect(),
        }
    }

    pub(crate) fn with_subjects(&self, subjects: Vec<Subject>) -> TrialDataset {
        TrialDataset {
            design: self.design.clone(),
            estimand: self.estimand,
            subjects,
        }
    }
}

/// Applies an estimand strategy as an analysis-population filter.
///
/// `WhileOnTreatment` drops observations strictly after the discontinuation
/// week. `CompositeDeathAsEvent` keeps every observation and marks the
/// dataset so responder and time-to-event analyses count death as the worst
/// outcome.
pub fn apply_estimand_filter(ds: &TrialDataset, strategy: EstimandStrategy) -> TrialDataset {
    let subjects = match strategy {
        EstimandStrategy::WhileOnTreatment => ds
            .subjects
            .iter()
            .map(|s| {
                let mut s = s.clone();
                if let Some(stop) = s.discontinuation_week {
                    s.observations.retain(|o| o.week <= stop);
                }
                s
            })
            .collect(),
        EstimandStrategy::TreatmentPolicy | EstimandStrategy::CompositeDeathAsEvent => ds.subjects.clone(),
    };
    TrialDataset {
        design: ds.design.clone(),
        estimand: strategy,
        subjects,
    }
}

/// Design-level findings that do not block loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignWarning {
    ShortSchedule { last_week: String },
    UnvalidatedScale { scale_id: String },
    NoDiseaseSpecificScale,
}

impl fmt::Display for DesignWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignWarning::ShortSchedule { last_week } => write!(
                f,
                "last planned visit at week {last_week} is shorter than the {MIN_DESIGN_WEEKS}-week minimum"
            ),
            DesignWarning::UnvalidatedScale { scale_id } => write!(
                f,
                "scale `{scale_id}` is not validated; endpoint will be disregarded"
            ),
            DesignWarning::NoDiseaseSpecificScale => {
                f.write_str("no disease-specific instrument; a disease-specific and a generic instrument are expected")
            }
        }
    }
}

pub fn validate_design(ds: &TrialDataset) -> Vec<DesignWarning> {
    let mut warnings = Vec::new();
    if let Some(last) = ds.visits().last() {
        if last.week < MIN_DESIGN_WEEKS {
            warnings.push(DesignWarning::ShortSchedule { last_week: last.week.to_string() });
        }
    }
    for s in ds.scales() {
        if !s.validated {
            warnings.push(DesignWarning::UnvalidatedScale { scale_id: s.scale_id.clone() });
        }
    }
    if !ds.scales().iter().any(|s| s.disease_specific) {
        warnings.push(DesignWarning::NoDiseaseSpecificScale);
    }
    warnings
}
