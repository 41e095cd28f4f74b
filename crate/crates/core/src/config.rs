//! Study configuration file (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisPopulation, ArmLabels, EstimandStrategy, ScaleMeta, StudyDesign, Visit};
use crate::error::{Error, Result};
use crate::estimators::TieMethod;
use crate::longitudinal::CovarianceStructure;
use crate::responder::{DeathHandling, Sense, ThresholdPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub arms: ArmLabels,
    pub visits: Vec<Visit>,
    pub scales: Vec<ScaleMeta>,
    #[serde(default)]
    pub subgroups: Vec<String>,
    #[serde(default)]
    pub estimand: EstimandStrategy,
    #[serde(default)]
    pub population: AnalysisPopulation,
    #[serde(default)]
    pub threshold_policy: ThresholdPolicy,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Observations after this week are dropped at load.
    #[serde(default)]
    pub data_cut_week: Option<f64>,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryAnalysis {
    #[default]
    Responder,
    TimeToEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventDefinition {
    #[default]
    First,
    Confirmed,
}

/// How death enters time-to-event analyses, per sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeathRules {
    #[serde(default = "event")]
    pub deterioration: DeathHandling,
    #[serde(default = "censor")]
    pub improvement: DeathHandling,
}

fn event() -> DeathHandling {
    DeathHandling::Event
}

fn censor() -> DeathHandling {
    DeathHandling::Censor
}

impl Default for DeathRules {
    fn default() -> Self {
        DeathRules { deterioration: DeathHandling::Event, improvement: DeathHandling::Censor }
    }
}

impl DeathRules {
    pub fn for_sense(&self, sense: Sense) -> DeathHandling {
        match sense {
            Sense::Deterioration => self.deterioration,
            Sense::Improvement => self.improvement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    /// Visit used for responder and continuous analyses; defaults to the
    /// last scheduled visit.
    #[serde(default)]
    pub analysis_visit: Option<String>,
    #[serde(default)]
    pub primary: PrimaryAnalysis,
    #[serde(default)]
    pub event_definition: EventDefinition,
    #[serde(default)]
    pub ties: TieMethod,
    #[serde(default)]
    pub mmrm_structure: CovarianceStructure,
    #[serde(default = "yes")]
    pub baseline_by_visit: bool,
    #[serde(default)]
    pub death: DeathRules,
    #[serde(default = "both_senses")]
    pub senses: Vec<Sense>,
}

fn yes() -> bool {
    true
}

fn both_senses() -> Vec<Sense> {
    vec![Sense::Deterioration, Sense::Improvement]
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            analysis_visit: None,
            primary: PrimaryAnalysis::default(),
            event_definition: EventDefinition::default(),
            ties: TieMethod::default(),
            mmrm_structure: CovarianceStructure::default(),
            baseline_by_visit: true,
            death: DeathRules::default(),
            senses: both_senses(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn design(&self) -> StudyDesign {
        StudyDesign {
            arms: self.arms.clone(),
            visits: self.visits.clone(),
            scales: self.scales.clone(),
            subgroup_factors: self.subgroups.clone(),
            data_cut_week: self.data_cut_week,
            population: self.population,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if let Some(v) = &self.analysis.analysis_visit {
            if !self.visits.iter().any(|x| &x.label == v) {
                return Err(Error::Config(format!("analysis_visit `{v}` is not in the schedule")));
            }
        }
        if self.analysis.senses.is_empty() {
            return Err(Error::Config("analysis.senses must not be empty".into()));
        }
        self.design().check().map_err(|e| match e {
            Error::Design(m) => Error::Config(m),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Direction;

    const MINIMAL: &str = r#"
        [arms]
        intervention = "DRUG"
        comparator = "CTRL"

        [[visits]]
        label = "BL"
        week = 0
        baseline = true

        [[visits]]
        label = "W24"
        week = 24

        [[scales]]
        id = "QL"
        min = 0
        max = 100
        direction = "higher_is_better"
        domain = "hrqol"
        validated = true
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg = StudyConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.estimand, EstimandStrategy::TreatmentPolicy);
        assert_eq!(cfg.population, AnalysisPopulation::Randomized);
        assert_eq!(cfg.scales[0].direction, Direction::HigherIsBetter);
        assert_eq!(cfg.analysis.death.deterioration, DeathHandling::Event);
        assert_eq!(cfg.analysis.death.improvement, DeathHandling::Censor);
        assert!(cfg.analysis.baseline_by_visit);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = StudyConfig::from_toml_str(MINIMAL).unwrap();
        let again = StudyConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_alpha_and_unknown_keys() {
        let bad = format!("alpha = 1.5\n{MINIMAL}");
        assert!(StudyConfig::from_toml_str(&bad).is_err());
        let typo = format!("alhpa = 0.05\n{MINIMAL}");
        assert!(StudyConfig::from_toml_str(&typo).is_err());
    }

    #[test]
    fn rejects_mid_outside_range() {
        let bad = format!("{MINIMAL}\nmid = 150\n");
        assert!(StudyConfig::from_toml_str(&bad).is_err());
    }
}
