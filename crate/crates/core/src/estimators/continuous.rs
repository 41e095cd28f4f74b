use serde::Serialize;

use super::{t_crit, z_crit, EffectEstimate, Measure, Orientation};
use crate::error::{Error, Result};

/// Hedges' g bounds inside (-0.2, 0.2) are not considered relevant.
pub const SMD_IRRELEVANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl ArmSummary {
    /// Mean and sample standard deviation of raw values.
    pub fn from_values(values: &[f64]) -> ArmSummary {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        ArmSummary { n, mean, sd }
    }
}

fn need_two(a: &ArmSummary, b: &ArmSummary, what: &str) -> Result<()> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::InsufficientData(format!("{what} needs at least 2 subjects per arm")));
    }
    Ok(())
}

/// Intervention minus comparator mean, Welch interval.
pub fn mean_difference(intervention: &ArmSummary, comparator: &ArmSummary, alpha: f64) -> Result<EffectEstimate> {
    need_two(intervention, comparator, "mean difference")?;
    let v1 = intervention.sd.powi(2) / intervention.n as f64;
    let v2 = comparator.sd.powi(2) / comparator.n as f64;
    let se = (v1 + v2).sqrt();
    if !(se > 0.0) {
        return Err(Error::DegenerateVariance("both arms have zero variance".into()));
    }
    let df = (v1 + v2).powi(2)
        / (v1.powi(2) / (intervention.n - 1) as f64 + v2.powi(2) / (comparator.n - 1) as f64);
    let md = intervention.mean - comparator.mean;
    let half = t_crit(alpha, df) * se;
    Ok(EffectEstimate {
        measure: Measure::MD,
        point: md,
        ci_low: md - half,
        ci_high: md + half,
        alpha,
        n_per_arm: [intervention.n, comparator.n],
        orientation: Orientation::Raw,
        continuity_corrected: false,
    })
}

/// Pooled-SD standardized difference with the small-sample factor
/// `J = 1 - 3 / (4 (n1 + n2 - 2) - 1)` and the large-sample variance
/// `J^2 [(n1 + n2) / (n1 n2) + d^2 / (2 (n1 + n2))]`.
pub fn hedges_g(intervention: &ArmSummary, comparator: &ArmSummary, alpha: f64) -> Result<EffectEstimate> {
    need_two(intervention, comparator, "Hedges' g")?;
    let (n1, n2) = (intervention.n as f64, comparator.n as f64);
    let pooled = (((n1 - 1.0) * intervention.sd.powi(2) + (n2 - 1.0) * comparator.sd.powi(2)) / (n1 + n2 - 2.0)).sqrt();
    if !(pooled > 0.0) {
        return Err(Error::DegenerateVariance("pooled standard deviation is zero".into()));
    }
    let d = (intervention.mean - comparator.mean) / pooled;
    let j = 1.0 - 3.0 / (4.0 * (n1 + n2 - 2.0) - 1.0);
    let g = d * j;
    let var_d = (n1 + n2) / (n1 * n2) + d * d / (2.0 * (n1 + n2));
    let half = z_crit(alpha) * (j * j * var_d).sqrt();
    Ok(EffectEstimate {
        measure: Measure::SMD,
        point: g,
        ci_low: g - half,
        ci_high: g + half,
        alpha,
        n_per_arm: [intervention.n, comparator.n],
        orientation: Orientation::Raw,
        continuity_corrected: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmdRelevance {
    RelevantBenefit,
    RelevantHarm,
    NotRelevant,
}

/// Relevance of an SMD oriented so that negative values favour the
/// intervention: the whole interval must clear the irrelevance band.
pub fn smd_relevance(est: &EffectEstimate) -> SmdRelevance {
    if est.ci_high < -SMD_IRRELEVANCE {
        SmdRelevance::RelevantBenefit
    } else if est.ci_low > SMD_IRRELEVANCE {
        SmdRelevance::RelevantHarm
    } else {
        SmdRelevance::NotRelevant
    }
}
