//! Effect estimators with two-sided confidence intervals.
//!
//! Every raw estimate compares intervention against comparator. Ratio
//! intervals are log-Wald, RD is Wald, MD is Welch, the Cox HR is Wald on
//! the log scale and Hedges' g uses its large-sample variance.

mod binary;
mod continuous;
mod survival;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub use binary::{odds_ratio, risk_difference, risk_ratio, TwoByTwo};
pub use continuous::{hedges_g, mean_difference, smd_relevance, ArmSummary, SmdRelevance, SMD_IRRELEVANCE};
pub use survival::{
    cox_hr, cox_partial_loglik, kaplan_meier, CoxFit, KaplanMeier, KmStep, SurvivalObs, TieMethod,
    COX_MAX_ITER, COX_SCORE_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    RR,
    OR,
    RD,
    HR,
    MD,
    SMD,
}

impl Measure {
    pub fn is_ratio(self) -> bool {
        matches!(self, Measure::RR | Measure::OR | Measure::HR)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::RR => "RR",
            Measure::OR => "OR",
            Measure::RD => "RD",
            Measure::HR => "HR",
            Measure::MD => "MD",
            Measure::SMD => "SMD",
        }
    }
}

/// Whether an estimate has been put on the "below null favours the
/// intervention" footing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Raw,
    Lt1FavorsIntervention,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub measure: Measure,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    /// (intervention, comparator)
    pub n_per_arm: [usize; 2],
    pub orientation: Orientation,
    /// 0.5 added to every cell because of a zero cell.
    pub continuity_corrected: bool,
}

impl EffectEstimate {
    /// Null value of the measure (1 for ratios, 0 otherwise).
    pub fn null(&self) -> f64 {
        if self.measure.is_ratio() {
            1.0
        } else {
            0.0
        }
    }

    /// Estimate with the roles of the two arms exchanged.
    pub fn mirrored(&self) -> EffectEstimate {
        let (point, ci_low, ci_high) = if self.measure.is_ratio() {
            (1.0 / self.point, 1.0 / self.ci_high, 1.0 / self.ci_low)
        } else {
            (-self.point, -self.ci_high, -self.ci_low)
        };
        EffectEstimate {
            point,
            ci_low,
            ci_high,
            n_per_arm: [self.n_per_arm[1], self.n_per_arm[0]],
            ..self.clone()
        }
    }
}

/// Two-sided standard-normal critical value.
pub fn z_crit(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided Student-t critical value.
pub fn t_crit(alpha: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha / 2.0)
}

pub(crate) fn log_wald(
    measure: Measure,
    log_point: f64,
    se: f64,
    alpha: f64,
    n_per_arm: [usize; 2],
    continuity_corrected: bool,
) -> EffectEstimate {
    let z = z_crit(alpha);
    EffectEstimate {
        measure,
        point: log_point.exp(),
        ci_low: (log_point - z * se).exp(),
        ci_high: (log_point + z * se).exp(),
        alpha,
        n_per_arm,
        orientation: Orientation::Raw,
        continuity_corrected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values() {
        assert!((z_crit(0.05) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((t_crit(0.05, 38.0) - 2.024_394_164).abs() < 1e-6);
    }

    #[test]
    fn mirroring_twice_is_identity() {
        let e = log_wald(Measure::RR, 0.6f64.ln(), 0.2, 0.05, [100, 90], false);
        let back = e.mirrored().mirrored();
        assert!((back.point - e.point).abs() < 1e-12);
        assert!((back.ci_low - e.ci_low).abs() < 1e-12);
        assert_eq!(back.n_per_arm, e.n_per_arm);
    }
}
