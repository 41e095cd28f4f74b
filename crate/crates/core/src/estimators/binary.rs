use serde::Serialize;

use super::{log_wald, z_crit, EffectEstimate, Measure, Orientation};
use crate::error::{Error, Result};
use crate::responder::ResponderTable;

/// Event counts: `a` of `n1` in the intervention arm, `c` of `n2` in the
/// comparator arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TwoByTwo {
    pub a: usize,
    pub n1: usize,
    pub c: usize,
    pub n2: usize,
}

impl TwoByTwo {
    pub fn new(a: usize, n1: usize, c: usize, n2: usize) -> Self {
        assert!(a <= n1 && c <= n2, "events cannot exceed arm size");
        TwoByTwo { a, n1, c, n2 }
    }

    pub fn swapped(&self) -> TwoByTwo {
        TwoByTwo { a: self.c, n1: self.n2, c: self.a, n2: self.n1 }
    }

    pub fn risks(&self) -> (f64, f64) {
        (self.a as f64 / self.n1 as f64, self.c as f64 / self.n2 as f64)
    }
}

impl From<&ResponderTable> for TwoByTwo {
    fn from(t: &ResponderTable) -> Self {
        TwoByTwo::new(
            t.intervention.responders,
            t.intervention.evaluable(),
            t.comparator.responders,
            t.comparator.evaluable(),
        )
    }
}

/// Cells as floats, with 0.5 added to each when any cell is zero.
struct Cells {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    corrected: bool,
}

fn cells(t: &TwoByTwo, measure: Measure) -> Result<Cells> {
    if t.n1 == 0 || t.n2 == 0 {
        return Err(Error::NonEstimable {
            measure: measure.as_str().into(),
            reason: "an arm has no evaluable subjects".into(),
        });
    }
    if t.a == 0 && t.c == 0 {
        return Err(Error::NonEstimable {
            measure: measure.as_str().into(),
            reason: "no events in either arm; effect not quantifiable".into(),
        });
    }
    let (b, d) = (t.n1 - t.a, t.n2 - t.c);
    let corrected = t.a == 0 || b == 0 || t.c == 0 || d == 0;
    let k = if corrected { 0.5 } else { 0.0 };
    Ok(Cells {
        a: t.a as f64 + k,
        b: b as f64 + k,
        c: t.c as f64 + k,
        d: d as f64 + k,
        corrected,
    })
}

pub fn risk_ratio(t: &TwoByTwo, alpha: f64) -> Result<EffectEstimate> {
    let x = cells(t, Measure::RR)?;
    let (n1, n2) = (x.a + x.b, x.c + x.d);
    let log_rr = (x.a / n1).ln() - (x.c / n2).ln();
    let se = (1.0 / x.a - 1.0 / n1 + 1.0 / x.c - 1.0 / n2).max(0.0).sqrt();
    Ok(log_wald(Measure::RR, log_rr, se, alpha, [t.n1, t.n2], x.corrected))
}

/// Odds ratio with Woolf's logit interval.
pub fn odds_ratio(t: &TwoByTwo, alpha: f64) -> Result<EffectEstimate> {
    let x = cells(t, Measure::OR)?;
    let log_or = ((x.a * x.d) / (x.b * x.c)).ln();
    let se = (1.0 / x.a + 1.0 / x.b + 1.0 / x.c + 1.0 / x.d).sqrt();
    Ok(log_wald(Measure::OR, log_or, se, alpha, [t.n1, t.n2], x.corrected))
}

pub fn risk_difference(t: &TwoByTwo, alpha: f64) -> Result<EffectEstimate> {
    let x = cells(t, Measure::RD)?;
    let (n1, n2) = (x.a + x.b, x.c + x.d);
    let (p1, p2) = (x.a / n1, x.c / n2);
    let rd = p1 - p2;
    let se = (p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2).sqrt();
    let z = z_crit(alpha);
    Ok(EffectEstimate {
        measure: Measure::RD,
        point: rd,
        ci_low: rd - z * se,
        ci_high: rd + z * se,
        alpha,
        n_per_arm: [t.n1, t.n2],
        orientation: Orientation::Raw,
        continuity_corrected: x.corrected,
    })
}
