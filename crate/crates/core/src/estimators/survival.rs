//! Kaplan-Meier product-limit estimator and a single-covariate Cox model.

use serde::{Deserialize, Serialize};

use super::{log_wald, z_crit, EffectEstimate, Measure};
use crate::error::{Error, MonotoneDirection, Result};

pub const COX_SCORE_TOL: f64 = 1e-8;
pub const COX_MAX_ITER: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalObs {
    pub time: f64,
    pub event: bool,
}

impl SurvivalObs {
    pub fn new(time: f64, event: bool) -> Self {
        SurvivalObs { time, event }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmStep {
    pub time: f64,
    pub n_risk: usize,
    pub n_event: usize,
    pub n_censor: usize,
    pub survival: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaplanMeier {
    /// One step per distinct observed time, ascending.
    pub steps: Vec<KmStep>,
    /// Smallest time with survival at or below 0.5.
    pub median: Option<f64>,
    pub n: usize,
    pub events: usize,
}

impl KaplanMeier {
    /// Survival just after time `t` (right-continuous step function).
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(1.0, |s| s.survival)
    }
}

/// Product-limit estimate with Greenwood variance and log(-log) pointwise
/// intervals. Events precede censorings at tied times.
pub fn kaplan_meier(obs: &[SurvivalObs], alpha: f64) -> Result<KaplanMeier> {
    if obs.is_empty() {
        return Err(Error::InsufficientData("Kaplan-Meier needs at least one observation".into()));
    }
    if obs.iter().any(|o| !(o.time >= 0.0)) {
        return Err(Error::InsufficientData("survival times must be nonnegative".into()));
    }
    let mut sorted: Vec<SurvivalObs> = obs.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let z = z_crit(alpha);

    let mut steps = Vec::new();
    let mut at_risk = sorted.len();
    // Within a run of times without censoring the product telescopes, so
    // survival is kept as run_base * (run_start - run_events) / run_start.
    let mut run_base = 1.0;
    let mut run_start = at_risk;
    let mut run_events = 0usize;
    let mut survival = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].time;
        let mut d = 0;
        let mut c = 0;
        while i < sorted.len() && sorted[i].time == t {
            if sorted[i].event {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        if d > 0 {
            run_events += d;
            survival = run_base * ((run_start - run_events) as f64 / run_start as f64);
            if at_risk > d {
                greenwood += d as f64 / (at_risk as f64 * (at_risk - d) as f64);
            }
        }
        let (std_err, ci_low, ci_high) = if survival <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if survival >= 1.0 {
            (0.0, 1.0, 1.0)
        } else {
            let se_loglog = greenwood.sqrt() / survival.ln().abs();
            let lo = survival.powf((z * se_loglog).exp());
            let hi = survival.powf((-z * se_loglog).exp());
            (survival * greenwood.sqrt(), lo, hi)
        };
        steps.push(KmStep { time: t, n_risk: at_risk, n_event: d, n_censor: c, survival, std_err, ci_low, ci_high });
        at_risk -= d + c;
        if c > 0 {
            run_base = survival;
            run_start = at_risk;
            run_events = 0;
        }
    }
    let median = steps.iter().find(|s| s.survival <= 0.5).map(|s| s.time);
    Ok(KaplanMeier {
        n: sorted.len(),
        events: sorted.iter().filter(|o| o.event).count(),
        steps,
        median,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMethod {
    #[default]
    Efron,
    Breslow,
}

/// Risk-set counts at one distinct event time.
#[derive(Debug, Clone, Copy)]
struct EventTime {
    /// at risk, comparator / intervention
    at_risk: [f64; 2],
    /// events, comparator / intervention
    events: [usize; 2],
}

fn event_times(intervention: &[SurvivalObs], comparator: &[SurvivalObs]) -> Vec<EventTime> {
    let mut all: Vec<(f64, bool, usize)> = comparator
        .iter()
        .map(|o| (o.time, o.event, 0))
        .chain(intervention.iter().map(|o| (o.time, o.event, 1)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = [comparator.len() as f64, intervention.len() as f64];
    let mut out = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let mut events = [0usize; 2];
        let mut leaving = [0usize; 2];
        while i < all.len() && all[i].0 == t {
            let x = all[i].2;
            leaving[x] += 1;
            if all[i].1 {
                events[x] += 1;
            }
            i += 1;
        }
        if events[0] + events[1] > 0 {
            out.push(EventTime { at_risk, events });
        }
        at_risk[0] -= leaving[0] as f64;
        at_risk[1] -= leaving[1] as f64;
    }
    out
}

/// Log partial likelihood, score and information at `beta`.
fn partial_likelihood(times: &[EventTime], beta: f64, ties: TieMethod) -> (f64, f64, f64) {
    let w = beta.exp();
    let (mut ll, mut score, mut info) = (0.0, 0.0, 0.0);
    for et in times {
        let d = et.events[0] + et.events[1];
        let s0 = et.at_risk[0] + et.at_risk[1] * w;
        let s1 = et.at_risk[1] * w;
        let d0 = et.events[0] as f64 + et.events[1] as f64 * w;
        let d1 = et.events[1] as f64 * w;
        ll += et.events[1] as f64 * beta;
        score += et.events[1] as f64;
        for k in 0..d {
            let f = match ties {
                TieMethod::Efron => k as f64 / d as f64,
                TieMethod::Breslow => 0.0,
            };
            let a = s0 - f * d0;
            let b = s1 - f * d1;
            ll -= a.ln();
            score -= b / a;
            // covariate is 0/1 so the second moment equals the first
            info += b / a - (b / a).powi(2);
        }
    }
    (ll, score, info)
}

/// Log partial likelihood of the arm-only Cox model.
pub fn cox_partial_loglik(intervention: &[SurvivalObs], comparator: &[SurvivalObs], beta: f64, ties: TieMethod) -> f64 {
    partial_likelihood(&event_times(intervention, comparator), beta, ties).0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxFit {
    pub estimate: EffectEstimate,
    pub beta: f64,
    pub std_err: f64,
    pub loglik: f64,
    pub score: f64,
    pub iterations: usize,
    pub ties: TieMethod,
}

fn monotone_direction(times: &[EventTime]) -> Option<MonotoneDirection> {
    // increasing in beta iff every event sits at the largest covariate of
    // its risk set; decreasing iff at the smallest
    let up = times.iter().all(|t| t.events[0] == 0 || t.at_risk[1] == 0.0);
    let down = times.iter().all(|t| t.events[1] == 0 || t.at_risk[0] == 0.0);
    match (up, down) {
        (true, true) => Some(MonotoneDirection::Uninformative),
        (true, false) => Some(MonotoneDirection::TowardsInfinity),
        (false, true) => Some(MonotoneDirection::TowardsZero),
        (false, false) => None,
    }
}

/// Fits `log h(t) = log h0(t) + beta * [intervention]` by Newton-Raphson
/// with step halving. Stops when |score| < 1e-8 or after 25 iterations.
pub fn cox_hr(intervention: &[SurvivalObs], comparator: &[SurvivalObs], ties: TieMethod, alpha: f64) -> Result<CoxFit> {
    let times = event_times(intervention, comparator);
    if times.is_empty() {
        return Err(Error::NonEstimable { measure: "HR".into(), reason: "no events".into() });
    }
    if let Some(direction) = monotone_direction(&times) {
        return Err(Error::MonotoneLikelihood { direction });
    }
    let mut beta = 0.0;
    let (mut ll, mut score, mut info) = partial_likelihood(&times, beta, ties);
    let mut iterations = 0;
    while score.abs() >= COX_SCORE_TOL && iterations < COX_MAX_ITER {
        iterations += 1;
        let mut step = score / info;
        let mut next = partial_likelihood(&times, beta + step, ties);
        let mut halvings = 0;
        // a loss at rounding level near the optimum is not a failed step
        let slack = 1e-12 * ll.abs().max(1.0);
        while !(next.0 >= ll - slack) && halvings < 40 {
            step /= 2.0;
            next = partial_likelihood(&times, beta + step, ties);
            halvings += 1;
        }
        beta += step;
        (ll, score, info) = next;
    }
    if score.abs() >= COX_SCORE_TOL && score.abs() > 1e-6 * info.max(1.0) {
        return Err(Error::NonConvergence { iterations });
    }
    if !(info > 0.0) {
        return Err(Error::NonEstimable { measure: "HR".into(), reason: "zero information".into() });
    }
    let std_err = info.sqrt().recip();
    Ok(CoxFit {
        estimate: log_wald(Measure::HR, beta, std_err, alpha, [intervention.len(), comparator.len()], false),
        beta,
        std_err,
        loglik: ll,
        score,
        iterations,
        ties,
    })
}
