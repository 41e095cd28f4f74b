//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero when any criterion fails.
//!
//! Every check compares the library against an oracle written here, never
//! against the library's own helpers.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{data_dir, design, scale, subject, two_visit_trial};
use pro_benefit::benefit::{extent_of_effect, EventPolarity, Extent, OutcomeCategory};
use pro_benefit::completeness::{assess_completeness, missingness_gate, return_rate_gate, return_rates};
use pro_benefit::dataset::{Arm, TrialDataset};
use pro_benefit::estimators::{
    cox_hr, hedges_g, kaplan_meier, ArmSummary, EffectEstimate, Measure, Orientation, SurvivalObs, TieMethod,
};
use pro_benefit::longitudinal::{fit_mmrm, CovarianceStructure, MmrmSettings};
use pro_benefit::pipeline::{responder_analysis, time_to_event_analysis, EndpointContext};
use pro_benefit::report::assess_files;
use pro_benefit::responder::{resolve_threshold, DeathHandling, EventKind, Sense, ThresholdPolicy, ThresholdSource};
use pro_benefit::scoring::change_from_baseline;
use pro_benefit::simulator::{replicate_study, simulate_trial, SimConfig, SIM_SCALE_ID};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1

/// Upper bounds in thousandths, read off the decision table by hand:
/// (category, major, considerable, minor).
const TABLE: [(OutcomeCategory, Option<u32>, u32, u32); 3] = [
    (OutcomeCategory::AllCauseMortality, Some(850), 950, 1000),
    (OutcomeCategory::SeriousSymptomsHrqol, Some(750), 900, 1000),
    (OutcomeCategory::NonSeriousSymptoms, None, 800, 900),
];

fn transcribed(category: OutcomeCategory, ci_high: u32, risk_pct: u32) -> Extent {
    let &(_, major, considerable, minor) = TABLE.iter().find(|r| r.0 == category).unwrap();
    let risk_ok = category != OutcomeCategory::SeriousSymptomsHrqol || risk_pct >= 5;
    match major {
        Some(m) if ci_high < m && risk_ok => Extent::Major,
        _ if ci_high < considerable => Extent::Considerable,
        _ if ci_high < minor => Extent::Minor,
        _ => Extent::NoneProven,
    }
}

fn decision_table() -> Outcome {
    let start = Instant::now();
    let mut cells = 0;
    for &(category, ..) in &TABLE {
        for risk_pct in [3u32, 6] {
            for k in 0..=90u32 {
                let hi = 600 + 5 * k;
                let est = EffectEstimate {
                    measure: Measure::RR,
                    point: f64::from(hi) / 2000.0,
                    ci_low: f64::from(hi) / 4000.0,
                    ci_high: f64::from(hi) / 1000.0,
                    alpha: 0.05,
                    n_per_arm: [100, 100],
                    orientation: Orientation::Lt1FavorsIntervention,
                    continuity_corrected: false,
                };
                let risk = f64::from(risk_pct) / 100.0;
                let got = extent_of_effect(&est, category, Some([risk, risk])).map_err(|e| e.to_string())?.extent;
                let want = transcribed(category, hi, risk_pct);
                check(got == want, format!("{} ci_high {hi}/1000 risk {risk_pct}%: {got:?} vs {want:?}", category.as_str()))?;
                cells += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("{cells}/{cells} cells agree in {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 2

fn threshold_policy() -> Outcome {
    // (min, max, 15 % of range, MIDs at 10 %, 15 %, 20 %)
    let ranges = [(0.0, 100.0, 15.0, [10.0, 15.0, 20.0]), (1.0, 7.0, 0.9, [0.6, 0.9, 1.2]), (0.0, 52.0, 7.8, [5.2, 7.8, 10.4])];
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    let mut cells = 0;
    for (min, max, fifteen, mids) in ranges {
        let cases = [(None, 3, fifteen), (Some(mids[0]), 2, fifteen), (Some(mids[1]), 1, mids[1]), (Some(mids[2]), 1, mids[2])];
        for (mid, scenario, threshold) in cases {
            let mut s = scale("S", min, max);
            s.prespecified_mid = mid;
            s.mid_prespecified_flag = mid.is_some();
            let d = resolve_threshold(&s, &ThresholdPolicy::default());
            let label = format!("[{min}, {max}] MID {mid:?}");
            check(d.scenario == scenario, format!("{label}: scenario {} vs {scenario}", d.scenario))?;
            check(close(d.threshold_points, threshold), format!("{label}: threshold {}", d.threshold_points))?;
            let accepted = scenario == 1;
            check(
                (d.source == ThresholdSource::PrespecifiedMidAccepted) == accepted,
                format!("{label}: source {:?}", d.source),
            )?;
            check(d.rejected_mid == if scenario == 2 { mid } else { None }, format!("{label}: rejected {:?}", d.rejected_mid))?;
            cells += 1;
        }
    }
    Ok(format!("{cells}/12 cells reproduce the scenario outcome"))
}

// ---------------------------------------------------------------- 3

fn gate_boundaries() -> Outcome {
    let visit = "W12";
    let ret = |n: usize, missing: usize| {
        let ds = two_visit_trial([n, n], [missing, missing]);
        let gates = return_rate_gate(&return_rates(&ds, "S").unwrap());
        gates.iter().find(|g| g.visit == visit).unwrap().pass
    };
    check(ret(10, 3), "7/10 returned must pass")?;
    check(!ret(10, 4), "6/10 returned must fail")?;

    let miss = |n: [usize; 2], m: [usize; 2]| missingness_gate(&two_visit_trial(n, m), "S", visit).unwrap();
    let v = miss([20, 20], [6, 6]);
    check(v.overall_pass, "30.0% excluded must pass")?;
    let v = miss([100, 100], [30, 31]);
    check(!v.overall_pass, "30.5% excluded must fail")?;
    let v = miss([100, 100], [25, 10]);
    check(v.difference_pass && v.pass, "15.0 pp difference must pass")?;
    let v = miss([200, 200], [50, 19]);
    check(!v.difference_pass && v.overall_pass, "15.5 pp difference must fail")?;
    Ok("70% return, 30.0%/30.5% excluded, 15.0/15.5 pp decided as required".into())
}

// ---------------------------------------------------------------- 4

/// Efron log partial likelihood written directly from its definition.
fn efron_loglik(data: &[(f64, bool, f64)], beta: f64) -> f64 {
    let mut times: Vec<f64> = data.iter().filter(|d| d.1).map(|d| d.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut ll = 0.0;
    for t in times {
        let tied: Vec<f64> = data.iter().filter(|d| d.1 && d.0 == t).map(|d| d.2).collect();
        let risk: f64 = data.iter().filter(|d| d.0 >= t).map(|d| (beta * d.2).exp()).sum();
        let tied_sum: f64 = tied.iter().map(|x| (beta * x).exp()).sum();
        let m = tied.len() as f64;
        for (l, x) in tied.iter().enumerate() {
            ll += beta * x - (risk - l as f64 / m * tied_sum).ln();
        }
    }
    ll
}

fn grid_argmax(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..60 {
        let step = (hi - lo) / 40.0;
        let best = (0..=40).map(|i| lo + step * i as f64).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        lo = best - step;
        hi = best + step;
    }
    (lo + hi) / 2.0
}

fn cox_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut fitted = 0;
    let mut worst: f64 = 0.0;
    while fitted < 50 {
        let n = rng.random_range(4..=12);
        let data: Vec<(f64, bool, f64)> = (0..n)
            .map(|i| (f64::from(rng.random_range(1..=6u8)), rng.random_bool(0.75), f64::from(i % 2 == 0)))
            .collect();
        let split = |x: f64| -> Vec<SurvivalObs> {
            data.iter().filter(|d| d.2 == x).map(|d| SurvivalObs::new(d.0, d.1)).collect()
        };
        let Ok(fit) = cox_hr(&split(1.0), &split(0.0), TieMethod::Efron, 0.05) else {
            // monotone likelihood or no events: no finite maximiser to compare
            continue;
        };
        let oracle = grid_argmax(|b| efron_loglik(&data, b), -15.0, 15.0);
        let diff = (fit.beta - oracle).abs();
        check(diff < 1e-3, format!("dataset {fitted}: Newton {} vs grid {oracle}", fit.beta))?;
        worst = worst.max(diff);
        fitted += 1;
    }

    for rep in 0..50 {
        let n = rng.random_range(1..=30);
        let times: Vec<u32> = (0..n).map(|_| rng.random_range(0..=10)).collect();
        let obs: Vec<SurvivalObs> = times.iter().map(|&t| SurvivalObs::new(f64::from(t), true)).collect();
        let km = kaplan_meier(&obs, 0.05).map_err(|e| e.to_string())?;
        for t2 in 0..=24u32 {
            let t = f64::from(t2) / 2.0;
            let above = times.iter().filter(|&&x| f64::from(x) > t).count();
            let want = above as f64 / n as f64;
            check(km.survival_at(t) == want, format!("KM rep {rep} at {t}: {} vs {want}", km.survival_at(t)))?;
        }
    }
    Ok(format!("50 Cox fits within {worst:.1e} of the grid optimum; uncensored KM equals 1 - ECDF exactly"))
}

// ---------------------------------------------------------------- 5

fn hedges() -> Outcome {
    let a = ArmSummary { n: 20, mean: 10.0, sd: 4.0 };
    let b = ArmSummary { n: 20, mean: 12.0, sd: 4.0 };
    let g = hedges_g(&a, &b, 0.05).map_err(|e| e.to_string())?;
    let d = (10.0 - 12.0) / 4.0;
    let j = 1.0 - 3.0 / (4.0 * 38.0 - 1.0);
    check((g.point - d * j).abs() < 1e-12, format!("g {} vs d*J {}", g.point, d * j))?;
    check((g.point + 0.490).abs() <= 0.001, format!("g {}", g.point))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for rep in 0..100 {
        let n1 = rng.random_range(3..30);
        let n2 = rng.random_range(3..30);
        let x: Vec<f64> = (0..n1).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = (0..n2).map(|_| rng.random_range(1.0..11.0)).collect();
        let scale = rng.random_range(0.01..100.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let shift = rng.random_range(-1000.0..1000.0);
        let g0 = hedges_g(&ArmSummary::from_values(&x), &ArmSummary::from_values(&y), 0.05).unwrap();
        let t = |v: &[f64]| v.iter().map(|z| scale * z + shift).collect::<Vec<_>>();
        let g1 = hedges_g(&ArmSummary::from_values(&t(&x)), &ArmSummary::from_values(&t(&y)), 0.05).unwrap();
        let want = scale.signum() * g0.point;
        check((g1.point - want).abs() < 1e-8 * want.abs().max(1.0), format!("rescaling {rep}: {} vs {want}", g1.point))?;
    }
    Ok(format!("g = {:.4}; 100 affine rescalings leave |g| unchanged", g.point))
}

// ---------------------------------------------------------------- 6

fn balanced_trial(n_per_arm: usize, weeks: &[f64], seed: u64) -> TrialDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = Vec::new();
    for arm in [Arm::Intervention, Arm::Comparator] {
        for i in 0..n_per_arm {
            let base: f64 = rng.random_range(30.0..70.0);
            let level = rng.random_range(-8.0..8.0);
            let scores: Vec<(f64, Option<f64>)> = weeks
                .iter()
                .enumerate()
                .map(|(v, &w)| {
                    let drift = if arm == Arm::Intervention { -1.5 * v as f64 } else { 0.0 };
                    let y = if v == 0 { base } else { 0.6 * base + level + drift + rng.random_range(-6.0..6.0) };
                    (w, Some(y))
                })
                .collect();
            subjects.push(subject(&format!("{arm}{i}"), arm, "S", &scores));
        }
    }
    TrialDataset::new(design(weeks, vec![scale("S", 0.0, 100.0)]), subjects).unwrap()
}

/// Arm coefficient of OLS `change ~ 1 + arm + baseline` at one visit.
fn ancova(ds: &TrialDataset, baseline: &str, visit: &str) -> f64 {
    let rows: Vec<[f64; 4]> = ds
        .subjects()
        .iter()
        .map(|s| {
            let b = s.score("S", baseline).unwrap();
            [1.0, f64::from(s.arm == Arm::Intervention), b, s.score("S", visit).unwrap() - b]
        })
        .collect();
    let x = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[3]));
    let coef = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
    coef[1]
}

/// Restricted log-likelihood of the per-visit ANCOVA mean model with a
/// 2x2 covariance, built on the full stacked covariance matrix.
fn stacked_reml(rows: &[(usize, usize, f64, f64, f64)], s11: f64, s22: f64, rho: f64) -> f64 {
    let sigma = [[s11, rho * (s11 * s22).sqrt()], [rho * (s11 * s22).sqrt(), s22]];
    let n = rows.len();
    let x = DMatrix::from_fn(n, 6, |i, j| {
        let (_, v, arm, base, _) = rows[i];
        if j / 3 != v {
            0.0
        } else {
            [1.0, arm, base][j % 3]
        }
    });
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.4));
    let v = DMatrix::from_fn(n, n, |i, j| if rows[i].0 == rows[j].0 { sigma[rows[i].1][rows[j].1] } else { 0.0 });
    let Some(chol) = v.clone().cholesky() else { return f64::NEG_INFINITY };
    let vinv = chol.inverse();
    let xtv = x.transpose() * &vinv;
    let a = &xtv * &x;
    let Some(achol) = a.clone().cholesky() else { return f64::NEG_INFINITY };
    let beta = achol.solve(&(&xtv * &y));
    let r = &y - &x * beta;
    let logdet_v = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let logdet_a = 2.0 * achol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let q = (r.transpose() * &vinv * &r)[(0, 0)];
    -0.5 * (logdet_v + logdet_a + q)
}

fn mmrm() -> Outcome {
    let weeks = [0.0, 4.0, 8.0, 12.0];
    let ds = balanced_trial(20, &weeks, 6);
    let mut worst: f64 = 0.0;
    for structure in [CovarianceStructure::Unstructured, CovarianceStructure::CompoundSymmetry] {
        let fit = fit_mmrm(&ds, "S", structure, &MmrmSettings::default()).map_err(|e| e.to_string())?;
        check(fit.contrasts.len() == 3, "one contrast per post-baseline visit")?;
        for c in &fit.contrasts {
            let diff = (c.estimate.point - ancova(&ds, "W0", &c.visit)).abs();
            check(diff < 1e-6, format!("{structure:?} {}: off by {diff}", c.visit))?;
            worst = worst.max(diff);
        }
    }

    // six subjects, two post-baseline visits, one missing value
    let raw: [(Arm, f64, f64, Option<f64>); 6] = [
        (Arm::Intervention, 4.0, 3.1, Some(2.2)),
        (Arm::Intervention, 6.0, 4.8, Some(5.9)),
        (Arm::Intervention, 5.0, 5.5, Some(3.7)),
        (Arm::Comparator, 3.0, 4.4, Some(4.9)),
        (Arm::Comparator, 7.0, 6.1, Some(8.3)),
        (Arm::Comparator, 5.0, 6.6, None),
    ];
    let subjects = raw
        .iter()
        .enumerate()
        .map(|(i, &(arm, b, y1, y2))| subject(&format!("P{i}"), arm, "S", &[(0.0, Some(b)), (4.0, Some(y1)), (8.0, y2)]))
        .collect();
    let small = TrialDataset::new(design(&[0.0, 4.0, 8.0], vec![scale("S", 0.0, 100.0)]), subjects).unwrap();
    let fit = fit_mmrm(&small, "S", CovarianceStructure::Unstructured, &MmrmSettings::default()).map_err(|e| e.to_string())?;

    let mut rows = Vec::new();
    for (i, &(arm, b, y1, y2)) in raw.iter().enumerate() {
        let a = f64::from(arm == Arm::Intervention);
        rows.push((i, 0, a, b, y1 - b));
        if let Some(y2) = y2 {
            rows.push((i, 1, a, b, y2 - b));
        }
    }
    // zooming grid over (variance 1, variance 2, correlation)
    let f = |p: [f64; 3]| stacked_reml(&rows, p[0], p[1], p[2]);
    let mut lo = [0.01, 0.01, -0.99];
    let mut hi = [10.0, 10.0, 0.99];
    let mut best = [1.0, 1.0, 0.0];
    for _ in 0..80 {
        let steps = 12;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let p = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / steps as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / steps as f64,
                        lo[2] + (hi[2] - lo[2]) * k as f64 / steps as f64,
                    ];
                    let val = f(p);
                    if val > best_val {
                        best_val = val;
                        best = p;
                    }
                }
            }
        }
        for d in 0..3 {
            let w = (hi[d] - lo[d]) / 3.0;
            lo[d] = (best[d] - w).max(if d == 2 { -0.999 } else { 1e-6 });
            hi[d] = (best[d] + w).min(if d == 2 { 0.999 } else { 1e6 });
        }
    }
    let oracle = [[best[0], best[2] * (best[0] * best[1]).sqrt()], [best[2] * (best[0] * best[1]).sqrt(), best[1]]];
    let cov_err = fit
        .covariance
        .iter()
        .flatten()
        .zip(oracle.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(cov_err < 1e-3, format!("REML covariance {:?} vs grid {oracle:?}", fit.covariance))?;
    Ok(format!("ANCOVA agreement {worst:.1e}; REML covariance within {cov_err:.1e} of the grid optimum"))
}

// ---------------------------------------------------------------- 7

const NULL_SIM: &str = r#"
n_per_arm = 100
visit_weeks = [0, 8, 16, 24]
scale_min = 0
scale_max = 100
direction = "higher_is_worse"
mean_intervention = [50, 50, 50, 50]
mean_comparator = [50, 50, 50, 50]
sd_subject = 10
sd_visit = 10
seed = 20240501
truth_subjects = 20000
"#;

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::from_toml_str(NULL_SIM).map_err(|e| e.to_string())?;
    let oc = replicate_study(&cfg, 2000).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(oc.true_rr == 1.0, format!("null truth {}", oc.true_rr))?;
    check((0.93..=0.97).contains(&oc.coverage), format!("coverage {}", oc.coverage))?;
    check(oc.minor_or_better_rate <= 0.035, format!("minor-or-better rate {}", oc.minor_or_better_rate))?;
    check(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    Ok(format!(
        "coverage {:.4} over {} estimable replicates; minor-or-better {:.4}; {elapsed:.1?}",
        oc.coverage, oc.estimable, oc.minor_or_better_rate
    ))
}

// ---------------------------------------------------------------- 8

const EFFECT_SIM: &str = r#"
n_per_arm = 100
visit_weeks = [0, 8, 16, 24]
scale_min = 0
scale_max = 100
direction = "higher_is_worse"
mean_intervention = [50, 46, 42, 38]
mean_comparator = [50, 50, 50, 50]
sd_subject = 10
sd_visit = 10
seed = 88
"#;

fn mirrored(a: &EffectEstimate, b: &EffectEstimate) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * y.abs().max(1.0);
    close(a.point, 1.0 / b.point) && close(a.ci_low, 1.0 / b.ci_high) && close(a.ci_high, 1.0 / b.ci_low)
}

fn symmetry() -> Outcome {
    let cfg = SimConfig::from_toml_str(EFFECT_SIM).map_err(|e| e.to_string())?;
    let ds = simulate_trial(&cfg).map_err(|e| e.to_string())?;
    check(ds.subjects().len() == 200, "200 subjects")?;
    let swapped = ds.with_swapped_arms();
    let visit = "W24";
    let mut extents = Vec::new();
    for sense in [Sense::Deterioration, Sense::Improvement] {
        let run = |d: &TrialDataset, polarity: EventPolarity| {
            let scale = d.scale(SIM_SCALE_ID).unwrap().clone();
            let decision = resolve_threshold(&scale, &ThresholdPolicy::default());
            let series = change_from_baseline(d, SIM_SCALE_ID).unwrap();
            let completeness = assess_completeness(d, SIM_SCALE_ID, visit).unwrap();
            let ctx = EndpointContext {
                ds: d,
                scale: &scale,
                series: &series,
                decision: &decision,
                visit,
                alpha: 0.05,
                completeness: Some(&completeness),
            };
            let r = responder_analysis(&ctx, sense, polarity).unwrap();
            let t = time_to_event_analysis(&ctx, EventKind::new(sense, false), DeathHandling::Censor, TieMethod::Efron, polarity)
                .unwrap();
            (r, t)
        };
        let polarity = EventPolarity::for_sense(sense);
        let (r0, t0) = run(&ds, polarity);
        let (r1, t1) = run(&swapped, polarity.flipped());
        for (label, a, b) in [("RR", &r0.rr, &r1.rr), ("OR", &r0.or, &r1.or)] {
            let (Some(a), Some(b)) = (a, b) else { return Err(format!("{label} not estimable")) };
            check(mirrored(a, b), format!("{} {label} not mirrored: {a:?} vs {b:?}", sense.as_str()))?;
        }
        let (Some(h0), Some(h1)) = (&t0.cox, &t1.cox) else { return Err("HR not estimable".into()) };
        check(mirrored(&h0.estimate, &h1.estimate), format!("{} HR not mirrored: {:?} vs {:?}", sense.as_str(), h0, h1))?;
        check(r0.verdict.extent == r1.verdict.extent, format!("{} responder extent differs", sense.as_str()))?;
        check(t0.verdict.extent == t1.verdict.extent, format!("{} time-to-event extent differs", sense.as_str()))?;
        extents.push(format!("{} {}/{}", sense.as_str(), r0.verdict.extent.as_str(), t0.verdict.extent.as_str()));
    }
    Ok(format!("RR, OR and HR mirrored; extents unchanged ({})", extents.join(", ")))
}

// ---------------------------------------------------------------- 9

fn golden_report() -> Outcome {
    let dir = data_dir();
    let run = || assess_files(&dir.join("toy.csv"), &dir.join("toy.toml")).map(|o| o.report.to_json());
    let first = run().map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
    let second = run().map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
    check(first == second, "two consecutive runs differ")?;
    let golden = fs::read_to_string(dir.join("toy_report.json")).map_err(|e| e.to_string())?;
    check(first == golden, "report differs from the committed golden file")?;
    Ok(format!("{} bytes, identical across runs and to the golden file", first.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("decision table", decision_table),
        ("threshold policy", threshold_policy),
        ("gate boundaries", gate_boundaries),
        ("Cox and KM oracles", cox_oracle),
        ("Hedges' g", hedges),
        ("MMRM", mmrm),
        ("Monte Carlo null", monte_carlo),
        ("arm symmetry", symmetry),
        ("golden report", golden_report),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("PASS {} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
