//! Long-format CSV reader and writer.
//!
//! One row per (subject, visit, scale). Subject-level columns repeat on
//! every row of a subject and must agree. A row with empty `visit` and
//! `scale_id` registers a subject that has no questionnaire records.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use super::{Arm, DiscontinuationReason, Observation, StudyDesign, Subject, TrialDataset};
use crate::config::StudyConfig;
use crate::error::{Error, LoadIssues, Result, RowIssue};
use crate::scoring::score_scale;

const FIXED_COLUMNS: [&str; 10] = [
    "subject_id",
    "arm",
    "randomized",
    "treated",
    "visit",
    "week",
    "scale_id",
    "discontinuation_week",
    "discontinuation_reason",
    "death_week",
];
const SCORE_COLUMN: &str = "scale_score";
const ITEM_PREFIX: &str = "item_";
const RECONCILE_TOL: f64 = 1e-9;

/// Result of a successful load.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: TrialDataset,
    pub config: StudyConfig,
    /// Non-fatal findings (score reconciliation, data-cut drops).
    pub warnings: Vec<String>,
    pub dropped_after_cut: usize,
}

pub fn load_dataset(data_path: &Path, config_path: &Path) -> Result<LoadedDataset> {
    let config = StudyConfig::from_path(config_path)?;
    let file = std::fs::File::open(data_path).map_err(|source| Error::Io { path: data_path.to_path_buf(), source })?;
    let (dataset, warnings, dropped_after_cut) = read_dataset(file, config.design())?;
    let dataset = super::apply_estimand_filter(&dataset, config.estimand);
    Ok(LoadedDataset { dataset, config, warnings, dropped_after_cut })
}

struct Columns {
    fixed: [usize; 10],
    score: Option<usize>,
    items: Vec<(String, usize)>,
    subgroups: Vec<(String, usize)>,
}

fn locate_columns(headers: &csv::StringRecord, design: &StudyDesign) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let mut missing = Vec::new();
    let mut fixed = [0usize; 10];
    for (slot, name) in fixed.iter_mut().zip(FIXED_COLUMNS) {
        match find(name) {
            Some(i) => *slot = i,
            None => missing.push(name.to_string()),
        }
    }
    let mut subgroups = Vec::new();
    for factor in &design.subgroup_factors {
        match find(factor) {
            Some(i) => subgroups.push((factor.clone(), i)),
            None => missing.push(factor.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Load(LoadIssues(vec![RowIssue {
            row: Some(1),
            message: format!("missing column(s): {}", missing.join(", ")),
        }])));
    }
    let items = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix(ITEM_PREFIX).map(|k| (k.to_string(), i)))
        .collect();
    Ok(Columns { fixed, score: find(SCORE_COLUMN), items, subgroups })
}

fn parse_opt_f64(s: &str, what: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Some(x)),
        _ => Err(format!("{what}: `{s}` is not a number")),
    }
}

fn parse_flag(s: &str, what: &str) -> std::result::Result<bool, String> {
    match s.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(format!("{what}: expected 0 or 1, got `{other}`")),
    }
}

/// Subject-level attributes as read from one row.
#[derive(PartialEq)]
struct SubjectHeader {
    arm: Arm,
    randomized: bool,
    treated: bool,
    discontinuation_week: Option<f64>,
    discontinuation_reason: Option<DiscontinuationReason>,
    death_week: Option<f64>,
    subgroup_values: BTreeMap<String, String>,
}

/// Reads the long-format CSV against a study design.
///
/// Returns the dataset, load warnings, and the number of observations
/// dropped by the data cut. All row-level problems are collected before
/// failing.
pub fn read_dataset<R: Read>(reader: R, design: StudyDesign) -> Result<(TrialDataset, Vec<String>, usize)> {
    design.check()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = locate_columns(&headers, &design)?;

    let mut issues: Vec<RowIssue> = Vec::new();
    let mut warnings = Vec::new();
    let mut dropped = 0usize;
    let mut order: Vec<String> = Vec::new();
    let mut headers_by_id: HashMap<String, (SubjectHeader, u64)> = HashMap::new();
    let mut observations: HashMap<String, Vec<Observation>> = HashMap::new();
    let mut seen: BTreeMap<(String, String, String), u64> = BTreeMap::new();

    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let mut problems = Vec::new();
        let get = |k: usize| record.get(cols.fixed[k]).unwrap_or("");

        let id = get(0).to_string();
        if id.is_empty() {
            problems.push("empty subject_id".to_string());
        }
        let arm = design.arms.resolve(get(1));
        if arm.is_none() {
            problems.push(format!("unknown arm `{}`", get(1)));
        }
        let randomized = parse_flag(get(2), "randomized").map_err(|e| problems.push(e)).ok();
        let treated = parse_flag(get(3), "treated").map_err(|e| problems.push(e)).ok();
        let disc_week = parse_opt_f64(get(7), "discontinuation_week").map_err(|e| problems.push(e)).ok().flatten();
        let disc_reason = match get(8) {
            "" => None,
            s => {
                let r = DiscontinuationReason::parse(s);
                if r.is_none() {
                    problems.push(format!("unknown discontinuation_reason `{s}`"));
                }
                r
            }
        };
        if get(7).is_empty() != get(8).is_empty() {
            problems.push("discontinuation_week and discontinuation_reason must be given together".into());
        }
        let death_week = parse_opt_f64(get(9), "death_week").map_err(|e| problems.push(e)).ok().flatten();
        for w in [disc_week, death_week].into_iter().flatten() {
            if w < 0.0 {
                problems.push(format!("negative week {w}"));
            }
        }
        let subgroup_values: BTreeMap<String, String> = cols
            .subgroups
            .iter()
            .map(|(f, i)| (f.clone(), record.get(*i).unwrap_or("").to_string()))
            .collect();
        for (f, level) in &subgroup_values {
            if level.is_empty() {
                problems.push(format!("empty level for subgroup `{f}`"));
            }
        }

        // observation part
        let visit = get(4);
        let scale_id = get(6);
        let mut observation = None;
        if visit.is_empty() && scale_id.is_empty() {
            // subject-only row
        } else {
            let visit_meta = design.visits.iter().find(|v| v.label == visit);
            if visit_meta.is_none() {
                problems.push(format!("unknown visit `{visit}`"));
            }
            let scale = design.scales.iter().find(|s| s.scale_id == scale_id);
            if scale.is_none() {
                problems.push(format!("unknown scale `{scale_id}`"));
            }
            let week = match parse_opt_f64(get(5), "week") {
                Ok(Some(w)) if w >= 0.0 => Some(w),
                Ok(Some(w)) => {
                    problems.push(format!("negative week {w}"));
                    None
                }
                Ok(None) => visit_meta.map(|v| v.week),
                Err(e) => {
                    problems.push(e);
                    None
                }
            };
            let supplied = match cols.score.map(|i| record.get(i).unwrap_or("")) {
                Some(s) => parse_opt_f64(s, "scale_score").map_err(|e| problems.push(e)).ok().flatten(),
                None => None,
            };
            let mut item_values = BTreeMap::new();
            for (name, i) in &cols.items {
                match parse_opt_f64(record.get(*i).unwrap_or(""), &format!("item_{name}")) {
                    Ok(Some(x)) => {
                        item_values.insert(name.clone(), Some(x));
                    }
                    Ok(None) => {}
                    Err(e) => problems.push(e),
                }
            }
            if let (Some(scale), Some(week), Some(_)) = (scale, week, visit_meta) {
                let mut score = supplied;
                if let Some(rule) = &scale.scoring {
                    for item in &rule.items {
                        item_values.entry(item.clone()).or_insert(None);
                    }
                    match score_scale(&item_values, rule, scale.range()) {
                        Ok(derived) => match (supplied, derived) {
                            (None, d) => score = d,
                            (Some(s), Some(d)) if (s - d).abs() > RECONCILE_TOL => warnings.push(format!(
                                "row {row}: supplied scale_score {s} differs from item-derived {d}; supplied value kept"
                            )),
                            _ => {}
                        },
                        Err(e) => problems.push(e.to_string()),
                    }
                }
                if let Some(x) = score {
                    if !scale.range().contains(x) {
                        problems.push(format!(
                            "score {x} outside [{}, {}] for scale `{}`",
                            scale.min, scale.max, scale.scale_id
                        ));
                    }
                }
                let key = (id.clone(), visit.to_string(), scale_id.to_string());
                if let Some(first) = seen.get(&key) {
                    problems.push(format!(
                        "duplicate record for subject `{id}`, visit `{visit}`, scale `{scale_id}` (first at row {first})"
                    ));
                } else {
                    seen.insert(key, row);
                }
                observation = Some(Observation {
                    visit: visit.to_string(),
                    week,
                    scale_id: scale_id.to_string(),
                    item_values,
                    scale_score: score,
                });
            }
        }

        if !problems.is_empty() {
            issues.extend(problems.into_iter().map(|message| RowIssue { row: Some(row), message }));
            continue;
        }
        let header = SubjectHeader {
            arm: arm.expect("checked"),
            randomized: randomized.expect("checked"),
            treated: treated.expect("checked"),
            discontinuation_week: disc_week,
            discontinuation_reason: disc_reason,
            death_week,
            subgroup_values,
        };
        match headers_by_id.get(&id) {
            Some((existing, first_row)) => {
                if *existing != header {
                    issues.push(RowIssue {
                        row: Some(row),
                        message: format!(
                            "subject `{id}`: subject-level columns disagree with row {first_row}"
                        ),
                    });
                    continue;
                }
            }
            None => {
                order.push(id.clone());
                headers_by_id.insert(id.clone(), (header, row));
            }
        }
        if let Some(obs) = observation {
            if design.data_cut_week.is_some_and(|cut| obs.week > cut) {
                dropped += 1;
            } else {
                observations.entry(id).or_default().push(obs);
            }
        }
    }

    let visit_rank: HashMap<&str, usize> =
        design.visits.iter().enumerate().map(|(i, v)| (v.label.as_str(), i)).collect();
    let scale_rank: HashMap<&str, usize> =
        design.scales.iter().enumerate().map(|(i, s)| (s.scale_id.as_str(), i)).collect();

    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let (h, first_row) = headers_by_id.remove(&id).expect("registered");
        let mut obs = observations.remove(&id).unwrap_or_default();
        obs.sort_by_key(|o| (visit_rank[o.visit.as_str()], scale_rank[o.scale_id.as_str()]));
        if let Some(d) = h.death_week {
            if let Some(late) = obs.iter().find(|o| o.week > d) {
                issues.push(RowIssue {
                    row: Some(first_row),
                    message: format!(
                        "subject `{id}`: observation at week {} after death at week {d}",
                        late.week
                    ),
                });
            }
        }
        subjects.push(Subject {
            id,
            arm: h.arm,
            randomized: h.randomized,
            treated: h.treated,
            discontinuation_week: h.discontinuation_week,
            discontinuation_reason: h.discontinuation_reason,
            death_week: h.death_week,
            subgroup_values: h.subgroup_values,
            observations: obs,
        });
    }

    if !issues.is_empty() {
        issues.sort_by_key(|i| i.row);
        return Err(Error::Load(LoadIssues(issues)));
    }
    if dropped > 0 {
        warnings.push(format!("{dropped} observation(s) after the data cut were dropped"));
    }
    let dataset = TrialDataset::new(design, subjects)?;
    Ok((dataset, warnings, dropped))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes a dataset in the long-format CSV schema accepted by
/// [`read_dataset`].
pub fn write_dataset<W: Write>(ds: &TrialDataset, writer: W) -> Result<()> {
    let items: BTreeSet<&str> = ds
        .subjects()
        .iter()
        .flat_map(|s| s.observations.iter())
        .flat_map(|o| o.item_values.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.push(SCORE_COLUMN.into());
    header.extend(items.iter().map(|k| format!("{ITEM_PREFIX}{k}")));
    header.extend(ds.design().subgroup_factors.iter().cloned());
    w.write_record(&header)?;

    for s in ds.subjects() {
        let subject_part = |visit: &str, week: String, scale: &str| -> Vec<String> {
            vec![
                s.id.clone(),
                ds.arms().label(s.arm).to_string(),
                (s.randomized as u8).to_string(),
                (s.treated as u8).to_string(),
                visit.to_string(),
                week,
                scale.to_string(),
                fmt_opt(s.discontinuation_week),
                s.discontinuation_reason.map(|r| r.as_str().to_string()).unwrap_or_default(),
                fmt_opt(s.death_week),
            ]
        };
        let subgroup_part: Vec<String> = ds
            .design()
            .subgroup_factors
            .iter()
            .map(|f| s.subgroup_values.get(f).cloned().unwrap_or_default())
            .collect();
        if s.observations.is_empty() {
            let mut rec = subject_part("", String::new(), "");
            rec.push(String::new());
            rec.extend(items.iter().map(|_| String::new()));
            rec.extend(subgroup_part.iter().cloned());
            w.write_record(&rec)?;
        }
        for o in &s.observations {
            let mut rec = subject_part(&o.visit, o.week.to_string(), &o.scale_id);
            rec.push(fmt_opt(o.scale_score));
            rec.extend(items.iter().map(|k| fmt_opt(o.item_values.get(*k).copied().flatten())));
            rec.extend(subgroup_part.iter().cloned());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))?;
    Ok(())
}
