//! Parameter sweeps: one run per value of a numeric parameter, each with
//! sub-seed `derive_seed(master, index)` (splitmix64 of the master seed
//! xor'ed with the mixed index), so a cell's result depends only on the
//! template, the value and its position, never on scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;

use mobserv::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{commit_dir, run_into, sha256_hex};
use crate::spec::{Experiment, ExperimentSpec, FieldError};
use crate::{RunnerError, GIT_DESCRIBE, TOOL_VERSION};

pub const SWEEP_TABLE: &str = "sweep.csv";
pub const SWEEP_MANIFEST: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub template: ExperimentSpec,
    /// Parameter path inside the experiment's params (`graph.k`, `beta`,
    /// ...); `K`, `L` and `N` are shorthands for `graph.k`, `graph.l` and
    /// `replicas`.
    pub axis: String,
    pub values: Vec<f64>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub dir: Option<String>,
    pub error: Option<String>,
    pub summary: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub out: PathBuf,
    pub cells: Vec<CellRecord>,
}

/// Parse `"5,7,9"`; blank entries are rejected.
pub fn parse_values(text: &str) -> Result<Vec<f64>, RunnerError> {
    if text.trim().is_empty() {
        return Err(RunnerError::invalid("values", "empty values list"));
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| RunnerError::invalid("values", format!("{s:?} is not a number")))
        })
        .collect()
}

fn axis_path(axis: &str) -> Vec<&str> {
    match axis {
        "K" => vec!["graph", "k"],
        "L" => vec!["graph", "l"],
        "N" => vec!["replicas"],
        a => a.split('.').collect(),
    }
}

/// The experiment with the parameter at `axis` replaced by `value`.
pub fn set_axis(experiment: &Experiment, axis: &str, value: f64) -> Result<Experiment, String> {
    let mut json = serde_json::to_value(experiment).map_err(|e| e.to_string())?;
    let path = axis_path(axis);
    let (last, parents) = path.split_last().ok_or("empty axis")?;
    let mut node = json.get_mut("params").ok_or("experiment has no params")?;
    for key in parents {
        node = node.get_mut(*key).ok_or_else(|| format!("no parameter {key:?} on the path {axis:?}"))?;
    }
    let slot = node
        .as_object_mut()
        .and_then(|o| o.get_mut(*last))
        .ok_or_else(|| format!("{axis:?} does not name a parameter of {}", experiment.subcommand()))?;
    let whole = value.fract() == 0.0 && value >= 0.0 && value <= u64::MAX as f64;
    *slot = match slot {
        Value::Number(n) if n.is_u64() || n.is_i64() => {
            if !whole {
                return Err(format!("{axis:?} takes whole numbers (got {value})"));
            }
            json!(value as u64)
        }
        Value::Number(_) => json!(value),
        Value::Null if whole => json!(value as u64),
        Value::Null => json!(value),
        _ => return Err(format!("{axis:?} is not numeric")),
    };
    serde_json::from_value(json).map_err(|e| e.to_string())
}

fn label(value: f64) -> String {
    value.to_string().replace(['/', '\\'], "_")
}

/// Run every cell, write each into its own subdirectory, then the merged
/// table keyed by the axis. Failed cells are listed in the table and the
/// sweep manifest; the others are kept. Returns `SweepFailed` after
/// writing if any cell failed.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome, RunnerError> {
    if spec.values.is_empty() {
        return Err(RunnerError::invalid("values", "empty values list"));
    }
    if spec.axis.trim().is_empty() {
        return Err(RunnerError::invalid("axis", "must name a parameter"));
    }
    // Resolve and validate every cell before running any.
    let mut cells = Vec::with_capacity(spec.values.len());
    let mut errors = Vec::new();
    for (index, &value) in spec.values.iter().enumerate() {
        let experiment = match set_axis(&spec.template.experiment, &spec.axis, value) {
            Ok(e) => e,
            Err(message) => {
                errors.push(FieldError { field: "axis".into(), message });
                continue;
            }
        };
        let dir = format!("cell-{index:03}-{}", label(value));
        let cell = ExperimentSpec {
            name: format!("{}-{}={}", spec.template.name, spec.axis, value),
            seed: derive_seed(spec.template.seed, index as u64),
            out: spec.out.join(&dir),
            experiment,
        };
        if let Err(RunnerError::Invalid(errs)) = cell.validate() {
            errors.extend(errs.into_iter().map(|e| FieldError { field: format!("cell[{index}].{}", e.field), ..e }));
        }
        cells.push((index, value, dir, cell));
    }
    if !errors.is_empty() {
        errors.dedup();
        return Err(RunnerError::Invalid(errors));
    }

    let mut records = Vec::new();
    commit_dir(&spec.out, |staging| {
        records = cells
            .par_iter()
            .map(|(index, value, dir, cell)| {
                let (dir, error, summary) = match run_into(cell, &staging.join(dir)) {
                    Ok(o) => (Some(dir.clone()), None, o.summary),
                    Err(e) => (None, Some(e.to_string()), BTreeMap::new()),
                };
                CellRecord { index: *index, value: *value, seed: cell.seed, dir, error, summary }
            })
            .collect();
        let table = merged_table(&spec.axis, &records)?;
        let path = staging.join(SWEEP_TABLE);
        fs::write(&path, &table).map_err(|e| RunnerError::io(&path, e))?;
        let manifest = json!({
            "sweep": spec,
            "tool": "mobserv",
            "version": TOOL_VERSION,
            "git_describe": GIT_DESCRIBE,
            "cells": records,
            "digests": { SWEEP_TABLE: sha256_hex(&table) },
        });
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = staging.join(SWEEP_MANIFEST);
        fs::write(&path, bytes).map_err(|e| RunnerError::io(&path, e))
    })?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(RunnerError::SweepFailed { failed, total: records.len() });
    }
    Ok(SweepOutcome { out: spec.out.clone(), cells: records })
}

fn merged_table(axis: &str, records: &[CellRecord]) -> Result<Vec<u8>, RunnerError> {
    let metrics: BTreeSet<&str> = records.iter().flat_map(|r| r.summary.keys().map(String::as_str)).collect();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec![axis, "index", "seed", "status"];
        header.extend(metrics.iter().copied());
        header.push("error");
        w.write_record(&header)?;
        for r in records {
            let mut row = vec![
                r.value.to_string(),
                r.index.to_string(),
                r.seed.to_string(),
                if r.error.is_some() { "failed" } else { "ok" }.to_string(),
            ];
            row.extend(metrics.iter().map(|m| r.summary.get(*m).map(f64::to_string).unwrap_or_default()));
            row.push(r.error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{CurveParams, DriftParams, GraphSpec};

    #[test]
    fn values_parse() {
        assert_eq!(parse_values("5, 7,9").unwrap(), vec![5.0, 7.0, 9.0]);
        assert!(matches!(parse_values(" "), Err(RunnerError::Invalid(_))));
        assert!(parse_values("5,,7").is_err());
    }

    #[test]
    fn axis_shorthands() {
        let e = Experiment::Drift(DriftParams::default());
        let Experiment::Drift(p) = set_axis(&e, "K", 7.0).unwrap() else { unreachable!() };
        assert_eq!(p.graph, GraphSpec::Cycle { k: 7 });
        let Experiment::Drift(p) = set_axis(&e, "N", 4.0).unwrap() else { unreachable!() };
        assert_eq!(p.replicas, 4);
        let Experiment::Drift(p) = set_axis(&e, "beta", 2.5).unwrap() else { unreachable!() };
        assert_eq!(p.beta, 2.5);
    }

    #[test]
    fn axis_errors() {
        let e = Experiment::NlmpCurve(CurveParams::default());
        assert!(set_axis(&e, "K", 7.0).is_err());
        assert!(set_axis(&e, "grid", 2.5).is_err());
        assert!(set_axis(&e, "gamma", 0.5).is_err());
    }

    #[test]
    fn empty_sweep_rejected() {
        let spec = SweepSpec {
            template: ExperimentSpec::new(Experiment::NlmpCurve(CurveParams::default())),
            axis: "beta".into(),
            values: vec![],
            out: "unused".into(),
        };
        assert!(matches!(run_sweep(&spec), Err(RunnerError::Invalid(_))));
    }
}
