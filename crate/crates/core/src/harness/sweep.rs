//! Re-run one scenario across a parameter axis. The axis is a dotted path
//! into the scenario JSON ("gnc.v_cmd_faster", "bus.latency", ...); every run
//! keeps the same seed so only the patched value moves.

use crate::error::{Error, Result};
use crate::harness::metrics::{compute_metrics, MetricsReport};
use crate::harness::scenario::Scenario;
use crate::harness::sim::run_scenario;
use serde_json::Value;

/// Set `path` (dot-separated, array indices numeric) to `value` and
/// re-validate the result.
pub fn apply_patch(sc: &Scenario, path: &str, value: Value) -> Result<Scenario> {
    if path.trim().is_empty() {
        return Err(Error::validation("sweep.axis", "must not be empty".to_string()));
    }
    let mut root = serde_json::to_value(sc)?;
    let segments: Vec<&str> = path.split('.').collect();
    let mut node = &mut root;
    for seg in &segments[..segments.len() - 1] {
        node = match node {
            Value::Object(map) => map.get_mut(*seg).ok_or_else(|| {
                Error::validation("sweep.axis", format!("no field {seg:?} along {path:?}"))
            })?,
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| {
                    Error::validation(
                        "sweep.axis",
                        format!("{seg:?} is not an array index in {path:?}"),
                    )
                })?;
                items.get_mut(idx).ok_or_else(|| {
                    Error::validation("sweep.axis", format!("index {idx} out of range in {path:?}"))
                })?
            }
            _ => {
                return Err(Error::validation(
                    "sweep.axis",
                    format!("{seg:?} in {path:?} does not address into a value"),
                ))
            }
        };
    }
    let leaf = segments[segments.len() - 1];
    match node {
        Value::Object(map) => {
            if !map.contains_key(leaf) {
                return Err(Error::validation(
                    "sweep.axis",
                    format!("no field {leaf:?} along {path:?}"),
                ));
            }
            map.insert(leaf.to_string(), value);
        }
        Value::Array(items) => {
            let idx: usize = leaf.parse().map_err(|_| {
                Error::validation(
                    "sweep.axis",
                    format!("{leaf:?} is not an array index in {path:?}"),
                )
            })?;
            let slot = items.get_mut(idx).ok_or_else(|| {
                Error::validation("sweep.axis", format!("index {idx} out of range in {path:?}"))
            })?;
            *slot = value;
        }
        _ => {
            return Err(Error::validation(
                "sweep.axis",
                format!("{leaf:?} in {path:?} does not address into a value"),
            ))
        }
    }
    let patched: Scenario = serde_json::from_value(root)?;
    patched.validate()?;
    Ok(patched)
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: Value,
    pub metrics: MetricsReport,
}

pub fn run_sweep(
    sc: &Scenario,
    axis: &str,
    values: &[Value],
    ops_hours: f64,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for v in values {
        let patched = apply_patch(sc, axis, v.clone())?;
        let run = run_scenario(&patched)?;
        let metrics = compute_metrics(&run.events, ops_hours)?;
        out.push(SweepPoint {
            value: v.clone(),
            metrics,
        });
    }
    Ok(out)
}

pub fn sweep_csv(axis: &str, points: &[SweepPoint]) -> String {
    let mut out = format!("{},{}\n", axis, MetricsReport::csv_header());
    for p in points {
        out.push_str(&format!("{},{}\n", p.value, p.metrics.csv_row()));
    }
    out
}
