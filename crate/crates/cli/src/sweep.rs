//! Cartesian parameter sweeps over dotted config fields.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{config_from_value, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::experiment::{execute, join_widths, Report};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Dotted path into the experiment config, e.g. `cache.capacity_bytes`.
    pub field: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn validate(&self) -> CliResult<()> {
        if self.axes.is_empty() {
            return Err(CliError::Config("grid.axes: empty grid".into()));
        }
        for (i, a) in self.axes.iter().enumerate() {
            if a.values.is_empty() {
                return Err(CliError::Config(format!("grid.axes[{i}].values: empty axis {}", a.field)));
            }
            if a.field.is_empty() || a.field.split('.').any(str::is_empty) {
                return Err(CliError::Config(format!("grid.axes[{i}].field: malformed path {:?}", a.field)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value indices of point `index`; the first axis varies slowest.
    pub fn point(&self, mut index: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = index % a.values.len();
            index /= a.values.len();
        }
        idx
    }
}

pub fn parse_grid(text: &str) -> CliResult<Grid> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let grid: Grid = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config(format!("grid.{}: {}", e.path(), e.inner())))?;
    grid.validate()?;
    Ok(grid)
}

pub fn load_grid(path: &Path) -> CliResult<Grid> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read grid {}: {e}", path.display())))?;
    parse_grid(&text)
}

/// Sets `path` in `root`, creating intermediate objects as needed.
fn set_path(root: &mut Value, path: &str, value: Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().expect("just made an object")
            }
            _ => {
                return Err(CliError::Config(format!(
                    "{path}: {} is not an object",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("path has at least one component")
}

/// Expands every grid point into a full config, in grid order.
pub fn expand(base: &ExperimentConfig, grid: &Grid) -> CliResult<Vec<ExperimentConfig>> {
    grid.validate()?;
    let base_value = serde_json::to_value(base)?;
    (0..grid.len())
        .map(|p| {
            let mut v = base_value.clone();
            for (axis, &i) in grid.axes.iter().zip(&grid.point(p)) {
                set_path(&mut v, &axis.field, axis.values[i].clone())?;
            }
            config_from_value(v).map_err(|e| CliError::Config(format!("grid point {p}: {e}")))
        })
        .collect()
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub struct SweepResult {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub reports: Vec<Report>,
}

pub const SWEEP_COLUMNS: [&str; 14] = [
    "dataflow",
    "rounds",
    "cycles",
    "topology_reads",
    "feature_reads",
    "feature_misses",
    "output_writes",
    "total_words",
    "dram_bytes",
    "hit_rate",
    "final_tile_width_arr",
    "final_num_slices",
    "speedup",
    "crossover_favors_feature_slicing",
];

/// Runs every grid point (concurrently) and returns rows in grid order.
pub fn sweep(base: &ExperimentConfig, grid: &Grid) -> CliResult<SweepResult> {
    let configs = expand(base, grid)?;
    let reports = configs.par_iter().map(execute).collect::<CliResult<Vec<_>>>()?;

    let mut header = vec!["point".to_string()];
    header.extend(grid.axes.iter().map(|a| a.field.clone()));
    header.extend(SWEEP_COLUMNS.iter().map(|s| s.to_string()));
    let rows = reports
        .iter()
        .enumerate()
        .map(|(p, r)| {
            let s = &r.summary;
            let mut row = vec![p.to_string()];
            row.extend(grid.axes.iter().zip(grid.point(p)).map(|(a, i)| cell(&a.values[i])));
            row.extend([
                s.dataflow.clone(),
                s.rounds.to_string(),
                s.totals.cycles.to_string(),
                s.totals.topology_reads.to_string(),
                s.totals.feature_reads.to_string(),
                s.totals.feature_misses.to_string(),
                s.totals.output_writes.to_string(),
                s.totals.total_words.to_string(),
                s.totals.dram_bytes.to_string(),
                format!("{:.6}", s.totals.hit_rate),
                join_widths(&s.final_config.tile_width_arr),
                s.final_config.num_slices.to_string(),
                s.speedup.map(|x| format!("{x:.6}")).unwrap_or_default(),
                s.cost_model.crossover_favors_feature_slicing.to_string(),
            ]);
            row
        })
        .collect();
    Ok(SweepResult { header, rows, reports })
}

/// Runs the sweep and writes `sweep.csv` to the base config's output directory.
pub fn run_sweep(base: &ExperimentConfig, grid: &Grid) -> CliResult<SweepResult> {
    let result = sweep(base, grid)?;
    fs::create_dir_all(&base.output_dir)?;
    let mut w = csv::Writer::from_path(base.output_dir.join("sweep.csv"))?;
    w.write_record(&result.header)?;
    for r in &result.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(result)
}
