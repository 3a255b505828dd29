//! Experiment runner: JSON configs in, deterministic CSV/JSON reports out.

pub mod config;
pub mod error;
pub mod experiment;
pub mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use gcnsim::graph::{gen_synthetic, GraphModel};
use gcnsim::CsrGraph;

pub use config::{load_config, parse_config, Dataflow, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use experiment::{execute, run_experiment, write_report, Report};
pub use sweep::{load_grid, parse_grid, run_sweep, sweep, Grid};

/// Writes an unnormalized synthetic graph as a binary CSR file.
pub fn gen_graph(model: GraphModel, vertices: usize, edges: usize, seed: u64, out: &Path) -> CliResult<CsrGraph> {
    let g: CsrGraph = gen_synthetic(model, vertices, edges, seed).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(out)?);
    g.write_binary(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(g)
}
