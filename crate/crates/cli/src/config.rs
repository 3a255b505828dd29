use std::path::{Path, PathBuf};

use gcnsim::atm::AtmConfig;
use gcnsim::cache::CacheConfig;
use gcnsim::dataflow::{ColProductConfig, SimOptions, SystolicSpec, TileConfig, Traversal};
use gcnsim::graph::GraphModel;
use gcnsim::memory::{EnergyModel, MemSpec};
use gcnsim::multichip::LinkSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataflow {
    Row,
    Vt,
    Fs,
    SnfAtm,
    Colprod,
    GcnaxPerfect,
}

impl Dataflow {
    pub fn name(self) -> &'static str {
        match self {
            Dataflow::Row => "row",
            Dataflow::Vt => "vt",
            Dataflow::Fs => "fs",
            Dataflow::SnfAtm => "snf_atm",
            Dataflow::Colprod => "colprod",
            Dataflow::GcnaxPerfect => "gcnax_perfect",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// Edge list (`u v` per line) or a binary SNFG file.
    File(PathBuf),
    Generate(GenerateSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub model: GraphModel,
    pub vertices: usize,
    pub edges: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub width: usize,
    pub seed: u64,
}

/// Static tiling. `num_strips` picks a uniform tiling; `tile_width_arr`
/// gives explicit strip widths and wins if both are set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileSpec {
    pub num_slices: usize,
    pub num_strips: usize,
    pub tile_width_arr: Option<Vec<u8>>,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec {
            num_slices: 1,
            num_strips: 1,
            tile_width_arr: None,
        }
    }
}

impl TileSpec {
    pub fn to_config(&self) -> gcnsim::Result<TileConfig> {
        match &self.tile_width_arr {
            Some(w) => TileConfig::with_widths(self.num_slices, w.clone()),
            None => TileConfig::uniform(self.num_slices, self.num_strips),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtmSettings {
    pub start_width: u8,
    pub num_slices: Option<usize>,
    pub decide_at_penultimate: bool,
}

impl Default for AtmSettings {
    fn default() -> Self {
        AtmSettings {
            start_width: 32,
            num_slices: None,
            decide_at_penultimate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultichipSpec {
    pub chips: usize,
    #[serde(default)]
    pub link: LinkSpec,
    /// Feature slices per ring; defaults to the tile spec's slice count.
    #[serde(default)]
    pub num_slices: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinationSpec {
    pub out_features: usize,
    pub weight_seed: u64,
    #[serde(default)]
    pub systolic: SystolicSpec,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    /// Replace the adjacency by its normalized Laplacian before running.
    #[serde(default = "yes")]
    pub normalize: bool,
    pub features: FeatureSpec,
    pub dataflow: Dataflow,
    #[serde(default)]
    pub tiles: TileSpec,
    #[serde(default)]
    pub atm: AtmSettings,
    #[serde(default)]
    pub colprod: Option<ColProductConfig>,
    pub cache: CacheConfig,
    #[serde(default = "MemSpec::hbm2")]
    pub mem: MemSpec,
    #[serde(default)]
    pub energy: EnergyModel,
    #[serde(default = "one")]
    pub engines: usize,
    #[serde(default)]
    pub traversal: Traversal,
    #[serde(default)]
    pub cached_outputs: bool,
    #[serde(default)]
    pub flush_between_rounds: bool,
    #[serde(default)]
    pub strict_slice_width: bool,
    #[serde(default)]
    pub multichip: Option<MultichipSpec>,
    #[serde(default)]
    pub combination: Option<CombinationSpec>,
    /// Dataflow whose cycles the summary's speedup is measured against.
    #[serde(default)]
    pub baseline: Option<Dataflow>,
    /// Compare the output with the dense reference.
    #[serde(default)]
    pub verify: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn field(name: &'static str) -> impl Fn(gcnsim::Error) -> CliError {
    move |e| CliError::Config(format!("{name}: {e}"))
}

impl ExperimentConfig {
    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            traversal: self.traversal,
            cached_outputs: self.cached_outputs,
            flush_between_rounds: self.flush_between_rounds,
            strict_slice_width: self.strict_slice_width,
            engines: self.engines,
            ..SimOptions::default()
        }
    }

    pub fn atm_config(&self) -> AtmConfig {
        AtmConfig {
            start_width: self.atm.start_width,
            num_slices: self.atm.num_slices,
            decide_at_penultimate: self.atm.decide_at_penultimate,
            sim: self.sim_options(),
        }
    }

    /// Checks everything that can be checked without loading the graph.
    pub fn validate(&self) -> CliResult<()> {
        if self.features.width == 0 {
            return Err(CliError::Config("features.width: must be positive".into()));
        }
        self.cache.validate().map_err(field("cache"))?;
        self.mem.validate().map_err(field("mem"))?;
        self.energy.validate().map_err(field("energy"))?;
        if self.engines == 0 {
            return Err(CliError::Config("engines: must be at least 1".into()));
        }
        if matches!(self.dataflow, Dataflow::Vt | Dataflow::Fs) {
            self.tiles.to_config().map_err(field("tiles"))?;
        }
        if self.dataflow == Dataflow::Vt && self.tiles.num_slices != 1 {
            return Err(CliError::Config("tiles.num_slices: vertex tiling uses a single slice".into()));
        }
        if self.dataflow == Dataflow::SnfAtm {
            gcnsim::atm::atm_init(self.atm.start_width).map_err(field("atm.start_width"))?;
            if self.atm.num_slices == Some(0) {
                return Err(CliError::Config("atm.num_slices: must be positive".into()));
            }
        }
        if self.dataflow == Dataflow::GcnaxPerfect && self.cache.capacity_bytes == 0 {
            return Err(CliError::Config("cache.capacity_bytes: perfect tiling needs a cache".into()));
        }
        if let GraphSource::Generate(g) = &self.graph {
            if g.vertices == 0 {
                return Err(CliError::Config("graph.generate.vertices: must be positive".into()));
            }
        }
        if let Some(m) = &self.multichip {
            if m.chips == 0 || !m.chips.is_power_of_two() || m.chips > 64 {
                return Err(CliError::Config("multichip.chips: must be a power of two in 1..=64".into()));
            }
            if !(m.link.bytes_per_cycle > 0.0) {
                return Err(CliError::Config("multichip.link.bytes_per_cycle: must be positive".into()));
            }
        }
        if let Some(c) = &self.combination {
            if c.out_features == 0 || c.systolic.rows == 0 || c.systolic.cols == 0 {
                return Err(CliError::Config("combination: dimensions must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Parses a config, reporting the path of the offending field on error.
pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn config_from_value(value: serde_json::Value) -> CliResult<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}
