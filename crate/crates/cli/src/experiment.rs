use std::fs;
use std::path::Path;

use gcnsim::atm::run_snf;
use gcnsim::cache::Cache;
use gcnsim::cost::{crossover_favors_feature_slicing, m_fs, perfect_tiling, MissRateFn};
use gcnsim::dataflow::{run_column_product, run_combination, run_tiled, RoundResult, TileConfig, Traversal};
use gcnsim::graph::{gen_synthetic, load_edge_list, normalize_laplacian};
use gcnsim::matrix::gen_features;
use gcnsim::memory::{energy_report, EnergyCounters, EnergyModel, EnergyReport};
use gcnsim::multichip::run_multichip;
use gcnsim::oracle::dense_aggregate;
use gcnsim::{CsrGraph, FeatureMatrix};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Dataflow, ExperimentConfig, GraphSource};
use crate::error::{CliError, CliResult};

/// One line of `rounds.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub round: usize,
    pub tile_width_arr: String,
    pub cycles: u64,
    pub topology_reads: u64,
    pub feature_reads: u64,
    pub feature_misses: u64,
    pub output_writes: u64,
    pub hit_rate: String,
    pub phase: String,
    pub direction: String,
    pub dram_bytes: u64,
    pub macs: u64,
    pub cache_accesses: u64,
}

impl TraceRow {
    fn new(r: &RoundResult, phase: &str, direction: &str) -> Self {
        TraceRow {
            round: r.round,
            tile_width_arr: join_widths(&r.tile_width_arr),
            cycles: r.cycles,
            topology_reads: r.topology_reads,
            feature_reads: r.feature_read_requests,
            feature_misses: r.feature_misses,
            output_writes: r.output_writes,
            hit_rate: format!("{:.6}", r.hit_rate()),
            phase: phase.to_string(),
            direction: direction.to_string(),
            dram_bytes: r.dram_bytes,
            macs: r.macs,
            cache_accesses: r.cache_accesses,
        }
    }
}

pub fn join_widths(w: &[u8]) -> String {
    w.iter().map(u8::to_string).collect::<Vec<_>>().join(";")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinalConfig {
    pub num_slices: usize,
    pub tile_width_arr: Vec<u8>,
}

/// Result of running one dataflow on one workload.
#[derive(Clone, Debug)]
pub struct DataflowRun {
    pub rows: Vec<TraceRow>,
    pub rounds: Vec<RoundResult>,
    pub output: FeatureMatrix,
    pub final_config: FinalConfig,
    pub settled: Option<bool>,
}

impl DataflowRun {
    pub fn total(&self) -> RoundResult {
        RoundResult::accumulate(&self.rounds)
    }
}

pub struct Workload {
    pub graph: CsrGraph,
    /// Input to aggregation: the combined features when a combination
    /// phase is configured.
    pub features: FeatureMatrix,
    pub combination_cycles: Option<u64>,
}

pub fn load_graph(src: &GraphSource, normalize: bool) -> CliResult<CsrGraph> {
    let g = match src {
        GraphSource::Generate(g) => gen_synthetic(g.model, g.vertices, g.edges, g.seed)?,
        GraphSource::File(path) => {
            let bytes = fs::read(path)
                .map_err(|e| CliError::Config(format!("graph.file: cannot read {}: {e}", path.display())))?;
            if bytes.starts_with(b"SNFG") {
                CsrGraph::read_binary(bytes.as_slice())?
            } else {
                let text = String::from_utf8(bytes)
                    .map_err(|_| CliError::Config(format!("graph.file: {} is not UTF-8 text", path.display())))?;
                load_edge_list(&text, None).map_err(|e| CliError::Config(format!("graph.file: {e}")))?
            }
        }
    };
    Ok(if normalize { normalize_laplacian(&g) } else { g })
}

pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Workload> {
    let graph = load_graph(&cfg.graph, cfg.normalize)?;
    let x = gen_features(graph.num_vertices(), cfg.features.width, cfg.features.seed);
    let (features, combination_cycles) = match &cfg.combination {
        Some(c) => {
            let w = gen_features(cfg.features.width, c.out_features, c.weight_seed);
            let (xw, cycles) = run_combination(&x, &w, &c.systolic)?;
            (xw, Some(cycles))
        }
        None => (x, None),
    };
    Ok(Workload {
        graph,
        features,
        combination_cycles,
    })
}

fn static_run(cfg: &ExperimentConfig, w: &Workload, tiles: &TileConfig) -> CliResult<DataflowRun> {
    if tiles.num_slices > w.features.cols() {
        return Err(CliError::Config(format!(
            "tiles.num_slices: {} slices for {} feature columns",
            tiles.num_slices,
            w.features.cols()
        )));
    }
    let mut cache = Cache::new(cfg.cache)?;
    let (output, rounds) = run_tiled(&w.graph, &w.features, tiles, &mut cache, &cfg.mem, &cfg.sim_options())?;
    Ok(DataflowRun {
        rows: rounds.iter().map(|r| TraceRow::new(r, "static", "")).collect(),
        rounds,
        output,
        final_config: FinalConfig {
            num_slices: tiles.num_slices,
            tile_width_arr: tiles.tile_width_arr.clone(),
        },
        settled: None,
    })
}

/// Tiling chosen by the perfect-tiling rule for this workload and cache.
pub fn gcnax_tiles(cfg: &ExperimentConfig, w: &Workload) -> CliResult<TileConfig> {
    let (b_f, b_v) = perfect_tiling(
        w.graph.num_vertices() as u64,
        w.features.cols() as u64,
        4,
        cfg.cache.capacity_bytes,
        cfg.strict_slice_width,
    )?;
    Ok(TileConfig::uniform(b_f as usize, b_v as usize)?)
}

/// Runs `dataflow` on a fresh cache.
pub fn run_dataflow(dataflow: Dataflow, cfg: &ExperimentConfig, w: &Workload) -> CliResult<DataflowRun> {
    match dataflow {
        Dataflow::Row => static_run(cfg, w, &TileConfig::uniform(1, 1)?),
        Dataflow::Vt => {
            let mut t = cfg.tiles.to_config().map_err(|e| CliError::Config(format!("tiles: {e}")))?;
            t.num_slices = 1;
            static_run(cfg, w, &t)
        }
        Dataflow::Fs => {
            let t = cfg.tiles.to_config().map_err(|e| CliError::Config(format!("tiles: {e}")))?;
            static_run(cfg, w, &t)
        }
        Dataflow::GcnaxPerfect => static_run(cfg, w, &gcnax_tiles(cfg, w)?),
        Dataflow::SnfAtm => {
            let atm = cfg.atm_config();
            if let Some(n) = atm.num_slices {
                if n > w.features.cols() {
                    return Err(CliError::Config(format!(
                        "atm.num_slices: {n} slices for {} feature columns",
                        w.features.cols()
                    )));
                }
            }
            let mut cache = Cache::new(cfg.cache)?;
            let run = run_snf(&w.graph, &w.features, &mut cache, &cfg.mem, &atm)?;
            let rows = run
                .rounds
                .iter()
                .map(|r| {
                    let dir = r.direction.map(|d| d.to_string()).unwrap_or_default();
                    TraceRow::new(&r.result, &r.phase.to_string(), &dir)
                })
                .collect();
            Ok(DataflowRun {
                rows,
                final_config: FinalConfig {
                    num_slices: run.rounds.len(),
                    tile_width_arr: run.final_widths.clone(),
                },
                settled: Some(run.settled),
                rounds: run.rounds.into_iter().map(|r| r.result).collect(),
                output: run.output,
            })
        }
        Dataflow::Colprod => {
            let cp = cfg.colprod.unwrap_or(gcnsim::dataflow::ColProductConfig {
                adjacency_strips: 1,
                output_strips: 1,
                feature_column_group: 16,
            });
            cp.validate(w.graph.num_vertices(), w.features.cols())
                .map_err(|e| CliError::Config(format!("colprod: {e}")))?;
            let mut cache = Cache::new(cfg.cache)?;
            let (output, r) = run_column_product(&w.graph, &w.features, &cp, &mut cache, &cfg.mem)?;
            Ok(DataflowRun {
                rows: vec![TraceRow::new(&r, "static", "")],
                rounds: vec![r],
                output,
                final_config: FinalConfig {
                    num_slices: 1,
                    tile_width_arr: vec![64],
                },
                settled: None,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphInfo {
    pub vertices: usize,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Totals {
    pub cycles: u64,
    pub topology_reads: u64,
    pub feature_reads: u64,
    pub feature_misses: u64,
    pub output_writes: u64,
    pub total_words: u64,
    pub dram_bytes: u64,
    pub macs: u64,
    pub cache_accesses: u64,
    pub hit_rate: f64,
}

impl Totals {
    fn from_rounds(rounds: &[RoundResult]) -> Self {
        let t = RoundResult::accumulate(rounds);
        Totals {
            cycles: t.cycles,
            topology_reads: t.topology_reads,
            feature_reads: t.feature_read_requests,
            feature_misses: t.feature_misses,
            output_writes: t.output_writes,
            total_words: t.total_words(),
            dram_bytes: t.dram_bytes,
            macs: t.macs,
            cache_accesses: t.cache_accesses,
            hit_rate: t.hit_rate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostSummary {
    pub crossover_favors_feature_slicing: bool,
    /// Analytic word count with the measured miss rate substituted; only
    /// for uniform static tilings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_total_words: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub dataflow: String,
    pub cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CombinationSummary {
    pub out_features: usize,
    pub cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultichipSummary {
    pub chips: usize,
    pub num_slices: usize,
    pub steps: usize,
    pub send_bytes_per_chip: u64,
    pub cycles: u64,
    pub compute_cycles: u64,
    pub exposed_comm_cycles: u64,
    pub single_chip_cycles: u64,
    pub speedup: f64,
    pub output_matches_single_chip: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub dataflow: String,
    pub graph: GraphInfo,
    pub feature_width: usize,
    pub rounds: usize,
    pub totals: Totals,
    pub final_config: FinalConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atm_settled: Option<bool>,
    pub cost_model: CostSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combination: Option<CombinationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multichip: Option<MultichipSummary>,
    pub output_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_reference: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyFile {
    pub model: EnergyModel,
    pub counters: EnergyCounters,
    pub report: EnergyReport,
}

pub struct Report {
    pub run: DataflowRun,
    pub baseline: Option<DataflowRun>,
    pub summary: Summary,
    pub energy: EnergyFile,
}

pub fn output_hash(m: &FeatureMatrix) -> String {
    let mut h = Sha256::new();
    for v in m.data() {
        h.update(v.raw().to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

fn predicted_words(dataflow: Dataflow, cfg: &ExperimentConfig, w: &Workload, run: &DataflowRun) -> Option<f64> {
    let static_uniform = matches!(dataflow, Dataflow::Row | Dataflow::Vt | Dataflow::Fs | Dataflow::GcnaxPerfect);
    let widths = &run.final_config.tile_width_arr;
    if !static_uniform || cfg.traversal != Traversal::RepeatOutput || widths.windows(2).any(|p| p[0] != p[1]) {
        return None;
    }
    let t = run.total();
    let rate = if t.feature_read_requests == 0 {
        0.0
    } else {
        t.feature_misses as f64 / t.feature_read_requests as f64
    };
    let r = m_fs(
        w.graph.num_vertices() as u64,
        w.graph.num_edges() as u64,
        w.features.cols() as u64,
        run.final_config.num_slices as u64,
        widths.len() as u64,
        &MissRateFn::Constant(rate),
    );
    Some(r.total_words)
}

/// Runs the configured experiment in memory.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<Report> {
    let w = prepare(cfg)?;
    execute_on(cfg, &w)
}

pub fn execute_on(cfg: &ExperimentConfig, w: &Workload) -> CliResult<Report> {
    let run = run_dataflow(cfg.dataflow, cfg, w)?;
    let totals = Totals::from_rounds(&run.rounds);
    let baseline = cfg.baseline.map(|b| run_dataflow(b, cfg, w)).transpose()?;
    let baseline_summary = baseline.as_ref().zip(cfg.baseline).map(|(b, d)| BaselineSummary {
        dataflow: d.name().to_string(),
        cycles: b.total().cycles,
    });
    let speedup = baseline_summary
        .as_ref()
        .map(|b| b.cycles as f64 / totals.cycles.max(1) as f64);

    let multichip = match &cfg.multichip {
        None => None,
        Some(m) => {
            let slices = m.num_slices.unwrap_or(cfg.tiles.num_slices).max(1);
            let opts = cfg.sim_options();
            let multi = run_multichip(&w.graph, &w.features, m.chips, slices, &cfg.cache, &cfg.mem, &m.link, &opts)?;
            let single = run_multichip(&w.graph, &w.features, 1, slices, &cfg.cache, &cfg.mem, &m.link, &opts)?;
            Some(MultichipSummary {
                chips: m.chips,
                num_slices: slices,
                steps: m.chips - 1,
                send_bytes_per_chip: multi.total_send_bytes_per_chip(),
                cycles: multi.report.cycles,
                compute_cycles: multi.report.compute_cycles,
                exposed_comm_cycles: multi.report.exposed_comm_cycles,
                single_chip_cycles: single.report.cycles,
                speedup: single.report.cycles as f64 / multi.report.cycles.max(1) as f64,
                output_matches_single_chip: multi.output == single.output,
            })
        }
    };

    let matches_reference = if cfg.verify {
        Some(dense_aggregate(&w.graph, &w.features)? == run.output)
    } else {
        None
    };

    let counters = EnergyCounters {
        macs: totals.macs,
        cache_accesses: totals.cache_accesses,
        dram_bytes: totals.dram_bytes,
    };
    let energy = EnergyFile {
        model: cfg.energy,
        counters,
        report: energy_report(&counters, &cfg.energy),
    };

    let summary = Summary {
        dataflow: cfg.dataflow.name().to_string(),
        graph: GraphInfo {
            vertices: w.graph.num_vertices(),
            edges: w.graph.num_edges(),
        },
        feature_width: w.features.cols(),
        rounds: run.rounds.len(),
        totals,
        final_config: run.final_config.clone(),
        atm_settled: run.settled,
        cost_model: CostSummary {
            crossover_favors_feature_slicing: w.graph.num_vertices() > 0
                && crossover_favors_feature_slicing(
                    w.graph.num_vertices() as u64,
                    w.graph.num_edges() as u64,
                    w.features.cols() as u64,
                ),
            predicted_total_words: predicted_words(cfg.dataflow, cfg, w, &run),
        },
        baseline: baseline_summary,
        speedup,
        combination: cfg.combination.as_ref().zip(w.combination_cycles).map(|(c, cycles)| CombinationSummary {
            out_features: c.out_features,
            cycles,
        }),
        multichip,
        output_sha256: output_hash(&run.output),
        matches_reference,
    };
    Ok(Report {
        run,
        baseline,
        summary,
        energy,
    })
}

fn write_rows(path: &Path, rows: &[TraceRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `rounds.csv`, `summary.json`, `energy.json` and, with a baseline,
/// `baseline_rounds.csv` into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    write_rows(&dir.join("rounds.csv"), &report.run.rows)?;
    if let Some(b) = &report.baseline {
        write_rows(&dir.join("baseline_rounds.csv"), &b.rows)?;
    }
    write_json(&dir.join("summary.json"), &report.summary)?;
    write_json(&dir.join("energy.json"), &report.energy)?;
    Ok(())
}

/// Runs the experiment and writes its files to `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Report> {
    let report = execute(cfg)?;
    write_report(&cfg.output_dir, &report)?;
    Ok(report)
}
