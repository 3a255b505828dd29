//! Multi-chip scaling with a ring all-gather.
//!
//! Every chip holds a copy of the weights and one horizontal piece of the
//! feature matrix, and owns the output rows of that piece. Pieces travel
//! around the ring; while one piece is in flight the chip aggregates the one
//! it just received. After `N - 1` transfers every chip has seen every piece.

use serde::{Deserialize, Serialize};

use crate::cache::{Cache, CacheConfig, UNIT_STRIPS};
use crate::dataflow::{AggregationSim, RoundResult, SimOptions, TileConfig};
use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::matrix::Matrix;
use crate::memory::MemSpec;
use crate::scalar::Element;

/// Chip-to-chip link; at 1 GHz bytes per cycle equal GB/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub bytes_per_cycle: f64,
    pub hop_latency_cycles: u64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec {
            bytes_per_cycle: 256.0,
            hop_latency_cycles: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommPlan {
    pub num_chips: usize,
    pub steps: usize,
    pub bytes_per_step: u64,
    pub link_bytes_per_cycle: f64,
    pub hop_latency_cycles: u64,
}

impl CommPlan {
    pub fn total_send_bytes(&self) -> u64 {
        self.steps as u64 * self.bytes_per_step
    }

    pub fn comm_step_cycles(&self) -> u64 {
        if self.steps == 0 {
            return 0;
        }
        (self.bytes_per_step as f64 / self.link_bytes_per_cycle).ceil() as u64 + self.hop_latency_cycles
    }
}

pub fn plan_ring_allgather(num_chips: usize, v: usize, f: usize, elem_bytes: u64, link: &LinkSpec) -> Result<CommPlan> {
    if num_chips == 0 {
        return Err(Error::InvalidParameter("need at least one chip".into()));
    }
    if !(link.bytes_per_cycle > 0.0) {
        return Err(Error::InvalidParameter("link bandwidth must be positive".into()));
    }
    let steps = num_chips - 1;
    Ok(CommPlan {
        num_chips,
        steps,
        bytes_per_step: if steps == 0 {
            0
        } else {
            v.div_ceil(num_chips) as u64 * f as u64 * elem_bytes
        },
        link_bytes_per_cycle: link.bytes_per_cycle,
        hop_latency_cycles: link.hop_latency_cycles,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultichipReport {
    pub cycles: u64,
    pub compute_cycles: u64,
    pub exposed_comm_cycles: u64,
}

impl std::ops::AddAssign for MultichipReport {
    fn add_assign(&mut self, o: Self) {
        self.cycles += o.cycles;
        self.compute_cycles += o.compute_cycles;
        self.exposed_comm_cycles += o.exposed_comm_cycles;
    }
}

/// Overlaps each piece's compute with the transfer of the next piece. The
/// last piece has nothing left to receive, so its compute is not overlapped.
pub fn simulate_multichip(step_compute_cycles: &[u64], plan: &CommPlan) -> Result<MultichipReport> {
    if step_compute_cycles.len() != plan.num_chips {
        return Err(Error::Dimension(format!(
            "{} compute steps for {} chips",
            step_compute_cycles.len(),
            plan.num_chips
        )));
    }
    let comm = plan.comm_step_cycles();
    let (overlapped, last) = step_compute_cycles.split_at(plan.steps);
    let mut r = MultichipReport::default();
    for &c in overlapped {
        r.cycles += c.max(comm);
        r.exposed_comm_cycles += comm.saturating_sub(c);
    }
    r.cycles += last[0];
    r.compute_cycles = step_compute_cycles.iter().sum();
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct MultichipRun<T> {
    pub output: Matrix<T>,
    /// One plan per feature slice.
    pub plans: Vec<CommPlan>,
    pub report: MultichipReport,
    /// `[slice][chip][step]` round results.
    pub chip_rounds: Vec<Vec<Vec<RoundResult>>>,
}

impl<T> MultichipRun<T> {
    pub fn total_send_bytes_per_chip(&self) -> u64 {
        self.plans.iter().map(CommPlan::total_send_bytes).sum()
    }
}

/// Runs aggregation split over `num_chips` chips, each with its own cache
/// and memory. Pieces coincide with uniform source strips, so the chip
/// count must be a power of two no larger than 64.
#[allow(clippy::too_many_arguments)]
pub fn run_multichip<T: Element>(
    graph: &Csr<T>,
    features: &Matrix<T>,
    num_chips: usize,
    num_slices: usize,
    cache: &CacheConfig,
    mem: &MemSpec,
    link: &LinkSpec,
    opts: &SimOptions,
) -> Result<MultichipRun<T>> {
    if num_chips == 0 || !num_chips.is_power_of_two() || num_chips > UNIT_STRIPS {
        return Err(Error::InvalidParameter(format!(
            "chip count must be a power of two in 1..=64, got {num_chips}"
        )));
    }
    let tiles = TileConfig::uniform(num_slices, num_chips)?;
    let bounds = tiles.strip_bounds(graph.num_vertices());
    let widths = tiles.tile_width_arr.clone();

    let mut caches = (0..num_chips).map(|_| Cache::new(*cache)).collect::<Result<Vec<_>>>()?;
    let mut sims = caches
        .iter_mut()
        .map(|c| AggregationSim::new(graph, features, num_slices, c, *mem, opts.clone()))
        .collect::<Result<Vec<_>>>()?;

    let mut plans = Vec::with_capacity(num_slices);
    let mut report = MultichipReport::default();
    let mut chip_rounds = Vec::with_capacity(num_slices);
    for s in 0..num_slices {
        let width = tiles.slice_range(s, features.cols()).len();
        let plan = plan_ring_allgather(num_chips, graph.num_vertices(), width, 4, link)?;
        let mut per_chip = Vec::with_capacity(num_chips);
        for (c, sim) in sims.iter_mut().enumerate() {
            let rows = bounds[c]..bounds[c + 1];
            let mut steps = Vec::with_capacity(num_chips);
            for i in 0..num_chips {
                // own piece first, then whatever arrives from the left neighbour
                let piece = (c + num_chips - i) % num_chips;
                steps.push(sim.run_strip(s, &widths, piece, rows.clone())?);
            }
            per_chip.push(steps);
        }
        let step_compute: Vec<u64> = (0..num_chips)
            .map(|i| per_chip.iter().map(|steps| steps[i].cycles).max().unwrap_or(0))
            .collect();
        report += simulate_multichip(&step_compute, &plan)?;
        plans.push(plan);
        chip_rounds.push(per_chip);
    }

    let f = features.cols();
    let mut data = Vec::with_capacity(graph.num_vertices() * f);
    for (c, sim) in sims.into_iter().enumerate() {
        let out = sim.finish(None);
        data.extend_from_slice(&out.data()[bounds[c] * f..bounds[c + 1] * f]);
    }
    Ok(MultichipRun {
        output: Matrix::new(graph.num_vertices(), f, data)?,
        plans,
        report,
        chip_rounds,
    })
}
