//! Automatic tile morphing: an online tuner that picks the vertical strip
//! widths for the next feature slice from the measurements of the last one.
//!
//! The tuner first probes the start tiling and its two uniform neighbours,
//! keeps doubling or halving in the better direction until a round gets
//! slower, then refines single strips (split the worst, then merge the best)
//! and finally settles on the fastest configuration it has measured.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cache::{Cache, StripCounter, UNIT_STRIPS};
use crate::dataflow::{validate_widths, AggregationSim, RoundResult, SimOptions, WORD_BYTES};
use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::matrix::Matrix;
use crate::memory::MemSpec;
use crate::scalar::Element;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Coarse,
    FineSplit,
    FineMerge,
    Settled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// More, narrower strips.
    Halving,
    /// Fewer, wider strips.
    Merging,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Coarse => "coarse",
            Phase::FineSplit => "fine_split",
            Phase::FineMerge => "fine_merge",
            Phase::Settled => "settled",
        })
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Halving => "halving",
            Direction::Merging => "merging",
        })
    }
}

/// One measured round as stored in the status table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub cycles: u64,
    pub tile_width_arr: Vec<u8>,
    pub miss_ratio: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AtmState {
    pub phase: Phase,
    pub direction: Direction,
    pub round_cur: Option<RoundRecord>,
    pub round_opt: Option<RoundRecord>,
    pub tile_updated_idx: Option<usize>,
    /// Every measured round, in order.
    pub history: Vec<RoundRecord>,
    /// Widths the next round will run with.
    next: Vec<u8>,
    /// Direction that produced `next`, if any.
    next_direction: Option<Direction>,
    next_phase: Phase,
    pending_probes: VecDeque<(Direction, Vec<u8>)>,
    probing: bool,
}

/// Uniform tiling with every strip `w` unit columns wide.
fn uniform(w: u8) -> Vec<u8> {
    vec![w; UNIT_STRIPS / w as usize]
}

/// Every strip split in two, or `None` if some strip is one unit wide.
pub fn halve_all(widths: &[u8]) -> Option<Vec<u8>> {
    if widths.iter().any(|&w| w < 2) {
        return None;
    }
    Some(widths.iter().flat_map(|&w| [w / 2, w / 2]).collect())
}

/// Adjacent pairs merged, or `None` unless every pair has equal widths.
pub fn merge_pairs(widths: &[u8]) -> Option<Vec<u8>> {
    if widths.len() < 2 || !widths.len().is_multiple_of(2) {
        return None;
    }
    widths
        .chunks(2)
        .map(|p| (p[0] == p[1]).then(|| p[0] * 2))
        .collect()
}

/// Splits the strip with the highest miss ratio. Width-1 strips are
/// skipped; ties go to the lower index.
pub fn split_worst(widths: &[u8], miss_ratio: &[f64]) -> Option<(usize, Vec<u8>)> {
    let idx = (0..widths.len())
        .filter(|&i| widths[i] > 1)
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if miss_ratio[b] >= miss_ratio[i] => Some(b),
            _ => Some(i),
        })?;
    let mut out = widths.to_vec();
    out[idx] /= 2;
    out.insert(idx, widths[idx] / 2);
    Some((idx, out))
}

/// Merges the strip with the lowest miss ratio into the neighbour with the
/// lower miss ratio (right on ties). Only equal-width pairs merge; when the
/// preferred pair is unequal the other neighbour is tried, then the next
/// best strip. Returns the index of the merged strip.
pub fn merge_best(widths: &[u8], miss_ratio: &[f64]) -> Option<(usize, Vec<u8>)> {
    let n = widths.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| miss_ratio[a].total_cmp(&miss_ratio[b]).then(a.cmp(&b)));
    for i in order {
        let left = i.checked_sub(1);
        let right = (i + 1 < n).then_some(i + 1);
        let partners = match (left, right) {
            (Some(l), Some(r)) if miss_ratio[l] < miss_ratio[r] => [Some(l), Some(r)],
            (l, r) => [r, l],
        };
        for j in partners.into_iter().flatten() {
            if widths[i] == widths[j] {
                let lo = i.min(j);
                let mut out = widths.to_vec();
                out[lo] *= 2;
                out.remove(lo + 1);
                return Some((lo, out));
            }
        }
    }
    None
}

/// Sums unit-column counters over each strip.
pub fn fold_unit_counters(unit_stats: &[StripCounter], widths: &[u8]) -> Vec<StripCounter> {
    let mut start = 0usize;
    widths
        .iter()
        .map(|&w| {
            let end = start + w as usize;
            let folded = unit_stats[start.min(unit_stats.len())..end.min(unit_stats.len())]
                .iter()
                .fold(StripCounter::default(), |acc, c| StripCounter {
                    accesses: acc.accesses + c.accesses,
                    misses: acc.misses + c.misses,
                });
            start = end;
            folded
        })
        .collect()
}

/// Per-strip miss ratio; a strip with no accesses reports 0.
pub fn fold_unit_stats(unit_stats: &[StripCounter], widths: &[u8]) -> Vec<f64> {
    fold_unit_counters(unit_stats, widths)
        .iter()
        .map(StripCounter::miss_ratio)
        .collect()
}

/// Bytes of controller state: per-unit access/miss/ratio registers plus the
/// status table (current, optimal and output width arrays, two cycle counts
/// and a few flag bytes).
pub const fn status_table_bytes() -> usize {
    3 * UNIT_STRIPS * 4 + 2 * 8 + 4
}

pub const fn controller_bytes() -> usize {
    3 * UNIT_STRIPS * 4 + status_table_bytes()
}

pub fn atm_init(start_width: u8) -> Result<AtmState> {
    if start_width == 0 || !start_width.is_power_of_two() || start_width as usize > UNIT_STRIPS {
        return Err(Error::InvalidTiling(format!(
            "start width must be a power of two dividing 64, got {start_width}"
        )));
    }
    let start = uniform(start_width);
    let mut pending = VecDeque::new();
    if let Some(h) = halve_all(&start) {
        pending.push_back((Direction::Halving, h));
    }
    if let Some(m) = merge_pairs(&start) {
        pending.push_back((Direction::Merging, m));
    }
    Ok(AtmState {
        phase: Phase::Coarse,
        direction: Direction::Halving,
        round_cur: None,
        round_opt: None,
        tile_updated_idx: None,
        history: Vec::new(),
        next: start,
        next_direction: None,
        next_phase: Phase::Coarse,
        pending_probes: pending,
        probing: true,
    })
}

impl AtmState {
    /// Widths the next round should run with.
    pub fn next_widths(&self) -> &[u8] {
        &self.next
    }

    /// Phase and direction under which `next_widths` was chosen.
    pub fn next_label(&self) -> (Phase, Option<Direction>) {
        (self.next_phase, self.next_direction)
    }

    fn opt(&self) -> &RoundRecord {
        self.round_opt.as_ref().expect("at least one round measured")
    }

    fn set_next(&mut self, widths: Vec<u8>, direction: Option<Direction>) -> Vec<u8> {
        self.next = widths;
        self.next_direction = direction;
        self.next_phase = self.phase;
        self.next.clone()
    }

    fn settle(&mut self) -> Vec<u8> {
        self.phase = Phase::Settled;
        self.tile_updated_idx = None;
        let w = self.opt().tile_width_arr.clone();
        self.set_next(w, None)
    }

    /// Leaves coarse morphing from the best tiling so far.
    fn enter_fine_split(&mut self) -> Vec<u8> {
        self.phase = Phase::FineSplit;
        self.direction = Direction::Halving;
        let opt = self.opt().clone();
        match split_worst(&opt.tile_width_arr, &opt.miss_ratio) {
            Some((idx, w)) => {
                self.tile_updated_idx = Some(idx);
                self.set_next(w, Some(Direction::Halving))
            }
            None => self.enter_fine_merge(),
        }
    }

    fn enter_fine_merge(&mut self) -> Vec<u8> {
        self.phase = Phase::FineMerge;
        self.direction = Direction::Merging;
        let opt = self.opt().clone();
        match merge_best(&opt.tile_width_arr, &opt.miss_ratio) {
            Some((idx, w)) => {
                self.tile_updated_idx = Some(idx);
                self.set_next(w, Some(Direction::Merging))
            }
            None => self.settle(),
        }
    }

    fn coarse_continue(&mut self) -> Vec<u8> {
        let base = self.opt().tile_width_arr.clone();
        let next = match self.direction {
            Direction::Halving => halve_all(&base),
            Direction::Merging => merge_pairs(&base),
        };
        match next {
            Some(w) => {
                let d = self.direction;
                self.set_next(w, Some(d))
            }
            // nothing further to probe in this direction
            None => self.enter_fine_split(),
        }
    }
}

/// Feeds the measurement of the round that ran with `state.next_widths()`
/// and returns the widths for the next round.
pub fn atm_step(state: &mut AtmState, cycles: u64, miss_ratio: &[f64]) -> Result<Vec<u8>> {
    if miss_ratio.len() != state.next.len() {
        return Err(Error::InvalidParameter(format!(
            "{} miss ratios for {} strips",
            miss_ratio.len(),
            state.next.len()
        )));
    }
    let cur = RoundRecord {
        cycles,
        tile_width_arr: state.next.clone(),
        miss_ratio: miss_ratio.to_vec(),
    };
    state.history.push(cur.clone());
    state.round_cur = Some(cur.clone());
    let faster = state.round_opt.as_ref().is_none_or(|o| cur.cycles < o.cycles);
    if faster {
        // once settled this only refreshes the measurement of the same widths
        state.round_opt = Some(cur);
    }
    if state.phase == Phase::Settled {
        return Ok(state.next.clone());
    }

    let next = match state.phase {
        Phase::Coarse if state.probing => {
            if let Some((d, w)) = state.pending_probes.pop_front() {
                return Ok(state.set_next(w, Some(d)));
            }
            state.probing = false;
            // probes ran start, halving, merging in that order, so a strict
            // running minimum already breaks ties toward the start and then
            // toward halving
            let best = state.opt().tile_width_arr.clone();
            let start = &state.history[state.history.len() - 1 - state.probe_count()].tile_width_arr;
            if best == *start {
                state.enter_fine_split()
            } else {
                state.direction = if best.len() > start.len() {
                    Direction::Halving
                } else {
                    Direction::Merging
                };
                state.coarse_continue()
            }
        }
        Phase::Coarse => {
            if faster {
                state.coarse_continue()
            } else {
                state.enter_fine_split()
            }
        }
        Phase::FineSplit => {
            if faster {
                let opt = state.opt().clone();
                match split_worst(&opt.tile_width_arr, &opt.miss_ratio) {
                    Some((idx, w)) => {
                        state.tile_updated_idx = Some(idx);
                        state.set_next(w, Some(Direction::Halving))
                    }
                    None => state.enter_fine_merge(),
                }
            } else {
                state.enter_fine_merge()
            }
        }
        Phase::FineMerge => {
            if faster {
                let opt = state.opt().clone();
                match merge_best(&opt.tile_width_arr, &opt.miss_ratio) {
                    Some((idx, w)) => {
                        state.tile_updated_idx = Some(idx);
                        state.set_next(w, Some(Direction::Merging))
                    }
                    None => state.settle(),
                }
            } else {
                state.settle()
            }
        }
        Phase::Settled => unreachable!(),
    };
    Ok(next)
}

impl AtmState {
    /// Number of neighbour probes issued after the start round.
    fn probe_count(&self) -> usize {
        let start = &self.history[0].tile_width_arr;
        usize::from(halve_all(start).is_some()) + usize::from(merge_pairs(start).is_some())
    }

    /// Best configuration measured so far, or the start tiling before any round.
    pub fn best_widths(&self) -> &[u8] {
        self.round_opt.as_ref().map_or(&self.next, |o| &o.tile_width_arr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtmConfig {
    /// Width of each strip in the first round (32 gives 2 x 2 tiles).
    pub start_width: u8,
    /// Number of feature slices; `None` derives it from 64-byte slices.
    pub num_slices: Option<usize>,
    /// Decide from the stats gathered before the last strip of a round.
    pub decide_at_penultimate: bool,
    pub sim: SimOptions,
}

impl Default for AtmConfig {
    fn default() -> Self {
        AtmConfig {
            start_width: 32,
            num_slices: None,
            decide_at_penultimate: false,
            sim: SimOptions::default(),
        }
    }
}

/// Slices of 64 bytes each, at least one.
pub fn default_num_slices(num_features: usize) -> usize {
    (num_features * WORD_BYTES as usize / 64).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtmRound {
    pub result: RoundResult,
    pub phase: Phase,
    pub direction: Option<Direction>,
}

#[derive(Clone, Debug)]
pub struct AtmRun<T> {
    pub output: Matrix<T>,
    pub rounds: Vec<AtmRound>,
    /// Best measured widths; the settled configuration once the tuner settles.
    pub final_widths: Vec<u8>,
    pub settled: bool,
    pub state: AtmState,
}

impl<T> AtmRun<T> {
    pub fn total_cycles(&self) -> u64 {
        self.rounds.iter().map(|r| r.result.cycles).sum()
    }
}

/// Feature slicing with the tiling retuned between slices.
pub fn run_snf<T: Element>(
    graph: &Csr<T>,
    features: &Matrix<T>,
    cache: &mut Cache,
    mem: &MemSpec,
    cfg: &AtmConfig,
) -> Result<AtmRun<T>> {
    let slices = cfg.num_slices.unwrap_or_else(|| default_num_slices(features.cols()));
    let mut state = atm_init(cfg.start_width)?;
    let mut sim = AggregationSim::new(graph, features, slices, cache, *mem, cfg.sim.clone())?;
    let mut rounds = Vec::with_capacity(slices);
    for s in 0..slices {
        let widths = state.next_widths().to_vec();
        validate_widths(&widths)?;
        let (phase, direction) = state.next_label();
        let result = sim.run_round(s, &widths)?;
        let (cycles, stats) = if cfg.decide_at_penultimate {
            (result.decision_cycles, &result.decision_unit_stats)
        } else {
            (result.cycles, &result.unit_stats)
        };
        let ratios = fold_unit_stats(stats, &widths);
        atm_step(&mut state, cycles, &ratios)?;
        rounds.push(AtmRound {
            result,
            phase,
            direction,
        });
    }
    let output = sim.finish(rounds.last_mut().map(|r| &mut r.result));
    Ok(AtmRun {
        output,
        final_widths: state.best_widths().to_vec(),
        settled: state.phase == Phase::Settled,
        rounds,
        state,
    })
}
