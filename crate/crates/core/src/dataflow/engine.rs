//! Row-product family of aggregation dataflows.
//!
//! Row product, vertex tiling, feature slicing and the morphing tuner all run
//! through [`AggregationSim`]: each round processes one feature slice under one
//! tiling. Per slice, every source strip triggers a full scan of destination
//! rows that aggregates only the in-strip edges.
//!
//! Memory layout: feature slices are stored slice-major (slice `s` is a
//! contiguous `|V| x width` block starting on a line boundary), outputs live in
//! a disjoint region, and topology is streamed straight from memory. Output
//! partial sums are kept at accumulator width so any tiling reproduces the
//! reference bit-for-bit.

use std::ops::Range;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::partition::partition_equal_edges;
use super::tiling::{unit_of, unit_size, TileConfig};
use crate::cache::{Cache, StripCounter, UNIT_STRIPS};
use crate::error::{Error, Result};
use crate::graph::{tile_offsets, Csr, TiledCsrIndex};
use crate::matrix::Matrix;
use crate::memory::{round_cycles, MemSpec};
use crate::scalar::Element;

pub const WORD_BYTES: u64 = 4;
pub(crate) const OUTPUT_BASE: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    /// Source strips outermost; output partials are written once per strip.
    #[default]
    RepeatOutput,
    /// Destination strips outermost; outputs are written once and source
    /// features are re-fetched per destination strip instead.
    RepeatInput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub traversal: Traversal,
    /// Route output partial writes through the cache (write-allocate,
    /// write-back) instead of streaming them to memory.
    pub cached_outputs: bool,
    /// Invalidate the cache between rounds.
    pub flush_between_rounds: bool,
    /// Reject slices narrower than one memory transaction.
    pub strict_slice_width: bool,
    pub simd_lanes: u64,
    pub engines: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            traversal: Traversal::RepeatOutput,
            cached_outputs: false,
            flush_between_rounds: false,
            strict_slice_width: false,
            simd_lanes: 16,
            engines: 1,
        }
    }
}

/// Counters for one round (one feature slice). Word counts are 4-byte words.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: usize,
    pub slice_width: usize,
    pub tile_width_arr: Vec<u8>,
    pub cycles: u64,
    pub compute_cycles: u64,
    pub engine_compute_cycles: Vec<u64>,
    pub topology_reads: u64,
    pub feature_read_requests: u64,
    pub feature_misses: u64,
    pub output_writes: u64,
    pub feature_miss_lines: u64,
    pub cache_accesses: u64,
    pub output_fill_lines: u64,
    pub writeback_lines: u64,
    pub dram_bytes: u64,
    pub macs: u64,
    /// Feature-read line accesses/misses per unit column.
    pub unit_stats: Vec<StripCounter>,
    /// What the tuner sees; equals `cycles`/`unit_stats` unless decisions are
    /// taken before the last strip.
    pub decision_cycles: u64,
    pub decision_unit_stats: Vec<StripCounter>,
}

impl RoundResult {
    pub fn hit_rate(&self) -> f64 {
        if self.feature_read_requests == 0 {
            1.0
        } else {
            1.0 - self.feature_misses as f64 / self.feature_read_requests as f64
        }
    }

    /// Words moved to or from memory under the analytic model's accounting.
    pub fn total_words(&self) -> u64 {
        self.topology_reads + self.feature_misses + self.output_writes
    }

    /// Sums counters over rounds; cycles add, the tiling is taken from the last round.
    pub fn accumulate<'a>(rounds: impl IntoIterator<Item = &'a RoundResult>) -> RoundResult {
        let mut total = RoundResult {
            unit_stats: vec![StripCounter::default(); UNIT_STRIPS],
            ..Default::default()
        };
        for r in rounds {
            total.round = r.round;
            total.slice_width = r.slice_width;
            total.tile_width_arr = r.tile_width_arr.clone();
            total.cycles += r.cycles;
            total.compute_cycles += r.compute_cycles;
            total.topology_reads += r.topology_reads;
            total.feature_read_requests += r.feature_read_requests;
            total.feature_misses += r.feature_misses;
            total.output_writes += r.output_writes;
            total.feature_miss_lines += r.feature_miss_lines;
            total.cache_accesses += r.cache_accesses;
            total.output_fill_lines += r.output_fill_lines;
            total.writeback_lines += r.writeback_lines;
            total.dram_bytes += r.dram_bytes;
            total.macs += r.macs;
            for (t, u) in total.unit_stats.iter_mut().zip(&r.unit_stats) {
                t.accesses += u.accesses;
                t.misses += u.misses;
            }
        }
        total.decision_cycles = total.cycles;
        total.decision_unit_stats = total.unit_stats.clone();
        total
    }
}

#[derive(Default)]
struct Counters {
    topology_reads: u64,
    feature_read_requests: u64,
    feature_misses: u64,
    feature_miss_lines: u64,
    output_writes: u64,
    output_fill_lines: u64,
    writeback_lines: u64,
    cache_accesses: u64,
    macs: u64,
    edges: u64,
    engine_compute: Vec<u64>,
}

struct Cursor {
    row: usize,
    end: usize,
    edges: Range<usize>,
    in_row: bool,
}

/// Stateful aggregation simulator over one graph and feature matrix.
///
/// The cache is borrowed so its contents persist across rounds and across
/// successive runs that share it.
pub struct AggregationSim<'a, T: Element> {
    graph: &'a Csr<T>,
    features: &'a Matrix<T>,
    cache: &'a mut Cache,
    mem: MemSpec,
    opts: SimOptions,
    partition: Vec<Range<usize>>,
    unit: usize,
    acc: Vec<T::Acc>,
    index: Option<(Vec<u8>, TiledCsrIndex)>,
    slice_bases: Vec<u64>,
    num_slices: usize,
    rounds_run: usize,
}

impl<'a, T: Element> AggregationSim<'a, T> {
    pub fn new(
        graph: &'a Csr<T>,
        features: &'a Matrix<T>,
        num_slices: usize,
        cache: &'a mut Cache,
        mem: MemSpec,
        opts: SimOptions,
    ) -> Result<Self> {
        if graph.num_vertices() != features.rows() {
            return Err(Error::Dimension(format!(
                "graph has {} vertices, features have {} rows",
                graph.num_vertices(),
                features.rows()
            )));
        }
        mem.validate()?;
        if opts.simd_lanes == 0 {
            return Err(Error::InvalidParameter("simd_lanes must be positive".into()));
        }
        let f = features.cols();
        if num_slices == 0 || (f > 0 && num_slices > f) {
            return Err(Error::InvalidTiling(format!(
                "{num_slices} slices for {f} feature columns"
            )));
        }
        let probe = TileConfig {
            num_slices,
            tile_width_arr: vec![64],
        };
        if opts.strict_slice_width && f > 0 {
            let narrowest = (0..num_slices).map(|s| probe.slice_range(s, f).len()).min().unwrap_or(0);
            if narrowest as u64 * WORD_BYTES < mem.access_granularity_bytes {
                return Err(Error::InvalidTiling(format!(
                    "slice width {} B is below the {} B access granularity",
                    narrowest as u64 * WORD_BYTES,
                    mem.access_granularity_bytes
                )));
            }
        }
        let partition = partition_equal_edges(graph, opts.engines.max(1))?;
        let line = cache.block_bytes().max(1);
        let v = graph.num_vertices() as u64;
        let mut slice_bases = Vec::with_capacity(num_slices);
        let mut base = 0u64;
        for s in 0..num_slices {
            slice_bases.push(base);
            let bytes = v * probe.slice_range(s, f).len() as u64 * WORD_BYTES;
            base += bytes.div_ceil(line) * line;
        }
        Ok(AggregationSim {
            graph,
            features,
            cache,
            mem,
            partition,
            unit: unit_size(graph.num_vertices()),
            acc: vec![T::Acc::zero(); graph.num_vertices() * f],
            index: None,
            slice_bases,
            num_slices,
            rounds_run: 0,
            opts,
        })
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    pub fn partition(&self) -> &[Range<usize>] {
        &self.partition
    }

    fn prepare(&mut self, slice: usize, widths: &[u8]) -> Result<(TiledCsrIndex, Range<usize>, Counters)> {
        super::tiling::validate_widths(widths)?;
        if slice >= self.num_slices {
            return Err(Error::InvalidParameter(format!(
                "slice {slice} out of range for {} slices",
                self.num_slices
            )));
        }
        if self.index.as_ref().is_none_or(|(w, _)| w != widths) {
            let bounds = super::tiling::strip_bounds(widths, self.graph.num_vertices());
            self.index = Some((widths.to_vec(), tile_offsets(self.graph, &bounds)?));
        }
        let (_, index) = self.index.take().expect("index prepared");
        let c = Counters {
            engine_compute: vec![0; self.partition.len()],
            ..Default::default()
        };
        let probe = TileConfig {
            num_slices: self.num_slices,
            tile_width_arr: vec![64],
        };
        Ok((index, probe.slice_range(slice, self.features.cols()), c))
    }

    /// Runs feature slice `slice` under the strip widths `widths`.
    pub fn run_round(&mut self, slice: usize, widths: &[u8]) -> Result<RoundResult> {
        let (index, cols, mut c) = self.prepare(slice, widths)?;
        if self.rounds_run > 0 && self.opts.flush_between_rounds {
            c.writeback_lines += self.cache.reset(false);
        }
        self.cache.reset(true);

        let strips = index.num_strips();
        let v = self.graph.num_vertices();
        let mut decision = None;

        match self.opts.traversal {
            Traversal::RepeatOutput => {
                for s in 0..strips {
                    if s + 1 == strips && strips > 1 {
                        decision = Some((self.round_cycles(&c), c.edges, self.cache.stats().per_strip.clone()));
                    }
                    self.run_pass(&index, slice, &cols, s, 0..v, true, &mut c);
                }
            }
            Traversal::RepeatInput => {
                for d in 0..strips {
                    for s in 0..strips {
                        self.run_pass(&index, slice, &cols, s, index.strip_range(d), s + 1 == strips, &mut c);
                    }
                }
            }
        }

        let mut result = self.build_result(&c, widths, cols.len());
        if let Some((partial, partial_edges, stats)) = decision {
            if partial_edges > 0 {
                let scaled = (partial as u128 * c.edges as u128).div_ceil(partial_edges as u128);
                result.decision_cycles = scaled as u64;
                result.decision_unit_stats = stats;
            }
        }
        self.index = Some((widths.to_vec(), index));
        self.rounds_run += 1;
        Ok(result)
    }

    /// Runs the edges of source strip `strip` into destination rows `dest`
    /// only, as one round of its own. Outputs of `dest` are written at the end
    /// of the pass. Used when source pieces arrive one at a time.
    pub fn run_strip(&mut self, slice: usize, widths: &[u8], strip: usize, dest: Range<usize>) -> Result<RoundResult> {
        let (index, cols, mut c) = self.prepare(slice, widths)?;
        if strip >= index.num_strips() || dest.end > self.graph.num_vertices() || dest.start > dest.end {
            self.index = Some((widths.to_vec(), index));
            return Err(Error::InvalidParameter(format!(
                "strip {strip} or rows {dest:?} out of range"
            )));
        }
        self.cache.reset(true);
        self.run_pass(&index, slice, &cols, strip, dest, true, &mut c);
        let result = self.build_result(&c, widths, cols.len());
        self.index = Some((widths.to_vec(), index));
        self.rounds_run += 1;
        Ok(result)
    }

    fn build_result(&self, c: &Counters, widths: &[u8], slice_width: usize) -> RoundResult {
        let cycles = self.round_cycles(c);
        let unit_stats = self.cache.stats().per_strip.clone();
        RoundResult {
            round: self.rounds_run,
            slice_width,
            tile_width_arr: widths.to_vec(),
            cycles,
            compute_cycles: c.engine_compute.iter().copied().max().unwrap_or(0),
            engine_compute_cycles: c.engine_compute.clone(),
            topology_reads: c.topology_reads,
            feature_read_requests: c.feature_read_requests,
            feature_misses: c.feature_misses,
            output_writes: c.output_writes,
            feature_miss_lines: c.feature_miss_lines,
            cache_accesses: c.cache_accesses,
            output_fill_lines: c.output_fill_lines,
            writeback_lines: c.writeback_lines,
            dram_bytes: self.dram_bytes(c),
            macs: c.macs,
            decision_cycles: cycles,
            decision_unit_stats: unit_stats.clone(),
            unit_stats,
        }
    }

    fn dram_bytes(&self, c: &Counters) -> u64 {
        let line = self.cache.block_bytes();
        let topo = self.mem.round_to_granularity(c.topology_reads * WORD_BYTES);
        let features = c.feature_miss_lines * line;
        let outputs = if self.opts.cached_outputs && self.cache.is_enabled() {
            c.output_fill_lines * line
        } else {
            self.mem.round_to_granularity(c.output_writes * WORD_BYTES)
        };
        topo + features + outputs + c.writeback_lines * line
    }

    fn round_cycles(&self, c: &Counters) -> u64 {
        let compute = c.engine_compute.iter().copied().max().unwrap_or(0);
        round_cycles(compute, self.dram_bytes(c), &self.mem)
    }

    #[allow(clippy::too_many_arguments)]
    fn run_pass(
        &mut self,
        index: &TiledCsrIndex,
        slice: usize,
        cols: &Range<usize>,
        strip: usize,
        dest: Range<usize>,
        write_outputs: bool,
        c: &mut Counters,
    ) {
        let mut cursors: Vec<Cursor> = self
            .partition
            .iter()
            .map(|p| {
                let start = p.start.max(dest.start);
                Cursor {
                    row: start,
                    end: p.end.min(dest.end).max(start),
                    edges: 0..0,
                    in_row: false,
                }
            })
            .collect();
        // round-robin one edge per engine
        loop {
            let mut progressed = false;
            for (e, cur) in cursors.iter_mut().enumerate() {
                while cur.edges.is_empty() {
                    if cur.in_row {
                        if write_outputs {
                            self.write_output(slice, cols, cur.row, c);
                        }
                        cur.row += 1;
                        cur.in_row = false;
                    }
                    if cur.row >= cur.end {
                        break;
                    }
                    c.topology_reads += 1;
                    cur.edges = index.edge_range(cur.row, strip);
                    cur.in_row = true;
                }
                if let Some(edge) = cur.edges.next() {
                    self.process_edge(slice, cols, cur.row, edge, e, c);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
    }

    fn process_edge(&mut self, slice: usize, cols: &Range<usize>, row: usize, edge: usize, engine: usize, c: &mut Counters) {
        let src = self.graph.col_idx()[edge] as usize;
        let weight = self.graph.edge_weight()[edge];
        let width = cols.len() as u64;
        c.topology_reads += 1;
        c.edges += 1;
        c.feature_read_requests += width;
        c.macs += width;
        c.engine_compute[engine] += width.div_ceil(self.opts.simd_lanes);

        if width > 0 {
            let line = self.cache.block_bytes();
            let start = self.slice_bases[slice] + src as u64 * width * WORD_BYTES;
            let end = start + width * WORD_BYTES;
            let strip = Some(unit_of(src, self.unit));
            let mut addr = start - start % line;
            while addr < end {
                let words = (end.min(addr + line) - start.max(addr)) / WORD_BYTES;
                c.cache_accesses += 1;
                if !self.cache.access(addr, strip).is_hit() {
                    c.feature_misses += words;
                    c.feature_miss_lines += 1;
                }
                addr += line;
            }
        }

        let f = self.features.cols();
        let x = &self.features.row(src)[cols.clone()];
        let acc = &mut self.acc[row * f + cols.start..row * f + cols.end];
        for (a, &xv) in acc.iter_mut().zip(x) {
            *a = *a + weight.widen_mul(xv);
        }
    }

    fn write_output(&mut self, slice: usize, cols: &Range<usize>, row: usize, c: &mut Counters) {
        let width = cols.len() as u64;
        c.output_writes += width;
        if !(self.opts.cached_outputs && self.cache.is_enabled()) || width == 0 {
            return;
        }
        let line = self.cache.block_bytes();
        let start = OUTPUT_BASE + self.slice_bases[slice] + row as u64 * width * WORD_BYTES;
        let end = start + width * WORD_BYTES;
        let mut addr = start - start % line;
        while addr < end {
            c.cache_accesses += 1;
            let r = self.cache.access_rw(addr, None, true);
            if !r.outcome.is_hit() {
                c.output_fill_lines += 1;
            }
            c.writeback_lines += r.writeback as u64;
            addr += line;
        }
    }

    /// Charges dirty output lines still resident to `last` and narrows the
    /// accumulated outputs.
    pub fn finish(self, last: Option<&mut RoundResult>) -> Matrix<T> {
        if let Some(r) = last {
            if self.opts.cached_outputs && self.cache.is_enabled() {
                let dirty = self.cache.dirty_lines();
                let line = self.cache.block_bytes();
                r.writeback_lines += dirty;
                r.dram_bytes += dirty * line;
                let extra = round_cycles(r.compute_cycles, r.dram_bytes, &self.mem);
                r.cycles = extra;
                r.decision_cycles = r.decision_cycles.max(extra);
            }
        }
        let data = self.acc.into_iter().map(T::narrow).collect();
        Matrix::new(self.graph.num_vertices(), self.features.cols(), data).expect("shape preserved")
    }
}

/// Unsliced, untiled aggregation: one round over the whole feature width.
pub fn run_row_product<T: Element>(
    graph: &Csr<T>,
    features: &Matrix<T>,
    cache: &mut Cache,
    mem: &MemSpec,
) -> Result<(Matrix<T>, RoundResult)> {
    let tiles = TileConfig::uniform(1, 1)?;
    let (out, mut rounds) = run_tiled(graph, features, &tiles, cache, mem, &SimOptions::default())?;
    Ok((out, rounds.pop().expect("one round")))
}

/// Feature slicing with a static tiling; one round per slice.
pub fn run_feature_sliced<T: Element>(
    graph: &Csr<T>,
    features: &Matrix<T>,
    tiles: &TileConfig,
    cache: &mut Cache,
    mem: &MemSpec,
    traversal: Traversal,
) -> Result<(Matrix<T>, Vec<RoundResult>)> {
    let opts = SimOptions {
        traversal,
        ..SimOptions::default()
    };
    run_tiled(graph, features, tiles, cache, mem, &opts)
}

/// Several engines sharing one cache and memory, each owning an
/// edge-balanced range of destination vertices.
pub fn run_multi_engine<T: Element>(
    graph: &Csr<T>,
    features: &Matrix<T>,
    tiles: &TileConfig,
    n_engines: usize,
    shared_cache: &mut Cache,
    mem: &MemSpec,
) -> Result<(Matrix<T>, Vec<RoundResult>)> {
    let opts = SimOptions {
        engines: n_engines,
        ..SimOptions::default()
    };
    run_tiled(graph, features, tiles, shared_cache, mem, &opts)
}

/// Static-tiling run with full control over simulation options.
pub fn run_tiled<T: Element>(
    graph: &Csr<T>,
    features: &Matrix<T>,
    tiles: &TileConfig,
    cache: &mut Cache,
    mem: &MemSpec,
    opts: &SimOptions,
) -> Result<(Matrix<T>, Vec<RoundResult>)> {
    tiles.validate()?;
    let mut sim = AggregationSim::new(graph, features, tiles.num_slices, cache, *mem, opts.clone())?;
    let mut rounds = Vec::with_capacity(tiles.num_slices);
    for s in 0..tiles.num_slices {
        rounds.push(sim.run_round(s, &tiles.tile_width_arr)?);
    }
    let out = sim.finish(rounds.last_mut());
    Ok((out, rounds))
}
