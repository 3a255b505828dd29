//! Column-product aggregation.
//!
//! The outer loops walk output column strips, adjacency (source) strips and
//! feature-column groups; the inner loop walks the nonzeros of one column of
//! the topology and scatters scaled contributions into output partials. The
//! topology strip is read through the cache so it can be reused across column
//! groups, and output partials are read-modify-written through the cache.

use std::ops::Range;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::engine::{RoundResult, WORD_BYTES, OUTPUT_BASE};
use super::tiling::{unit_of, unit_size};
use crate::cache::{Cache, UNIT_STRIPS};
use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::matrix::Matrix;
use crate::memory::{round_cycles, MemSpec};
use crate::scalar::Element;

const TOPOLOGY_BASE: u64 = 1 << 41;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColProductConfig {
    pub adjacency_strips: usize,
    pub output_strips: usize,
    pub feature_column_group: usize,
}

impl ColProductConfig {
    pub fn validate(&self, num_vertices: usize, num_features: usize) -> Result<()> {
        if self.adjacency_strips == 0 || self.adjacency_strips > num_vertices.max(1) {
            return Err(Error::InvalidParameter(format!(
                "{} adjacency strips for {num_vertices} vertices",
                self.adjacency_strips
            )));
        }
        if self.output_strips == 0 || self.output_strips > num_features.max(1) {
            return Err(Error::InvalidParameter(format!(
                "{} output strips for {num_features} feature columns",
                self.output_strips
            )));
        }
        if self.feature_column_group == 0 {
            return Err(Error::InvalidParameter("feature column group must be positive".into()));
        }
        Ok(())
    }
}

fn even_split(len: usize, parts: usize) -> Vec<Range<usize>> {
    let base = len / parts;
    let rem = len % parts;
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let w = base + usize::from(p < rem);
            let r = start..start + w;
            start += w;
            r
        })
        .collect()
}

pub fn run_column_product<T: Element>(
    graph: &Csr<T>,
    features: &Matrix<T>,
    cfg: &ColProductConfig,
    cache: &mut Cache,
    mem: &MemSpec,
) -> Result<(Matrix<T>, RoundResult)> {
    let v = graph.num_vertices();
    let f = features.cols();
    if v != features.rows() {
        return Err(Error::Dimension(format!(
            "graph has {v} vertices, features have {} rows",
            features.rows()
        )));
    }
    cfg.validate(v, f)?;
    mem.validate()?;

    // preprocessing; not charged
    let csc = graph.transpose();
    let line = cache.block_bytes();
    let unit = unit_size(v);
    let lanes = 16u64;
    cache.reset(true);

    let mut acc = vec![T::Acc::zero(); v * f];
    let mut r = RoundResult {
        tile_width_arr: vec![UNIT_STRIPS as u8],
        slice_width: f,
        ..Default::default()
    };
    let mut miss_lines = 0u64;

    let mut touch = |cache: &mut Cache, addr: u64, strip: Option<u8>, write: bool, r: &mut RoundResult| -> bool {
        r.cache_accesses += 1;
        let res = cache.access_rw(addr - addr % line, strip, write);
        r.writeback_lines += res.writeback as u64;
        if !res.outcome.is_hit() {
            miss_lines += 1;
        }
        res.outcome.is_hit()
    };

    for out_cols in even_split(f, cfg.output_strips) {
        for adj in even_split(v, cfg.adjacency_strips) {
            let mut g0 = out_cols.start;
            while g0 < out_cols.end {
                let group = g0..(g0 + cfg.feature_column_group).min(out_cols.end);
                let g = group.len() as u64;
                for j in adj.clone() {
                    r.topology_reads += 1;
                    touch(cache, TOPOLOGY_BASE + j as u64 * WORD_BYTES, None, false, &mut r);

                    r.feature_read_requests += g;
                    let start = (j * f + group.start) as u64 * WORD_BYTES;
                    let end = start + g * WORD_BYTES;
                    let mut addr = start - start % line;
                    while addr < end {
                        let words = (end.min(addr + line) - start.max(addr)) / WORD_BYTES;
                        if !touch(cache, addr, Some(unit_of(j, unit)), false, &mut r) {
                            r.feature_misses += words;
                            r.feature_miss_lines += 1;
                        }
                        addr += line;
                    }

                    let x = &features.row(j)[group.clone()];
                    let edges = csc.row_ptr()[j]..csc.row_ptr()[j + 1];
                    for e in edges {
                        r.topology_reads += 1;
                        let topo_addr = TOPOLOGY_BASE + ((v + 1) + e) as u64 * WORD_BYTES;
                        touch(cache, topo_addr, None, false, &mut r);
                        let i = csc.col_idx()[e] as usize;
                        let w = csc.edge_weight()[e];
                        r.output_writes += g;
                        r.macs += g;
                        r.compute_cycles += g.div_ceil(lanes);
                        let o_start = OUTPUT_BASE + (i * f + group.start) as u64 * WORD_BYTES;
                        let o_end = o_start + g * WORD_BYTES;
                        let mut addr = o_start - o_start % line;
                        while addr < o_end {
                            touch(cache, addr, None, true, &mut r);
                            addr += line;
                        }
                        let a = &mut acc[i * f + group.start..i * f + group.end];
                        for (a, &xv) in a.iter_mut().zip(x) {
                            *a = *a + w.widen_mul(xv);
                        }
                    }
                }
                g0 = group.end;
            }
        }
    }

    let enabled = cache.is_enabled();
    if enabled {
        r.writeback_lines += cache.dirty_lines();
        r.dram_bytes = (miss_lines + r.writeback_lines) * line;
    } else {
        // nothing is retained: every access is a transfer, outputs go straight out
        r.dram_bytes = miss_lines * line;
    }
    r.engine_compute_cycles = vec![r.compute_cycles];
    r.cycles = round_cycles(r.compute_cycles, r.dram_bytes, mem);
    r.unit_stats = cache.stats().per_strip.clone();
    r.decision_cycles = r.cycles;
    r.decision_unit_stats = r.unit_stats.clone();

    let data = acc.into_iter().map(T::narrow).collect();
    Ok((Matrix::new(v, f, data)?, r))
}
