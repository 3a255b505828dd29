use std::ops::Range;

use super::Csr;
use crate::error::{Error, Result};
use crate::scalar::Element;

/// Per-row, per-strip edge sub-ranges of a CSR.
///
/// `strip_bounds` partitions the source-vertex range into vertical strips.
/// For row `r`, the edges whose source falls in strip `s` are
/// `col_idx[edge_range(r, s)]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TiledCsrIndex {
    strip_bounds: Vec<usize>,
    // num_vertices * (num_strips + 1) absolute offsets into col_idx
    offsets: Vec<usize>,
}

impl TiledCsrIndex {
    pub fn strip_bounds(&self) -> &[usize] {
        &self.strip_bounds
    }

    pub fn num_strips(&self) -> usize {
        self.strip_bounds.len() - 1
    }

    pub fn strip_range(&self, strip: usize) -> Range<usize> {
        self.strip_bounds[strip]..self.strip_bounds[strip + 1]
    }

    pub fn edge_range(&self, row: usize, strip: usize) -> Range<usize> {
        let base = row * (self.num_strips() + 1);
        self.offsets[base + strip]..self.offsets[base + strip + 1]
    }

    pub fn sub_count(&self, row: usize, strip: usize) -> usize {
        self.edge_range(row, strip).len()
    }
}

pub fn tile_offsets<T: Element>(graph: &Csr<T>, strip_bounds: &[usize]) -> Result<TiledCsrIndex> {
    let n = graph.num_vertices();
    if strip_bounds.len() < 2 {
        return Err(Error::InvalidStrips("need at least one strip".into()));
    }
    if strip_bounds[0] != 0 || *strip_bounds.last().unwrap() != n {
        return Err(Error::InvalidStrips(format!(
            "bounds must start at 0 and end at {n}, got {strip_bounds:?}"
        )));
    }
    if strip_bounds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidStrips(format!("bounds decrease: {strip_bounds:?}")));
    }
    let strips = strip_bounds.len() - 1;
    let mut offsets = Vec::with_capacity(n * (strips + 1));
    for row in 0..n {
        let start = graph.row_ptr()[row];
        let (cols, _) = graph.row(row);
        offsets.push(start);
        for &b in &strip_bounds[1..strips] {
            offsets.push(start + cols.partition_point(|&c| (c as usize) < b));
        }
        offsets.push(start + cols.len());
    }
    Ok(TiledCsrIndex {
        strip_bounds: strip_bounds.to_vec(),
        offsets,
    })
}
