//! Graph topology in CSR form, plus loaders, generators and tiling indices.
//!
//! Row `i` lists the vertices whose features are gathered into vertex `i`
//! during aggregation, so `col_idx` holds source-vertex ids. An edge-list
//! line `u v` stores `v` in row `u`.

mod generate;
mod laplacian;
mod tiled;

use std::fmt::Write as _;
use std::io::{Read, Write};

pub use generate::{gen_synthetic, GraphModel, RMAT_PARAMS};
pub use laplacian::normalize_laplacian;
pub use tiled::{tile_offsets, TiledCsrIndex};

use crate::error::{Error, Result};
use crate::matrix::read_u64;
use crate::scalar::{Element, Fixed};

const GRAPH_MAGIC: &[u8; 4] = b"SNFG";

#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    num_vertices: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    edge_weight: Vec<T>,
}

impl<T: Element> Csr<T> {
    /// Builds a CSR from `(row, col)` pairs with unit weights. Rows come out
    /// sorted and deduplicated.
    pub fn from_edges(
        num_vertices: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        let mut edges: Vec<(u32, u32)> = edges.into_iter().collect();
        if let Some(&(r, c)) = edges
            .iter()
            .find(|&&(r, c)| r as usize >= num_vertices || c as usize >= num_vertices)
        {
            return Err(Error::InvalidCsr(format!(
                "edge ({r}, {c}) out of range for {num_vertices} vertices"
            )));
        }
        edges.sort_unstable();
        edges.dedup();
        let mut row_ptr = vec![0usize; num_vertices + 1];
        for &(r, _) in &edges {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..num_vertices {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<u32> = edges.iter().map(|&(_, c)| c).collect();
        let edge_weight = vec![T::one(); col_idx.len()];
        Ok(Csr {
            num_vertices,
            row_ptr,
            col_idx,
            edge_weight,
        })
    }

    /// Validates and wraps raw CSR arrays.
    pub fn from_parts(
        num_vertices: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        edge_weight: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != num_vertices + 1 {
            return Err(Error::InvalidCsr(format!(
                "row_ptr has {} entries, expected {}",
                row_ptr.len(),
                num_vertices + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[num_vertices] != col_idx.len() {
            return Err(Error::InvalidCsr("row_ptr must span [0, |E|]".into()));
        }
        if edge_weight.len() != col_idx.len() {
            return Err(Error::InvalidCsr("weight count differs from edge count".into()));
        }
        for i in 0..num_vertices {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::InvalidCsr(format!("row_ptr decreases at row {i}")));
            }
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidCsr(format!("row {i} not strictly increasing")));
            }
            if row.iter().any(|&c| c as usize >= num_vertices) {
                return Err(Error::InvalidCsr(format!("row {i} has out-of-range column")));
            }
        }
        Ok(Csr {
            num_vertices,
            row_ptr,
            col_idx,
            edge_weight,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn edge_weight(&self) -> &[T] {
        &self.edge_weight
    }

    pub fn degree(&self, row: usize) -> usize {
        self.row_ptr[row + 1] - self.row_ptr[row]
    }

    pub fn row(&self, row: usize) -> (&[u32], &[T]) {
        let r = self.row_ptr[row]..self.row_ptr[row + 1];
        (&self.col_idx[r.clone()], &self.edge_weight[r])
    }

    /// Iterates `(row, col, weight)` in storage order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, u32, T)> + '_ {
        (0..self.num_vertices).flat_map(move |r| {
            let (cols, ws) = self.row(r);
            cols.iter().zip(ws).map(move |(&c, &w)| (r, c, w))
        })
    }

    /// Serializes the topology (weights dropped) in the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (r, c, _) in self.edges() {
            let _ = writeln!(s, "{r} {c}");
        }
        s
    }

    /// Column-major copy: row `j` of the result lists every `i` with an
    /// `(i, j)` entry here, with the same weight.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.num_vertices + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.num_vertices {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.num_edges()];
        let mut edge_weight = vec![T::zero(); self.num_edges()];
        for (r, c, w) in self.edges() {
            let slot = &mut next[c as usize];
            col_idx[*slot] = r as u32;
            edge_weight[*slot] = w;
            *slot += 1;
        }
        Csr {
            num_vertices: self.num_vertices,
            row_ptr,
            col_idx,
            edge_weight,
        }
    }
}

/// Parses the edge-list text format.
///
/// Each non-comment line holds two 0-based ids; `#` starts a comment line and
/// blank lines are skipped. `|V|` defaults to one past the largest id.
pub fn load_edge_list<T: Element>(text: &str, num_vertices: Option<usize>) -> Result<Csr<T>> {
    let mut edges = Vec::new();
    let mut max_id: Option<u64> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next_id = |what: &str| -> Result<u64> {
            let tok = it.next().ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("missing {what} id"),
            })?;
            tok.parse::<u64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad {what} id {tok:?}: {e}"),
            })
        };
        let u = next_id("first")?;
        let v = next_id("second")?;
        if it.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected exactly two ids".into(),
            });
        }
        for id in [u, v] {
            if let Some(n) = num_vertices {
                if id >= n as u64 {
                    return Err(Error::VertexOutOfRange {
                        line: lineno,
                        id,
                        num_vertices: n,
                    });
                }
            } else if id >= u32::MAX as u64 {
                return Err(Error::VertexOutOfRange {
                    line: lineno,
                    id,
                    num_vertices: u32::MAX as usize,
                });
            }
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u as u32, v as u32));
    }
    let n = num_vertices.unwrap_or_else(|| max_id.map_or(0, |m| m as usize + 1));
    Csr::from_edges(n, edges)
}

impl Csr<Fixed> {
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(GRAPH_MAGIC)?;
        w.write_all(&(self.num_vertices as u64).to_le_bytes())?;
        w.write_all(&(self.num_edges() as u64).to_le_bytes())?;
        for &p in &self.row_ptr {
            w.write_all(&(p as u64).to_le_bytes())?;
        }
        for &c in &self.col_idx {
            w.write_all(&c.to_le_bytes())?;
        }
        for &v in &self.edge_weight {
            w.write_all(&v.raw().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != GRAPH_MAGIC {
            return Err(Error::Format(format!("expected magic SNFG, got {magic:?}")));
        }
        let n = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        let row_ptr = (0..=n)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut word = [0u8; 4];
        let mut col_idx = Vec::with_capacity(m.min(1 << 26));
        for _ in 0..m {
            r.read_exact(&mut word)?;
            col_idx.push(u32::from_le_bytes(word));
        }
        let mut edge_weight = Vec::with_capacity(m.min(1 << 26));
        for _ in 0..m {
            r.read_exact(&mut word)?;
            edge_weight.push(Fixed::from_raw(i32::from_le_bytes(word)));
        }
        Self::from_parts(n, row_ptr, col_idx, edge_weight)
    }
}
