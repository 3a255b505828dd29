use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cache::UNIT_STRIPS;
use crate::error::{Error, Result};

/// Feature slicing plus vertical strip widths over the 64 unit columns.
///
/// `tile_width_arr[k]` is the width of strip `k` in unit columns; widths are
/// powers of two and sum to 64. A uniform tiling of `S` strips corresponds to
/// `S x S` vertex tiles.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileConfig {
    pub num_slices: usize,
    pub tile_width_arr: Vec<u8>,
}

impl TileConfig {
    pub fn uniform(num_slices: usize, num_strips: usize) -> Result<Self> {
        if !num_strips.is_power_of_two() || num_strips > UNIT_STRIPS {
            return Err(Error::InvalidTiling(format!(
                "uniform strip count must be a power of two in 1..=64, got {num_strips}"
            )));
        }
        let cfg = TileConfig {
            num_slices,
            tile_width_arr: vec![(UNIT_STRIPS / num_strips) as u8; num_strips],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_widths(num_slices: usize, widths: Vec<u8>) -> Result<Self> {
        let cfg = TileConfig {
            num_slices,
            tile_width_arr: widths,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_slices == 0 {
            return Err(Error::InvalidTiling("need at least one feature slice".into()));
        }
        validate_widths(&self.tile_width_arr)
    }

    pub fn num_strips(&self) -> usize {
        self.tile_width_arr.len()
    }

    pub fn is_uniform(&self) -> bool {
        self.tile_width_arr.windows(2).all(|w| w[0] == w[1])
    }

    /// Source-vertex boundaries of each strip.
    pub fn strip_bounds(&self, num_vertices: usize) -> Vec<usize> {
        strip_bounds(&self.tile_width_arr, num_vertices)
    }

    /// Feature columns covered by `slice`. Widths differ by at most one
    /// column when `num_slices` does not divide `num_features`.
    pub fn slice_range(&self, slice: usize, num_features: usize) -> Range<usize> {
        let base = num_features / self.num_slices;
        let rem = num_features % self.num_slices;
        let start = slice * base + slice.min(rem);
        start..start + base + usize::from(slice < rem)
    }
}

pub fn validate_widths(widths: &[u8]) -> Result<()> {
    if widths.iter().any(|&w| w == 0 || !w.is_power_of_two()) {
        return Err(Error::InvalidTiling(format!(
            "strip widths must be powers of two, got {widths:?}"
        )));
    }
    let sum: usize = widths.iter().map(|&w| w as usize).sum();
    if sum != UNIT_STRIPS {
        return Err(Error::InvalidTiling(format!(
            "strip widths must sum to 64, got {sum} from {widths:?}"
        )));
    }
    Ok(())
}

/// Number of vertices per unit column.
pub fn unit_size(num_vertices: usize) -> usize {
    num_vertices.div_ceil(UNIT_STRIPS).max(1)
}

/// Unit column holding `vertex`.
pub fn unit_of(vertex: usize, unit: usize) -> u8 {
    (vertex / unit).min(UNIT_STRIPS - 1) as u8
}

pub fn strip_bounds(widths: &[u8], num_vertices: usize) -> Vec<usize> {
    let unit = unit_size(num_vertices);
    let mut bounds = Vec::with_capacity(widths.len() + 1);
    bounds.push(0);
    let mut units = 0usize;
    for &w in widths {
        units += w as usize;
        bounds.push((units * unit).min(num_vertices));
    }
    bounds
}
