use std::collections::BTreeSet;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use super::Csr;
use crate::error::{Error, Result};
use crate::scalar::Element;

/// R-MAT quadrant probabilities (a, b, c, d).
pub const RMAT_PARAMS: [f64; 4] = [0.57, 0.19, 0.19, 0.05];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphModel {
    Uniform,
    Rmat,
}

impl std::str::FromStr for GraphModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(GraphModel::Uniform),
            "rmat" => Ok(GraphModel::Rmat),
            other => Err(Error::InvalidParameter(format!("unknown graph model {other:?}"))),
        }
    }
}

/// Draws a reproducible synthetic topology.
///
/// Each attempt samples one `(row, col)` pair. Duplicates are discarded and
/// sampling continues until `num_edges` distinct pairs exist; the run fails
/// if that takes more than `10 * num_edges` attempts.
///
/// Uniform attempts take `row = x0 % V`, `col = x1 % V` from two consecutive
/// splitmix64 outputs. R-MAT attempts descend `ceil(log2 V)` quadrant levels,
/// one output per level mapped to `[0, 1)` via its top 53 bits; pairs landing
/// outside `[0, V)` are rejected.
pub fn gen_synthetic<T: Element>(
    model: GraphModel,
    num_vertices: usize,
    num_edges: usize,
    seed: u64,
) -> Result<Csr<T>> {
    let capacity = (num_vertices as u128) * (num_vertices as u128);
    if num_edges as u128 > capacity {
        return Err(Error::Infeasible(format!(
            "{num_edges} edges cannot fit in a {num_vertices}-vertex graph"
        )));
    }
    if num_vertices > u32::MAX as usize {
        return Err(Error::Infeasible("vertex ids must fit in 32 bits".into()));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut edges = BTreeSet::new();
    let budget = num_edges.saturating_mul(10);
    let scale = if num_vertices <= 1 {
        0
    } else {
        usize::BITS - (num_vertices - 1).leading_zeros()
    };
    let mut attempts = 0usize;
    while edges.len() < num_edges {
        if attempts == budget {
            return Err(Error::Infeasible(format!(
                "only {} of {num_edges} distinct edges after {budget} attempts",
                edges.len()
            )));
        }
        attempts += 1;
        let pair = match model {
            GraphModel::Uniform => {
                let n = num_vertices as u64;
                let r = rng.next_u64() % n;
                let c = rng.next_u64() % n;
                Some((r, c))
            }
            GraphModel::Rmat => rmat_pair(&mut rng, scale, num_vertices as u64),
        };
        if let Some((r, c)) = pair {
            edges.insert((r as u32, c as u32));
        }
    }
    Csr::from_edges(num_vertices, edges)
}

fn rmat_pair(rng: &mut SplitMix64, scale: u32, n: u64) -> Option<(u64, u64)> {
    let [a, b, c, _] = RMAT_PARAMS;
    let (mut r, mut col) = (0u64, 0u64);
    for _ in 0..scale {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let (rb, cb) = if u < a {
            (0, 0)
        } else if u < a + b {
            (0, 1)
        } else if u < a + b + c {
            (1, 0)
        } else {
            (1, 1)
        };
        r = r << 1 | rb;
        col = col << 1 | cb;
    }
    (r < n && col < n).then_some((r, col))
}
