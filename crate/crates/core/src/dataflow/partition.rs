use std::ops::Range;

use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::scalar::Element;

/// Splits destination vertices into `n_engines` contiguous, non-empty ranges
/// with roughly equal edge counts.
///
/// Boundary `k` sits at the first vertex prefix whose edge count reaches
/// `k * |E| / n`, nudged so every range keeps at least one vertex.
pub fn partition_equal_edges<T: Element>(graph: &Csr<T>, n_engines: usize) -> Result<Vec<Range<usize>>> {
    let v = graph.num_vertices();
    if n_engines == 0 {
        return Err(Error::InvalidParameter("need at least one engine".into()));
    }
    if n_engines > v.max(1) {
        return Err(Error::InvalidParameter(format!(
            "{n_engines} engines for {v} vertices"
        )));
    }
    let e = graph.num_edges() as u128;
    let n = n_engines as u128;
    let ptr = graph.row_ptr();
    let mut bounds = vec![0usize];
    for k in 1..n_engines {
        let target = k as u128 * e;
        let first = ptr.partition_point(|&cum| (cum as u128) * n < target);
        let lo = bounds[k - 1] + 1;
        let hi = v - (n_engines - k);
        bounds.push(first.clamp(lo, hi));
    }
    bounds.push(v);
    Ok(bounds.windows(2).map(|w| w[0]..w[1]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_synthetic, GraphModel};
    use crate::scalar::Fixed;
    use proptest::prelude::*;

    fn with_degrees(degrees: &[u32]) -> Csr<Fixed> {
        let n = degrees.len() as u32;
        let edges = degrees
            .iter()
            .enumerate()
            .flat_map(|(r, &d)| (0..d).map(move |c| (r as u32, c % n.max(1))));
        // degrees above n would dedup; the examples stay below it
        Csr::from_edges(degrees.len(), edges).unwrap()
    }

    #[test]
    fn balanced_split() {
        let g = with_degrees(&[4, 1, 1, 2]);
        assert_eq!(partition_equal_edges(&g, 2).unwrap(), vec![0..1, 1..4]);
    }

    #[test]
    fn single_engine() {
        let g = with_degrees(&[4, 1, 1, 2]);
        assert_eq!(partition_equal_edges(&g, 1).unwrap(), vec![0..4]);
    }

    #[test]
    fn one_vertex_per_engine() {
        let g = with_degrees(&[4, 1, 1, 2]);
        assert_eq!(partition_equal_edges(&g, 4).unwrap(), vec![0..1, 1..2, 2..3, 3..4]);
        let empty = Csr::<Fixed>::from_edges(3, []).unwrap();
        assert_eq!(partition_equal_edges(&empty, 3).unwrap(), vec![0..1, 1..2, 2..3]);
    }

    #[test]
    fn too_many_engines() {
        let g = with_degrees(&[1, 1]);
        assert!(partition_equal_edges(&g, 3).is_err());
        assert!(partition_equal_edges(&g, 0).is_err());
    }

    proptest! {
        #[test]
        fn ranges_cover_and_balance(seed in 0u64..200, n in 1usize..9) {
            let g = gen_synthetic::<Fixed>(GraphModel::Rmat, 128, 1024, seed).unwrap();
            let parts = partition_equal_edges(&g, n).unwrap();
            prop_assert_eq!(parts.len(), n);
            prop_assert_eq!(parts[0].start, 0);
            prop_assert_eq!(parts[n - 1].end, 128);
            for w in parts.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
            prop_assert!(parts.iter().all(|r| !r.is_empty()));
        }
    }
}
