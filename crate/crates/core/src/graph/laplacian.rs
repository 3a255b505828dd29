use super::Csr;
use crate::scalar::Element;

/// Computes `I - D^{-1/2} A D^{-1/2}` over the unweighted topology.
///
/// Degrees are row lengths of the input. A degree-0 vertex contributes
/// `D^{-1/2} = 0`, so its row reduces to the identity. Every output row gains
/// an explicit diagonal entry; an input self-loop folds into it.
pub fn normalize_laplacian<T: Element>(graph: &Csr<T>) -> Csr<T> {
    let n = graph.num_vertices();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| match graph.degree(i) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(graph.num_edges() + n);
    let mut weights = Vec::with_capacity(graph.num_edges() + n);
    row_ptr.push(0);
    for i in 0..n {
        let (cols, _) = graph.row(i);
        let mut diag_done = false;
        for &j in cols {
            let j_us = j as usize;
            if !diag_done && j_us >= i {
                let self_term = if j_us == i { inv_sqrt[i] * inv_sqrt[i] } else { 0.0 };
                col_idx.push(i as u32);
                weights.push(T::from_f64(1.0 - self_term));
                diag_done = true;
                if j_us == i {
                    continue;
                }
            }
            col_idx.push(j);
            weights.push(T::from_f64(-inv_sqrt[i] * inv_sqrt[j_us]));
        }
        if !diag_done {
            col_idx.push(i as u32);
            weights.push(T::one());
        }
        row_ptr.push(col_idx.len());
    }
    Csr::from_parts(n, row_ptr, col_idx, weights).expect("laplacian preserves CSR invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_synthetic, load_edge_list, GraphModel};
    use crate::scalar::Fixed;

    fn dense(g: &Csr<Fixed>) -> Vec<Vec<f64>> {
        let n = g.num_vertices();
        let mut m = vec![vec![0.0; n]; n];
        for (r, c, w) in g.edges() {
            m[r][c as usize] = w.to_f64();
        }
        m
    }

    #[test]
    fn isolated_vertex_is_identity() {
        let g = Csr::<Fixed>::from_edges(1, []).unwrap();
        assert_eq!(dense(&normalize_laplacian(&g)), vec![vec![1.0]]);
    }

    #[test]
    fn two_cycle() {
        let g: Csr<Fixed> = load_edge_list("0 1\n1 0\n", None).unwrap();
        assert_eq!(
            dense(&normalize_laplacian(&g)),
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]]
        );
    }

    #[test]
    fn triangle() {
        let g: Csr<Fixed> = load_edge_list("0 1\n0 2\n1 0\n1 2\n2 0\n2 1\n", None).unwrap();
        let l = dense(&normalize_laplacian(&g));
        for (i, row) in l.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { -0.5 });
            }
        }
    }

    #[test]
    fn self_loop_folds_into_diagonal() {
        // row 0 = {0, 1}, degree 2; row 1 = {0}, degree 1
        let g: Csr<Fixed> = load_edge_list("0 0\n0 1\n1 0\n", None).unwrap();
        let l = normalize_laplacian(&g);
        assert_eq!(l.row(0).0, &[0, 1]);
        assert_eq!(l.row(0).1[0].to_f64(), 0.5);
    }

    #[test]
    fn regular_row_sums_vanish_within_truncation() {
        // a directed ring with offsets 1..=4 is 4-regular in both directions
        let n = 32u32;
        let edges = (0..n).flat_map(|i| (1..=4).map(move |k| (i, (i + k) % n)));
        let g = Csr::<Fixed>::from_edges(n as usize, edges).unwrap();
        let l = normalize_laplacian(&g);
        for i in 0..l.num_vertices() {
            let sum: i64 = l.row(i).1.iter().map(|w| w.raw() as i64).sum();
            assert!((-4..=0).contains(&sum), "row {i} sum {sum}");
        }
    }

    #[test]
    fn diagonal_always_present() {
        let g = gen_synthetic::<Fixed>(GraphModel::Rmat, 64, 300, 2).unwrap();
        let l = normalize_laplacian(&g);
        assert_eq!(l.num_edges(), g.num_edges() + 64 - g.edges().filter(|e| e.0 == e.1 as usize).count());
        for i in 0..64 {
            assert!(l.row(i).0.contains(&(i as u32)));
        }
    }
}
