//! Fixed-size zero-padded adjacency matrices.
//!
//! An [`AdjacencyTensor`] is the network input: an `S x S` matrix holding a
//! graph's binary adjacency in its top-left `V x V` block, zero elsewhere.
//! Decoder reconstructions reuse the same type with fractional values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Fcg;

/// How [`to_adjacency`] handles graphs larger than the padded size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    /// Reject graphs with more vertices than the padded size.
    Strict,
    /// Keep the highest-degree vertices (ties broken by lower index) and
    /// renumber survivors in their original relative order.
    Truncate,
}

/// `S x S` row-major matrix with `true_vertices <= S` meaningful rows/cols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyTensor {
    pub size: usize,
    pub true_vertices: usize,
    pub data: Vec<f64>,
}

impl AdjacencyTensor {
    pub fn zeros(size: usize, true_vertices: usize) -> Self {
        AdjacencyTensor {
            size,
            true_vertices,
            data: vec![0.0; size * size],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.size + j] = value;
    }

    /// Number of nonzero cells (edge count for graph-derived tensors).
    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|&&x| x != 0.0).count()
    }

    /// Sum of all cells.
    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Apply a vertex permutation: `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<AdjacencyTensor> {
        if perm.len() != self.size {
            return Err(Error::Invalid(format!(
                "permutation length {} does not match size {}",
                perm.len(),
                self.size
            )));
        }
        let mut out = AdjacencyTensor::zeros(self.size, self.true_vertices);
        for i in 0..self.size {
            for j in 0..self.size {
                out.set(i, j, self.get(perm[i], perm[j]));
            }
        }
        Ok(out)
    }
}

/// Pad (or truncate) a graph's adjacency into an `S x S` tensor.
pub fn to_adjacency(g: &Fcg, size: usize, mode: PadMode) -> Result<AdjacencyTensor> {
    if size == 0 {
        return Err(Error::InvalidParameter("padded size must be >= 1".into()));
    }
    if g.num_vertices <= size {
        let mut t = AdjacencyTensor::zeros(size, g.num_vertices);
        for &(u, v) in &g.edges {
            t.set(u, v, 1.0);
        }
        return Ok(t);
    }
    match mode {
        PadMode::Strict => Err(Error::Capacity {
            vertices: g.num_vertices,
            size,
        }),
        PadMode::Truncate => {
            let degrees = g.undirected_degrees();
            let mut order: Vec<usize> = (0..g.num_vertices).collect();
            // Highest degree first, ties by lower vertex index.
            order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
            let mut kept: Vec<usize> = order[..size].to_vec();
            kept.sort_unstable();
            let mut new_index = vec![usize::MAX; g.num_vertices];
            for (ni, &old) in kept.iter().enumerate() {
                new_index[old] = ni;
            }
            let mut t = AdjacencyTensor::zeros(size, size);
            for &(u, v) in &g.edges {
                let (nu, nv) = (new_index[u], new_index[v]);
                if nu != usize::MAX && nv != usize::MAX {
                    t.set(nu, nv, 1.0);
                }
            }
            Ok(t)
        }
    }
}

/// True iff `b[i][j] = a[sigma(i)][sigma(j)]` for all cells, i.e. `b` is the
/// image of `a` under the vertex reordering `sigma`.
pub fn check_isomorphic_under(
    a: &AdjacencyTensor,
    b: &AdjacencyTensor,
    sigma: &[usize],
) -> Result<bool> {
    if a.size != b.size || sigma.len() != a.size {
        return Err(Error::Invalid(format!(
            "size mismatch: a={}, b={}, sigma={}",
            a.size,
            b.size,
            sigma.len()
        )));
    }
    for i in 0..a.size {
        for j in 0..a.size {
            if b.get(i, j) != a.get(sigma[i], sigma[j]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn graph(v: usize, edges: &[(usize, usize)]) -> Fcg {
        Fcg::new(v, (0..v as u64).collect(), edges.iter().copied()).unwrap()
    }

    #[test]
    fn padding_places_single_edge() {
        let t = to_adjacency(&graph(2, &[(0, 1)]), 4, PadMode::Strict).unwrap();
        assert_eq!(t.true_vertices, 2);
        assert_eq!(t.get(0, 1), 1.0);
        assert_eq!(t.nonzero_count(), 1);
    }

    #[test]
    fn empty_graph_padded_to_zeros() {
        let t = to_adjacency(&graph(0, &[]), 3, PadMode::Strict).unwrap();
        assert_eq!(t.data, vec![0.0; 9]);
        assert_eq!(t.true_vertices, 0);
    }

    #[test]
    fn strict_mode_rejects_oversized() {
        let err = to_adjacency(&graph(3, &[]), 2, PadMode::Strict).unwrap_err();
        match err {
            Error::Capacity { vertices, size } => {
                assert_eq!((vertices, size), (3, 2));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn truncate_keeps_high_degree_with_index_ties() {
        // Path 0 -> 1 -> 2: degrees (1, 2, 1); keep {1, 0}, renumber by
        // original order so 0 -> 0 and 1 -> 1; edge (0,1) survives.
        let t = to_adjacency(&graph(3, &[(0, 1), (1, 2)]), 2, PadMode::Truncate).unwrap();
        assert_eq!(t.data, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn isomorphism_identity() {
        let a = to_adjacency(&graph(2, &[(0, 1)]), 2, PadMode::Strict).unwrap();
        assert!(check_isomorphic_under(&a, &a, &[0, 1]).unwrap());
    }

    #[test]
    fn isomorphism_swap() {
        let a = to_adjacency(&graph(2, &[(0, 1)]), 2, PadMode::Strict).unwrap();
        let b = to_adjacency(&graph(2, &[(1, 0)]), 2, PadMode::Strict).unwrap();
        assert!(check_isomorphic_under(&a, &b, &[1, 0]).unwrap());
        // Same pair under the identity is not an isomorphism.
        assert!(!check_isomorphic_under(&a, &b, &[0, 1]).unwrap());
    }

    #[test]
    fn isomorphism_size_mismatch_is_error() {
        let a = AdjacencyTensor::zeros(2, 2);
        let b = AdjacencyTensor::zeros(3, 3);
        assert!(check_isomorphic_under(&a, &b, &[0, 1]).is_err());
    }

    proptest! {
        // permuted() and check_isomorphic_under() are defined by the same
        // equation; any random tensor and permutation must satisfy it.
        #[test]
        fn permuted_tensor_verifies(seed in 0u64..1000) {
            let mut rng = crate::seeding::rng(seed);
            let size = 1 + (seed as usize % 12);
            let mut a = AdjacencyTensor::zeros(size, size);
            for i in 0..size {
                for j in 0..size {
                    if rand::Rng::gen_bool(&mut rng, 0.3) {
                        a.set(i, j, 1.0);
                    }
                }
            }
            let mut sigma: Vec<usize> = (0..size).collect();
            sigma.shuffle(&mut rng);
            let b = a.permuted(&sigma).unwrap();
            prop_assert!(check_isomorphic_under(&a, &b, &sigma).unwrap());
        }
    }
}
