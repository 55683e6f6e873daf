//! The function-call-graph data model.
//!
//! An [`Fcg`] is a directed graph whose vertices carry cluster-id labels and
//! whose edges are caller→callee relations. Self-loops are allowed (recursive
//! or intra-cluster calls); parallel edges are not (adjacency is binary).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed graph over vertices `0..num_vertices` with per-vertex cluster-id
/// labels. The unit sample of the whole pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fcg {
    pub num_vertices: usize,
    /// One label per vertex.
    pub cluster_ids: Vec<u64>,
    /// Edge set, kept sorted and deduplicated.
    pub edges: Vec<(usize, usize)>,
    /// Class label, when the sample comes from a labeled corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Fcg {
    /// Build a graph, validating ranges and normalizing the edge set.
    pub fn new(
        num_vertices: usize,
        cluster_ids: Vec<u64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if cluster_ids.len() != num_vertices {
            return Err(Error::Invalid(format!(
                "cluster_ids has {} entries for {} vertices",
                cluster_ids.len(),
                num_vertices
            )));
        }
        let set: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        for &(u, v) in &set {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::Invalid(format!(
                    "edge ({u},{v}) out of range for {num_vertices} vertices"
                )));
            }
        }
        Ok(Fcg {
            num_vertices,
            cluster_ids,
            edges: set.into_iter().collect(),
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Undirected degree of every vertex. Opposite directed edges between the
    /// same pair collapse to one undirected edge; a self-loop contributes 2.
    pub fn undirected_degrees(&self) -> Vec<usize> {
        let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut degrees = vec![0usize; self.num_vertices];
        for &(u, v) in &self.edges {
            let key = (u.min(v), u.max(v));
            if seen.insert(key) {
                if u == v {
                    degrees[u] += 2;
                } else {
                    degrees[u] += 1;
                    degrees[v] += 1;
                }
            }
        }
        degrees
    }

    /// Sorted multiset of undirected degrees; an isomorphism-invariant
    /// fingerprint used by the transformation tests.
    pub fn degree_sequence(&self) -> Vec<usize> {
        let mut degrees = self.undirected_degrees();
        degrees.sort_unstable();
        degrees
    }

    /// Weakly connected components (edge direction ignored), each a sorted
    /// vertex list, ordered by smallest contained vertex.
    pub fn weak_components(&self) -> Vec<Vec<usize>> {
        let mut dsu = DisjointSet::new(self.num_vertices);
        for &(u, v) in &self.edges {
            dsu.union(u, v);
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of_root = vec![usize::MAX; self.num_vertices];
        for v in 0..self.num_vertices {
            let root = dsu.find(v);
            if group_of_root[root] == usize::MAX {
                group_of_root[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[group_of_root[root]].push(v);
        }
        // Vertices are visited in ascending order, so each group is sorted and
        // groups are already ordered by their smallest member.
        groups
    }
}

/// Union-find with path halving.
pub(crate) struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Attach the larger root id under the smaller so that first-seen
            // ordering of components stays stable.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}
