//! Input transformations for the pretext task: vertex-order shift, random
//! vertex permutation, node dropping, and random-walk subgraph sampling.
//!
//! Shift and random permutation are isomorphism-preserving and report the
//! permutation they applied; dropping and sampling discard structure and
//! report none.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::AdjacencyTensor;
use crate::error::{Error, Result};
use crate::seeding::rng;

/// Transformation families. `Identity` passes the input through and exists
/// so configs can express an untransformed view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    FcgShift,
    FcgRandom,
    NodeDropping,
    SubgraphSampling,
}

/// A fully described transformation. Only the parameters of `kind` are
/// consulted; `seed` drives every randomized choice, including drawing
/// `shift_n` when it is unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk_len: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, seed: u64) -> Self {
        TransformSpec {
            kind,
            shift_n: None,
            drop_rate: None,
            walk_len: None,
            seed,
        }
    }
}

pub const DEFAULT_DROP_RATE: f64 = 0.2;

/// Transformed tensor plus, for the isomorphism-preserving kinds, the
/// permutation sigma with `tensor[i][j] = input[sigma(i)][sigma(j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformOutcome {
    pub tensor: AdjacencyTensor,
    pub permutation: Option<Vec<usize>>,
}

fn identity_outcome(a: &AdjacencyTensor) -> TransformOutcome {
    TransformOutcome {
        tensor: a.clone(),
        permutation: Some((0..a.size).collect()),
    }
}

/// Rotate the first `V` vertex indices left by `n`; padding stays in place.
pub fn fcg_shift(a: &AdjacencyTensor, n: usize) -> Result<TransformOutcome> {
    let v = a.true_vertices;
    if v == 0 {
        return Ok(identity_outcome(a));
    }
    if n >= v {
        return Err(Error::InvalidParameter(format!(
            "shift of {n} is out of range for {v} vertices"
        )));
    }
    let perm: Vec<usize> = (0..a.size)
        .map(|i| if i < v { (i + n) % v } else { i })
        .collect();
    let tensor = a.permuted(&perm)?;
    Ok(TransformOutcome {
        tensor,
        permutation: Some(perm),
    })
}

/// Apply a seeded uniform permutation to the first `V` vertex indices.
pub fn fcg_random(a: &AdjacencyTensor, seed: u64) -> Result<TransformOutcome> {
    let v = a.true_vertices;
    let mut perm: Vec<usize> = (0..v).collect();
    perm.shuffle(&mut rng(seed));
    perm.extend(v..a.size);
    let tensor = a.permuted(&perm)?;
    Ok(TransformOutcome {
        tensor,
        permutation: Some(perm),
    })
}

/// Zero the row and column of each vertex in `dropped`.
fn zero_vertices(a: &AdjacencyTensor, dropped: &[usize]) -> AdjacencyTensor {
    let mut out = a.clone();
    for &i in dropped {
        for j in 0..out.size {
            out.set(i, j, 0.0);
            out.set(j, i, 0.0);
        }
    }
    out
}

/// Drop each true vertex independently with probability `drop_rate`,
/// zeroing its row and column in place. Indices are not compacted, so the
/// tensor keeps its size and surviving vertices keep their positions.
pub fn node_dropping(a: &AdjacencyTensor, drop_rate: f64, seed: u64) -> Result<TransformOutcome> {
    if !(0.0..1.0).contains(&drop_rate) {
        return Err(Error::InvalidParameter(format!(
            "drop_rate must be in [0, 1), got {drop_rate}"
        )));
    }
    let mut r = rng(seed);
    let dropped: Vec<usize> = (0..a.true_vertices)
        .filter(|_| r.gen_bool(drop_rate))
        .collect();
    Ok(TransformOutcome {
        tensor: zero_vertices(a, &dropped),
        permutation: None,
    })
}

/// Undirected neighbors of `i` among the true vertices of the input graph.
fn undirected_neighbors(a: &AdjacencyTensor, i: usize) -> Vec<usize> {
    (0..a.true_vertices)
        .filter(|&j| a.get(i, j) != 0.0 || a.get(j, i) != 0.0)
        .collect()
}

/// Random walk of `walk_len` steps from a uniform start vertex, following
/// edges in either direction; vertices the walk never touches are zeroed.
pub fn subgraph_sampling(
    a: &AdjacencyTensor,
    walk_len: usize,
    seed: u64,
) -> Result<TransformOutcome> {
    let v = a.true_vertices;
    if v == 0 {
        return Err(Error::EmptyInput("subgraph sampling".into()));
    }
    if walk_len == 0 {
        return Err(Error::InvalidParameter("walk_len must be >= 1".into()));
    }
    let mut r = rng(seed);
    let mut visited = vec![false; v];
    let mut current = r.gen_range(0..v);
    visited[current] = true;
    for _ in 0..walk_len {
        let neighbors = undirected_neighbors(a, current);
        if !neighbors.is_empty() {
            current = neighbors[r.gen_range(0..neighbors.len())];
        }
        visited[current] = true;
    }
    let dropped: Vec<usize> = (0..v).filter(|&i| !visited[i]).collect();
    Ok(TransformOutcome {
        tensor: zero_vertices(a, &dropped),
        permutation: None,
    })
}

/// Dispatch on `spec.kind`, filling unset parameters with their defaults:
/// `shift_n` drawn uniformly from the nonzero shifts, `drop_rate` 0.2,
/// `walk_len` twice the vertex count.
pub fn apply_transform(spec: &TransformSpec, a: &AdjacencyTensor) -> Result<TransformOutcome> {
    match spec.kind {
        TransformKind::Identity => Ok(identity_outcome(a)),
        TransformKind::FcgShift => {
            let v = a.true_vertices;
            let n = match spec.shift_n {
                Some(n) => n,
                None if v <= 1 => 0,
                None => rng(spec.seed).gen_range(1..v),
            };
            fcg_shift(a, n)
        }
        TransformKind::FcgRandom => fcg_random(a, spec.seed),
        TransformKind::NodeDropping => {
            node_dropping(a, spec.drop_rate.unwrap_or(DEFAULT_DROP_RATE), spec.seed)
        }
        TransformKind::SubgraphSampling => {
            let walk_len = spec.walk_len.unwrap_or(2 * a.true_vertices);
            subgraph_sampling(a, walk_len, spec.seed)
        }
    }
}
