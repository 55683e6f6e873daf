//! Corpus-level graph statistics.
//!
//! All ratio fields are averages of per-graph ratios (not ratios of corpus
//! averages); graphs with zero vertices are skipped when forming ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Fcg;

/// Averages over a corpus of graphs. `*_pct` fields are fractions in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStatsReport {
    pub num_graphs: usize,
    pub mean_vertices: f64,
    /// Mean over graphs of the mean undirected vertex degree (self-loops
    /// contribute 2).
    pub mean_degree: f64,
    /// Mean over graphs of (mean degree / vertex count).
    pub degree_per_vertex_pct: f64,
    pub mean_components: f64,
    /// Mean over graphs of (vertex count / component count).
    pub mean_component_size: f64,
    /// Mean over graphs of (mean component size / vertex count).
    pub component_size_per_vertex_pct: f64,
}

/// Compute corpus statistics. Errors on an empty corpus.
pub fn graph_stats(corpus: &[Fcg]) -> Result<GraphStatsReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("graph_stats corpus".into()));
    }
    let n = corpus.len() as f64;
    let mut mean_vertices = 0.0;
    let mut mean_degree = 0.0;
    let mut degree_pct = 0.0;
    let mut mean_components = 0.0;
    let mut mean_comp_size = 0.0;
    let mut comp_size_pct = 0.0;
    let mut with_vertices = 0usize;

    for g in corpus {
        let v = g.num_vertices as f64;
        mean_vertices += v;
        if g.num_vertices == 0 {
            continue;
        }
        with_vertices += 1;
        let degrees = g.undirected_degrees();
        let avg_degree = degrees.iter().sum::<usize>() as f64 / v;
        let components = g.weak_components();
        let c = components.len() as f64;
        let avg_comp_size = v / c;

        mean_degree += avg_degree;
        degree_pct += avg_degree / v;
        mean_components += c;
        mean_comp_size += avg_comp_size;
        comp_size_pct += avg_comp_size / v;
    }

    let nv = with_vertices.max(1) as f64;
    Ok(GraphStatsReport {
        num_graphs: corpus.len(),
        mean_vertices: mean_vertices / n,
        mean_degree: mean_degree / nv,
        degree_per_vertex_pct: degree_pct / nv,
        mean_components: mean_components / nv,
        mean_component_size: mean_comp_size / nv,
        component_size_per_vertex_pct: comp_size_pct / nv,
    })
}
