//! Dense matrix views of the reduced graph: weighted adjacency, row-stochastic
//! transition matrix, symmetric GCN propagation and the reconstruction target.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// Guard against accidentally densifying a huge graph.
pub const DEFAULT_DENSE_LIMIT: usize = 20_000;

/// Which matrix the autoencoder reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Row-normalized adjacency (transition probabilities).
    #[default]
    Transition,
    /// Adjacency scaled by its maximum entry into [0, 1].
    AdjacencyScaled,
    /// Symmetrically normalized adjacency `D^-1/2 A D^-1/2`.
    SymNormalized,
}

pub fn adjacency(graph: &WeightedGraph) -> Result<Array2<f64>> {
    adjacency_with_limit(graph, DEFAULT_DENSE_LIMIT)
}

pub fn adjacency_with_limit(graph: &WeightedGraph, limit: usize) -> Result<Array2<f64>> {
    let n = graph.n();
    if n > limit {
        return Err(Error::TooLarge { n, limit });
    }
    let mut matrix = Array2::zeros((n, n));
    for (&(u, v), &w) in graph.edges() {
        matrix[(u, v)] = w;
        matrix[(v, u)] = w;
    }
    Ok(matrix)
}

/// Row-normalize a non-negative matrix. All-zero rows (isolated nodes) stay
/// zero rather than being made uniform.
pub fn transition(adjacency: &Array2<f64>) -> Array2<f64> {
    let mut out = adjacency.clone();
    for mut row in out.rows_mut() {
        let sum: f64 = row.sum();
        if sum > 0.0 {
            row.mapv_inplace(|v| v / sum);
        }
    }
    out
}

/// Indices of all-zero rows.
pub fn isolated_rows(matrix: &Array2<f64>) -> Vec<usize> {
    matrix
        .rows()
        .into_iter()
        .enumerate()
        .filter_map(|(i, row)| (row.sum() == 0.0).then_some(i))
        .collect()
}

/// Renormalized propagation `D^-1/2 (A + I) D^-1/2` with `D` the degree
/// matrix of `A + I`.
pub fn gcn_propagation(adjacency: &Array2<f64>) -> Array2<f64> {
    let n = adjacency.nrows();
    let mut with_loops = adjacency.clone();
    for i in 0..n {
        with_loops[(i, i)] += 1.0;
    }
    let inv_sqrt_degree: Vec<f64> = with_loops
        .rows()
        .into_iter()
        .map(|row| 1.0 / row.sum().sqrt())
        .collect();
    for ((i, j), value) in with_loops.indexed_iter_mut() {
        *value *= inv_sqrt_degree[i] * inv_sqrt_degree[j];
    }
    with_loops
}

pub fn reconstruction_target(graph: &WeightedGraph, mode: TargetMode) -> Result<Array2<f64>> {
    let adj = adjacency(graph)?;
    Ok(match mode {
        TargetMode::Transition => transition(&adj),
        TargetMode::AdjacencyScaled => {
            let max = adj.iter().fold(0.0f64, |acc, &v| acc.max(v));
            if max > 0.0 {
                adj.mapv(|v| v / max)
            } else {
                adj
            }
        }
        TargetMode::SymNormalized => {
            let inv_sqrt: Vec<f64> = adj
                .rows()
                .into_iter()
                .map(|row| {
                    let degree = row.sum();
                    if degree > 0.0 {
                        1.0 / degree.sqrt()
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut out = adj;
            for ((i, j), value) in out.indexed_iter_mut() {
                *value *= inv_sqrt[i] * inv_sqrt[j];
            }
            out
        }
    })
}

/// Text grid of a matrix, row-major, space-separated, 17 significant digits.
pub fn dump_matrix(matrix: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
