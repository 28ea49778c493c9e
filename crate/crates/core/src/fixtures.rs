//! Small explicit-graph fixtures, including the ten-node drainage network
//! used as the worked example for receivers, donors, queue and accumulation.
//!
//! Fixture cells are 0-based internally; [`label`] and [`cell`] convert to and
//! from the 1-based node labels of the drawings.

use crate::flow_graph::MfdFlowGraph;
use crate::grid::Topology;

/// Arbitrary graph with per-edge distances and an explicit boundary set.
#[derive(Debug, Clone)]
pub struct ExplicitGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    boundary: Vec<bool>,
    max_degree: usize,
}

impl ExplicitGraph {
    /// `adjacency[c]` lists `c`'s neighbours in enumeration order.
    pub fn new(adjacency: Vec<Vec<(usize, f64)>>, boundary: Vec<bool>) -> Self {
        assert_eq!(adjacency.len(), boundary.len());
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Self {
            adjacency,
            boundary,
            max_degree,
        }
    }
}

impl Topology for ExplicitGraph {
    fn num_cells(&self) -> usize {
        self.adjacency.len()
    }

    fn max_degree(&self) -> usize {
        self.max_degree
    }

    fn is_boundary(&self, c: usize) -> bool {
        self.boundary[c]
    }

    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, c: usize, mut f: F) {
        for &(n, d) in &self.adjacency[c] {
            f(n, d);
        }
    }
}

pub fn label(c: usize) -> usize {
    c + 1
}

pub fn cell(label: usize) -> usize {
    label - 1
}

/// Elevations of the ten-node example, by label order.
pub const WORKED_ELEVATIONS: [f64; 10] = [3.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 2.0, 4.0, 3.0];

/// The ten-node network: node 5 is the fixed base level, solid edges carry
/// flow, dashed edges are lesser-slope alternatives.
///
/// Neighbour lists are ordered so that equal-slope ties resolve to the
/// drawn receiver. The 9-8 edge is given length 2.5 so its slope (0.8)
/// stays below that of the drawn 9-7 edge.
pub fn worked_example() -> (ExplicitGraph, Vec<f64>) {
    let adj: [&[usize]; 10] = [
        &[2, 4, 3],
        &[5, 1, 3, 6],
        &[2, 6, 7, 4, 1],
        &[7, 1, 3, 9],
        &[2, 6, 8],
        &[5, 7, 3, 2, 8],
        &[6, 8, 4, 9, 3],
        &[5, 6, 7, 10, 9],
        &[7, 10, 4, 8],
        &[8, 9],
    ];
    let adjacency = adj
        .iter()
        .enumerate()
        .map(|(c, ns)| {
            ns.iter()
                .map(|&l| {
                    let long = matches!((label(c), l), (9, 8) | (8, 9));
                    (cell(l), if long { 2.5 } else { 1.0 })
                })
                .collect()
        })
        .collect();
    let boundary = (0..10).map(|c| label(c) == 5).collect();
    (ExplicitGraph::new(adjacency, boundary), WORKED_ELEVATIONS.to_vec())
}

/// The multi-receiver variant of the worked example: nodes 3 and 7 also
/// pass flow to 6 and 8 respectively. Weights split evenly.
pub fn mfd_example() -> MfdFlowGraph {
    let single: [(usize, usize); 9] = [(1, 2), (3, 2), (2, 5), (6, 5), (8, 5), (7, 6), (10, 8), (4, 7), (9, 7)];
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for &(from, to) in &single {
        let alpha = if from == 3 || from == 7 { 0.5 } else { 1.0 };
        edges.push((cell(from), cell(to), alpha));
        if from == 3 {
            edges.push((cell(3), cell(6), 0.5));
        }
        if from == 7 {
            edges.push((cell(7), cell(8), 0.5));
        }
    }
    MfdFlowGraph::from_edges(10, 5, &edges)
}
