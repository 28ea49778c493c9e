//! Flow accumulation over a traversal plan.
//!
//! `A(c) = w(c) + sum over donors n of alpha(n, c) * A(n)`, evaluated from
//! the leaves towards the sinks. Each cell sums its own donors in donor-slot
//! order, so the result does not depend on how cells of a level are spread
//! over workers.

use crate::flow_graph::{FlowGraph, MfdFlowGraph, TraversalPlan};

/// Flow originating at each cell.
#[derive(Debug, Clone, Copy)]
pub enum SourceWeights<'a> {
    Uniform(f64),
    PerCell(&'a [f64]),
}

impl SourceWeights<'_> {
    #[inline]
    pub fn at(&self, c: usize) -> f64 {
        match self {
            Self::Uniform(w) => *w,
            Self::PerCell(ws) => ws[c],
        }
    }
}

/// Accumulated upstream flow per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumField {
    pub values: Vec<f64>,
    pub cell_area: f64,
}

impl AccumField {
    pub fn get(&self, c: usize) -> f64 {
        self.values[c]
    }
}

#[inline]
pub(crate) fn d8_value(w: f64, donors: &[usize], read: impl Fn(usize) -> f64) -> f64 {
    let mut a = w;
    for &n in donors {
        a += read(n);
    }
    a
}

#[inline]
pub(crate) fn mfd_value(w: f64, donors: &[usize], alphas: &[f64], read: impl Fn(usize) -> f64) -> f64 {
    let mut a = w;
    for (&n, &alpha) in donors.iter().zip(alphas) {
        a += alpha * read(n);
    }
    a
}

/// D8 accumulation into a caller-owned buffer. Works for both level-set and
/// source-tree plans: walking `order` backwards always finishes donors first.
pub fn accumulate_into(plan: &TraversalPlan, graph: &FlowGraph, weights: SourceWeights<'_>, acc: &mut [f64]) {
    for &c in plan.order().iter().rev() {
        acc[c] = d8_value(weights.at(c), graph.donors(c), |n| acc[n]);
    }
}

pub fn accumulate(plan: &TraversalPlan, graph: &FlowGraph, weights: SourceWeights<'_>, cell_area: f64) -> AccumField {
    let mut values = vec![0.0; graph.len()];
    accumulate_into(plan, graph, weights, &mut values);
    AccumField { values, cell_area }
}

pub fn accumulate_mfd_into(plan: &TraversalPlan, mfd: &MfdFlowGraph, weights: SourceWeights<'_>, acc: &mut [f64]) {
    for &c in plan.order().iter().rev() {
        acc[c] = mfd_value(weights.at(c), mfd.donors(c), mfd.donor_weights(c), |n| acc[n]);
    }
}

pub fn accumulate_mfd(
    plan: &TraversalPlan,
    mfd: &MfdFlowGraph,
    weights: SourceWeights<'_>,
    cell_area: f64,
) -> AccumField {
    let mut values = vec![0.0; mfd.len()];
    accumulate_mfd_into(plan, mfd, weights, &mut values);
    AccumField { values, cell_area }
}
