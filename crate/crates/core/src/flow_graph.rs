//! Steepest-descent routing, donor inversion and traversal orders.
//!
//! Every per-cell kernel here writes only the entries that belong to its
//! own cell, so the same kernels are driven serially or from worker threads
//! by the scheduler without changing a single bit of the result.

use crate::error::LemError;
use crate::grid::{Elevation, Topology};

/// Receiver sentinel for cells that do not pass flow on.
pub const NO_FLOW: usize = usize::MAX;

/// Single-receiver flow graph with a flat donor table.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    pub(crate) dmax: usize,
    pub(crate) rec: Vec<usize>,
    /// Distance from each cell to its receiver (0 for `NO_FLOW`).
    pub(crate) rec_dist: Vec<f64>,
    pub(crate) donor: Vec<usize>,
    pub(crate) dnum: Vec<u8>,
}

impl FlowGraph {
    pub fn with_capacity(n: usize, dmax: usize) -> Self {
        Self {
            dmax,
            rec: vec![NO_FLOW; n],
            rec_dist: vec![0.0; n],
            donor: vec![NO_FLOW; n * dmax],
            dnum: vec![0; n],
        }
    }

    /// Builds a graph from an explicit receiver array; distances default to 1.
    pub fn from_receivers<G: Topology>(topo: &G, rec: Vec<usize>) -> Self {
        let n = topo.num_cells();
        assert_eq!(rec.len(), n, "receiver array length");
        let mut g = Self::with_capacity(n, topo.max_degree());
        for (c, &r) in rec.iter().enumerate() {
            if r != NO_FLOW {
                let mut d = 1.0;
                topo.for_each_neighbor(c, |m, dist| {
                    if m == r {
                        d = dist;
                    }
                });
                g.rec_dist[c] = d;
            }
        }
        g.rec = rec;
        compute_donors(topo, &mut g);
        g
    }

    pub fn len(&self) -> usize {
        self.rec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rec.is_empty()
    }

    pub fn dmax(&self) -> usize {
        self.dmax
    }

    pub fn receivers(&self) -> &[usize] {
        &self.rec
    }

    pub fn receiver(&self, c: usize) -> Option<usize> {
        match self.rec[c] {
            NO_FLOW => None,
            r => Some(r),
        }
    }

    pub fn receiver_distance(&self, c: usize) -> f64 {
        self.rec_dist[c]
    }

    pub fn dnum(&self) -> &[u8] {
        &self.dnum
    }

    pub fn donors(&self, c: usize) -> &[usize] {
        let base = self.dmax * c;
        &self.donor[base..base + self.dnum[c] as usize]
    }

    /// Raw donor table, `dmax` slots per cell.
    pub fn donor_table(&self) -> &[usize] {
        &self.donor
    }

    pub(crate) fn resize(&mut self, n: usize, dmax: usize) {
        self.dmax = dmax;
        self.rec.resize(n, NO_FLOW);
        self.rec_dist.resize(n, 0.0);
        self.donor.resize(n * dmax, NO_FLOW);
        self.dnum.resize(n, 0);
    }
}

/// Steepest downhill neighbour of `c` and its distance.
///
/// Strict `>` against a running maximum that starts at zero: flat or uphill
/// neighbours never receive, and ties go to the first neighbour in stencil
/// order.
#[inline]
pub fn receiver_of<G: Topology, T: Elevation>(topo: &G, elev: &[T], c: usize) -> (usize, f64) {
    if topo.is_boundary(c) {
        return (NO_FLOW, 0.0);
    }
    let hc = elev[c].to_f64().unwrap_or(f64::NAN);
    let mut smax = 0.0;
    let mut nmax = NO_FLOW;
    let mut dmax = 0.0;
    topo.for_each_neighbor(c, |n, d| {
        let s = (hc - elev[n].to_f64().unwrap_or(f64::NAN)) / d;
        if s > smax {
            smax = s;
            nmax = n;
            dmax = d;
        }
    });
    (nmax, dmax)
}

/// Fills `rec`/`dist` for the cells `start..start + rec.len()`.
pub fn receivers_kernel<G: Topology, T: Elevation>(
    topo: &G,
    elev: &[T],
    start: usize,
    rec: &mut [usize],
    dist: &mut [f64],
) {
    for (i, (r, d)) in rec.iter_mut().zip(dist.iter_mut()).enumerate() {
        (*r, *d) = receiver_of(topo, elev, start + i);
    }
}

/// Collects the donors of `c` into `slots`, returning how many were found.
#[inline]
pub fn donors_of<G: Topology>(topo: &G, rec: &[usize], c: usize, slots: &mut [usize]) -> u8 {
    let mut k = 0;
    topo.for_each_neighbor(c, |n, _| {
        if rec[n] == c {
            slots[k] = n;
            k += 1;
        }
    });
    k as u8
}

/// Donor kernel for cells `start..start + dnum.len()`; `donor` is the
/// matching `dmax`-strided window of the donor table.
pub fn donors_kernel<G: Topology>(
    topo: &G,
    rec: &[usize],
    start: usize,
    donor: &mut [usize],
    dnum: &mut [u8],
) {
    let dmax = topo.max_degree();
    for (i, (slots, k)) in donor.chunks_mut(dmax).zip(dnum.iter_mut()).enumerate() {
        *k = donors_of(topo, rec, start + i, slots);
    }
}

/// Steepest-descent receivers for every cell. The donor table is left empty.
pub fn compute_receivers<G: Topology, T: Elevation>(topo: &G, elev: &[T]) -> FlowGraph {
    let n = topo.num_cells();
    let mut g = FlowGraph::with_capacity(n, topo.max_degree());
    receivers_kernel(topo, elev, 0, &mut g.rec, &mut g.rec_dist);
    g
}

/// Inverts `graph.rec` into the donor table by having each cell scan its
/// own neighbours.
pub fn compute_donors<G: Topology>(topo: &G, graph: &mut FlowGraph) {
    let n = topo.num_cells();
    graph.resize(n, topo.max_degree());
    let FlowGraph {
        rec, donor, dnum, ..
    } = graph;
    donors_kernel(topo, rec, 0, donor, dnum);
}

/// Receivers plus donors.
pub fn build_flow_graph<G: Topology, T: Elevation>(topo: &G, elev: &[T]) -> FlowGraph {
    let mut g = compute_receivers(topo, elev);
    compute_donors(topo, &mut g);
    g
}

/// How `TraversalPlan::levels` partitions `order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    /// Breadth-first level sets; cells within a level are independent.
    LevelSets,
    /// Depth-first; each segment is one source tree and is inherently serial.
    SourceTrees,
}

/// Processing order plus segment boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct TraversalPlan {
    pub(crate) kind: PlanKind,
    pub(crate) order: Vec<usize>,
    pub(crate) levels: Vec<usize>,
}

impl TraversalPlan {
    pub fn empty(kind: PlanKind) -> Self {
        Self {
            kind,
            order: Vec::new(),
            levels: vec![0],
        }
    }

    pub fn kind(&self) -> PlanKind {
        self.kind
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Boundaries: segment `l` is `order[levels[l]..levels[l + 1]]`.
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn nlevels(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> &[usize] {
        &self.order[self.levels[l]..self.levels[l + 1]]
    }

    /// Level index of every cell (`usize::MAX` for cells not in the plan).
    pub fn level_of_cells(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for l in 0..self.nlevels() {
            for &c in self.level(l) {
                out[c] = l;
            }
        }
        out
    }

    pub(crate) fn clear(&mut self, kind: PlanKind) {
        self.kind = kind;
        self.order.clear();
        self.levels.clear();
        self.levels.push(0);
    }
}

/// Breadth-first expansion from `sources`: each wave is the concatenation,
/// in order, of the expansions of the previous wave's cells. Only non-empty
/// waves are recorded in `levels`.
pub(crate) fn expand_levels(
    order: &mut Vec<usize>,
    levels: &mut Vec<usize>,
    sources: impl IntoIterator<Item = usize>,
    mut expand: impl FnMut(usize, &mut Vec<usize>),
) {
    let start = order.len();
    order.extend(sources);
    if order.len() == start {
        return;
    }
    levels.push(order.len());
    let mut lo = start;
    let mut hi = order.len();
    while lo < hi {
        for i in lo..hi {
            let c = order[i];
            expand(c, order);
        }
        lo = hi;
        hi = order.len();
        if hi > lo {
            levels.push(hi);
        }
    }
}

/// Breadth-first processing order seeded by every cell without a receiver,
/// in ascending index order.
pub fn generate_queue(graph: &FlowGraph) -> Result<TraversalPlan, LemError> {
    let mut plan = TraversalPlan::empty(PlanKind::LevelSets);
    generate_queue_into(graph, &mut plan)?;
    Ok(plan)
}

pub(crate) fn generate_queue_into(graph: &FlowGraph, plan: &mut TraversalPlan) -> Result<(), LemError> {
    plan.clear(PlanKind::LevelSets);
    let n = graph.len();
    plan.order.reserve(n);
    let sources = graph
        .rec
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r == NO_FLOW)
        .map(|(c, _)| c);
    expand_levels(&mut plan.order, &mut plan.levels, sources, |c, out| {
        out.extend_from_slice(graph.donors(c))
    });
    check_complete(plan.order.len(), n)
}

/// Depth-first order: each source followed by its donor subtrees in donor
/// slot order. Segments are source trees.
pub fn generate_stack(graph: &FlowGraph) -> Result<TraversalPlan, LemError> {
    let mut plan = TraversalPlan::empty(PlanKind::SourceTrees);
    generate_stack_into(graph, &mut plan, &mut Vec::new())?;
    Ok(plan)
}

pub(crate) fn generate_stack_into(
    graph: &FlowGraph,
    plan: &mut TraversalPlan,
    stack: &mut Vec<usize>,
) -> Result<(), LemError> {
    plan.clear(PlanKind::SourceTrees);
    let n = graph.len();
    plan.order.reserve(n);
    for source in (0..n).filter(|&c| graph.rec[c] == NO_FLOW) {
        stack.clear();
        stack.push(source);
        while let Some(c) = stack.pop() {
            plan.order.push(c);
            stack.extend(graph.donors(c).iter().rev());
        }
        plan.levels.push(plan.order.len());
    }
    check_complete(plan.order.len(), n)
}

fn check_complete(placed: usize, n: usize) -> Result<(), LemError> {
    if placed == n {
        Ok(())
    } else {
        Err(LemError::Cycle {
            unresolved: n.saturating_sub(placed),
        })
    }
}

/// Multiple-flow-direction graph: up to `dmax` weighted receivers per cell
/// and the inverse donor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct MfdFlowGraph {
    dmax: usize,
    nrec: Vec<u8>,
    recs: Vec<usize>,
    weights: Vec<f64>,
    ndon: Vec<u8>,
    donors: Vec<usize>,
    donor_weights: Vec<f64>,
}

impl MfdFlowGraph {
    fn empty(n: usize, dmax: usize) -> Self {
        Self {
            dmax,
            nrec: vec![0; n],
            recs: vec![NO_FLOW; n * dmax],
            weights: vec![0.0; n * dmax],
            ndon: vec![0; n],
            donors: vec![NO_FLOW; n * dmax],
            donor_weights: vec![0.0; n * dmax],
        }
    }

    /// Builds a graph from `(from, to, alpha)` edges. Receivers and donors
    /// are kept in edge order.
    pub fn from_edges(n: usize, dmax: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut g = Self::empty(n, dmax);
        for &(from, to, alpha) in edges {
            let k = g.nrec[from] as usize;
            assert!(k < dmax, "cell {from} exceeds {dmax} receivers");
            g.recs[from * dmax + k] = to;
            g.weights[from * dmax + k] = alpha;
            g.nrec[from] += 1;
            let j = g.ndon[to] as usize;
            assert!(j < dmax, "cell {to} exceeds {dmax} donors");
            g.donors[to * dmax + j] = from;
            g.donor_weights[to * dmax + j] = alpha;
            g.ndon[to] += 1;
        }
        g
    }

    /// Degenerate MFD graph with the single receiver of `graph` at weight 1.
    pub fn from_single(graph: &FlowGraph) -> Self {
        let n = graph.len();
        let dmax = graph.dmax();
        let mut g = Self::empty(n, dmax);
        for c in 0..n {
            if let Some(r) = graph.receiver(c) {
                g.recs[c * dmax] = r;
                g.weights[c * dmax] = 1.0;
                g.nrec[c] = 1;
            }
            let ds = graph.donors(c);
            g.donors[c * dmax..c * dmax + ds.len()].copy_from_slice(ds);
            g.donor_weights[c * dmax..c * dmax + ds.len()].fill(1.0);
            g.ndon[c] = ds.len() as u8;
        }
        g
    }

    pub fn len(&self) -> usize {
        self.nrec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nrec.is_empty()
    }

    pub fn receivers(&self, c: usize) -> &[usize] {
        let b = c * self.dmax;
        &self.recs[b..b + self.nrec[c] as usize]
    }

    pub fn weights(&self, c: usize) -> &[f64] {
        let b = c * self.dmax;
        &self.weights[b..b + self.nrec[c] as usize]
    }

    pub fn donors(&self, c: usize) -> &[usize] {
        let b = c * self.dmax;
        &self.donors[b..b + self.ndon[c] as usize]
    }

    /// `alpha(d, c)` for each donor `d` of `c`, aligned with `donors(c)`.
    pub fn donor_weights(&self, c: usize) -> &[f64] {
        let b = c * self.dmax;
        &self.donor_weights[b..b + self.ndon[c] as usize]
    }

    pub fn indegree(&self, c: usize) -> usize {
        self.ndon[c] as usize
    }
}

/// Slope-weighted multiple-flow-direction routing.
///
/// Every strictly downslope neighbour receives a share proportional to
/// `slope^exponent`; shares are normalised so they never sum above one.
pub fn compute_mfd<G: Topology, T: Elevation>(topo: &G, elev: &[T], exponent: f64) -> MfdFlowGraph {
    let n = topo.num_cells();
    let dmax = topo.max_degree();
    let e = elev;
    let mut g = MfdFlowGraph::empty(n, dmax);
    for c in 0..n {
        if topo.is_boundary(c) {
            continue;
        }
        let hc = e[c].to_f64().unwrap_or(f64::NAN);
        let base = c * dmax;
        let mut k = 0;
        let mut total = 0.0;
        topo.for_each_neighbor(c, |nb, d| {
            let s = (hc - e[nb].to_f64().unwrap_or(f64::NAN)) / d;
            if s > 0.0 {
                let w = s.powf(exponent);
                g.recs[base + k] = nb;
                g.weights[base + k] = w;
                total += w;
                k += 1;
            }
        });
        g.nrec[c] = k as u8;
        let ws = &mut g.weights[base..base + k];
        for w in ws.iter_mut() {
            *w /= total;
        }
        while ws.iter().sum::<f64>() > 1.0 {
            for w in ws.iter_mut() {
                *w *= 1.0 - f64::EPSILON;
            }
        }
    }
    for c in 0..n {
        let base = c * dmax;
        let mut j = 0;
        topo.for_each_neighbor(c, |nb, _| {
            let nb_base = nb * dmax;
            for k in 0..g.nrec[nb] as usize {
                if g.recs[nb_base + k] == c {
                    g.donors[base + j] = nb;
                    g.donor_weights[base + j] = g.weights[nb_base + k];
                    j += 1;
                }
            }
        });
        g.ndon[c] = j as u8;
    }
    g
}

/// Level sets for an MFD graph: a cell joins the wave after the one in which
/// its last receiver was placed. Each level is sorted by cell index.
pub fn generate_mfd_order(mfd: &MfdFlowGraph) -> Result<TraversalPlan, LemError> {
    let n = mfd.len();
    let mut plan = TraversalPlan::empty(PlanKind::LevelSets);
    let mut pending: Vec<u8> = mfd.nrec.clone();
    plan.order.reserve(n);
    plan.order.extend((0..n).filter(|&c| pending[c] == 0));
    if plan.order.is_empty() {
        return check_complete(0, n).map(|_| plan);
    }
    plan.levels.push(plan.order.len());
    let mut lo = 0;
    while lo < plan.order.len() {
        let hi = plan.order.len();
        for i in lo..hi {
            let c = plan.order[i];
            for &d in mfd.donors(c) {
                pending[d] -= 1;
                if pending[d] == 0 {
                    plan.order.push(d);
                }
            }
        }
        plan.order[hi..].sort_unstable();
        if plan.order.len() > hi {
            plan.levels.push(plan.order.len());
        }
        lo = hi;
    }
    check_complete(plan.order.len(), n)?;
    Ok(plan)
}
