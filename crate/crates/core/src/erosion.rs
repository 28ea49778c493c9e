//! Uplift and implicit stream-power erosion.
//!
//! Each eroded cell solves
//!
//! ```text
//! h - h0 + F * (h - h_r)^n = 0,    F = K * dt * A^m / d^n
//! ```
//!
//! by Newton iteration, where `h0` is the cell's uplifted elevation, `h_r` the
//! already-updated elevation of its receiver at distance `d`, and `A` its
//! accumulated area. Cells are visited receiver-first, which makes the scheme
//! implicit along each flow path.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use num_traits::NumCast;

use crate::accumulation::{accumulate_into, SourceWeights};
use crate::error::LemError;
use crate::flow_graph::{compute_donors, generate_queue, FlowGraph, TraversalPlan, NO_FLOW};
use crate::grid::{Elevation, Grid, Raster, Topology};
use crate::timing::{Phase, PhaseTimings};

/// Physical and numerical constants of the model.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SimParams {
    /// Erodibility `K`.
    pub k: f64,
    /// Area exponent `m`.
    pub m_exp: f64,
    /// Slope exponent `n`.
    pub n_exp: f64,
    /// Uplift rate.
    pub uplift: f64,
    /// Timestep length.
    pub dt: f64,
    /// Newton step-size tolerance.
    pub epsilon: f64,
    pub dx: f64,
    pub dy: f64,
    pub max_newton_iters: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            k: 2e-6,
            m_exp: 0.5,
            n_exp: 1.0,
            uplift: 2e-3,
            dt: 1000.0,
            epsilon: 1e-6,
            dx: 1.0,
            dy: 1.0,
            max_newton_iters: 100,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), LemError> {
        fn bad(name: &'static str, reason: impl Into<String>) -> Result<(), LemError> {
            Err(LemError::Param {
                name,
                reason: reason.into(),
            })
        }
        let finite = [
            ("k", self.k),
            ("m_exp", self.m_exp),
            ("n_exp", self.n_exp),
            ("uplift", self.uplift),
            ("dt", self.dt),
            ("epsilon", self.epsilon),
            ("dx", self.dx),
            ("dy", self.dy),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return bad(name, "must be finite");
            }
        }
        if self.dt <= 0.0 {
            return bad("dt", "must be > 0");
        }
        if self.epsilon <= 0.0 {
            return bad("epsilon", "must be > 0");
        }
        if self.k < 0.0 {
            return bad("k", "must be >= 0");
        }
        if self.n_exp <= 0.0 {
            return bad("n_exp", "must be > 0");
        }
        if self.dx <= 0.0 || self.dy <= 0.0 {
            return bad("dx", "cell spacing must be > 0");
        }
        if self.max_newton_iters == 0 {
            return bad("max_newton_iters", "must be >= 1");
        }
        Ok(())
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }
}

/// Uplift rate, uniform or per cell.
#[derive(Debug, Clone, PartialEq)]
pub enum UpliftField {
    Uniform(f64),
    PerCell(Vec<f64>),
}

impl UpliftField {
    #[inline]
    pub fn rate(&self, c: usize) -> f64 {
        match self {
            Self::Uniform(u) => *u,
            Self::PerCell(us) => us[c],
        }
    }
}

/// Raises every non-boundary cell in `start..start + elev.len()` by `u(c) * dt`.
pub fn uplift_kernel<G: Topology, T: Elevation>(topo: &G, field: &UpliftField, dt: f64, start: usize, elev: &mut [T]) {
    for (i, h) in elev.iter_mut().enumerate() {
        let c = start + i;
        if !topo.is_boundary(c) {
            *h = *h + cast::<T>(field.rate(c) * dt);
        }
    }
}

pub fn uplift<G: Topology, T: Elevation>(topo: &G, elev: &mut [T], field: &UpliftField, dt: f64) {
    uplift_kernel(topo, field, dt, 0, elev);
}

#[inline]
fn cast<T: Elevation>(v: f64) -> T {
    <T as NumCast>::from(v).expect("finite value representable")
}

/// Per-run constants of the Newton solve, pre-converted to the elevation type.
#[derive(Debug, Clone, Copy)]
pub struct NewtonCoeffs<T> {
    k_dt: f64,
    m_exp: f64,
    n_exp_f64: f64,
    n_exp: T,
    n_minus_one: T,
    epsilon: T,
    max_iters: u32,
}

impl<T: Elevation> NewtonCoeffs<T> {
    pub fn new(params: &SimParams) -> Self {
        Self {
            k_dt: params.k * params.dt,
            m_exp: params.m_exp,
            n_exp_f64: params.n_exp,
            n_exp: cast(params.n_exp),
            n_minus_one: cast(params.n_exp - 1.0),
            epsilon: cast(params.epsilon),
            max_iters: params.max_newton_iters,
        }
    }

    pub fn max_iters(&self) -> u32 {
        self.max_iters
    }

    /// `K * dt * A^m / d^n`.
    #[inline]
    pub fn forcing(&self, area: f64, dist: f64) -> T {
        cast(self.k_dt * area.powf(self.m_exp) / dist.powf(self.n_exp_f64))
    }
}

/// Solves `h - h0 + f * (h - hn)^n = 0` for `h` in `[hn, h0]`.
///
/// Starts at `h0` and stops once successive iterates differ by at most
/// `epsilon`. An iterate that would drop below `hn` is placed on `hn`.
/// Returns the accepted elevation and the number of Newton steps taken, or
/// `None` if `max_iters` steps did not converge.
#[inline]
pub fn solve_implicit<T: Elevation>(h0: T, hn: T, f: T, coeffs: &NewtonCoeffs<T>) -> Option<(T, u32)> {
    if h0 <= hn {
        return Some((h0, 0));
    }
    let one = T::one();
    let mut h = h0;
    let mut hp = h0;
    let mut iters = 0;
    while iters < coeffs.max_iters {
        let drop = h - hn;
        let residual = h - h0 + f * drop.powf(coeffs.n_exp);
        let slope = one + f * coeffs.n_exp * drop.powf(coeffs.n_minus_one);
        h = h - residual / slope;
        if h < hn {
            h = hn;
        }
        iters += 1;
        let delta = h - hp;
        hp = h;
        if delta.abs() <= coeffs.epsilon {
            return Some((h, iters));
        }
    }
    None
}

/// Records the global completion order of eroded cells, for checking that
/// every cell is eroded after its receiver.
#[derive(Debug)]
pub struct ErosionTrace {
    counter: AtomicUsize,
    stamps: Vec<AtomicUsize>,
}

impl ErosionTrace {
    pub const UNSET: usize = usize::MAX;

    pub fn new(n: usize) -> Self {
        Self {
            counter: AtomicUsize::new(0),
            stamps: (0..n).map(|_| AtomicUsize::new(Self::UNSET)).collect(),
        }
    }

    pub fn reset(&self) {
        self.counter.store(0, Ordering::SeqCst);
        for s in &self.stamps {
            s.store(Self::UNSET, Ordering::Relaxed);
        }
    }

    #[inline]
    pub(crate) fn record(&self, c: usize) {
        let t = self.counter.fetch_add(1, Ordering::SeqCst);
        self.stamps[c].store(t, Ordering::SeqCst);
    }

    pub fn stamp(&self, c: usize) -> Option<usize> {
        match self.stamps[c].load(Ordering::SeqCst) {
            Self::UNSET => None,
            t => Some(t),
        }
    }

    /// Cells eroded before their (eroded) receiver.
    pub fn violations(&self, graph: &FlowGraph) -> Vec<usize> {
        (0..graph.len())
            .filter(|&c| match (graph.receiver(c), self.stamp(c)) {
                (Some(r), Some(tc)) => self.stamp(r).is_some_and(|tr| tr > tc),
                _ => false,
            })
            .collect()
    }
}

/// Newton work done by an erosion pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NewtonStats {
    pub cells: u64,
    pub iterations: u64,
    pub max_iterations: u32,
}

impl NewtonStats {
    #[inline]
    pub(crate) fn record(&mut self, iters: u32) {
        self.cells += 1;
        self.iterations += iters as u64;
        self.max_iterations = self.max_iterations.max(iters);
    }

    pub fn merge(&mut self, other: &NewtonStats) {
        self.cells += other.cells;
        self.iterations += other.iterations;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
    }
}

/// New elevation of `c`, given read access to already-final receiver heights.
#[inline]
pub(crate) fn erode_cell<T: Elevation>(
    c: usize,
    h0: T,
    graph: &FlowGraph,
    accum: &[f64],
    coeffs: &NewtonCoeffs<T>,
    read: impl Fn(usize) -> T,
) -> Result<Option<(T, u32)>, LemError> {
    let r = graph.rec[c];
    if r == NO_FLOW {
        return Ok(None);
    }
    let f = coeffs.forcing(accum[c], graph.rec_dist[c]);
    match solve_implicit(h0, read(r), f, coeffs) {
        Some(out) => Ok(Some(out)),
        None => Err(LemError::NonConvergence {
            cell: c,
            iterations: coeffs.max_iters,
        }),
    }
}

/// Erodes the cells of `cells` in the given order.
pub(crate) fn erode_sequence<T: Elevation>(
    cells: &[usize],
    elev: &mut [T],
    graph: &FlowGraph,
    accum: &[f64],
    coeffs: &NewtonCoeffs<T>,
    trace: Option<&ErosionTrace>,
    stats: &mut NewtonStats,
) -> Result<(), LemError> {
    for &c in cells {
        if let Some((h, iters)) = erode_cell(c, elev[c], graph, accum, coeffs, |r| elev[r])? {
            elev[c] = h;
            stats.record(iters);
            if let Some(t) = trace {
                t.record(c);
            }
        }
    }
    Ok(())
}

/// Serial erosion pass over `plan`; cells without a receiver are left alone.
pub fn erode<T: Elevation>(
    elev: &mut [T],
    plan: &TraversalPlan,
    graph: &FlowGraph,
    accum: &[f64],
    params: &SimParams,
) -> Result<NewtonStats, LemError> {
    let coeffs = NewtonCoeffs::new(params);
    let mut stats = NewtonStats::default();
    erode_sequence(plan.order(), elev, graph, accum, &coeffs, None, &mut stats)?;
    Ok(stats)
}

/// Outcome of one timestep.
#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    pub timings: PhaseTimings,
    pub newton: NewtonStats,
    /// Interior cells without a receiver at the start of the step.
    pub interior_sinks: usize,
    /// Number of traversal segments (levels or source trees).
    pub segments: usize,
}

/// One serial breadth-first timestep: receivers, donors, queue,
/// accumulation, uplift, erosion.
pub fn step<T: Elevation>(grid: &Grid, elev: &mut Raster<T>, params: &SimParams) -> Result<StepDiagnostics, LemError> {
    let mut diag = StepDiagnostics::default();
    let t = &mut diag.timings;
    let mut graph = t.time(Phase::Receivers, || crate::flow_graph::compute_receivers(grid, elev));
    t.time(Phase::Donors, || compute_donors(grid, &mut graph));
    let plan = t.time(Phase::Order, || generate_queue(&graph))?;
    let mut acc = vec![0.0; grid.num_cells()];
    t.time(Phase::Accumulation, || {
        accumulate_into(&plan, &graph, SourceWeights::Uniform(params.cell_area()), &mut acc)
    });
    t.time(Phase::Uplift, || {
        uplift(grid, elev, &UpliftField::Uniform(params.uplift), params.dt)
    });
    let start = Instant::now();
    diag.newton = erode(elev, &plan, &graph, &acc, params)?;
    diag.timings.add(Phase::Erosion, start.elapsed());
    diag.interior_sinks = count_interior_sinks(grid, &graph);
    diag.segments = plan.nlevels();
    Ok(diag)
}

pub fn count_interior_sinks<G: Topology>(topo: &G, graph: &FlowGraph) -> usize {
    (0..graph.len())
        .filter(|&c| !topo.is_boundary(c) && graph.rec[c] == NO_FLOW)
        .count()
}
