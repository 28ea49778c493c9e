//! Execution strategies.
//!
//! | kind                | order | parallel phases                                   |
//! |---------------------|-------|---------------------------------------------------|
//! | `bw_serial`         | stack | none                                              |
//! | `rb_serial`         | queue | none                                              |
//! | `bw_par_erosion`    | stack | erosion, one source tree per task                 |
//! | `rb_par_erosion`    | queue | erosion, level by level                           |
//! | `rb_par_all`        | queue | receivers, donors, accumulation, uplift, erosion  |
//! | `rb_private_queues` | queue | everything; workers own disjoint drainage forests |
//!
//! Every strategy evaluates the same per-cell kernels with the same inputs,
//! so final elevations are bit-identical across strategies and worker
//! counts. Level-parallel phases separate levels with a barrier; the
//! private-queue strategy synchronises only after receivers and after
//! erosion.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::accumulation::{accumulate_into, accumulate_mfd_into, d8_value, mfd_value, SourceWeights};
use crate::depressions::{priority_flood_fill, FillMode, FillOptions};
use crate::erosion::{
    count_interior_sinks, erode_cell, erode_sequence, uplift_kernel, ErosionTrace, NewtonCoeffs, NewtonStats,
    SimParams, UpliftField,
};
use crate::error::LemError;
use crate::flow_graph::{
    compute_mfd, donors_kernel, donors_of, expand_levels, generate_mfd_order, generate_queue_into,
    generate_stack_into, receivers_kernel, FlowGraph, MfdFlowGraph, PlanKind, TraversalPlan, NO_FLOW,
};
use crate::grid::{Elevation, Grid, Neighborhood, Raster, Topology};
use crate::shared::SharedSlice;
use crate::terrain_io::{generate_terrain, Precision, RoutingMode, RunConfig};
use crate::timing::{Phase, PhaseTimings};

/// Cells per task in chunked parallel loops.
const CHUNK: usize = 4096;
/// Levels smaller than this run inline on the calling thread.
const MIN_PARALLEL_LEVEL: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    BwSerial,
    RbSerial,
    BwParErosion,
    RbParErosion,
    RbParAll,
    RbPrivateQueues,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::BwSerial,
        StrategyKind::RbSerial,
        StrategyKind::BwParErosion,
        StrategyKind::RbParErosion,
        StrategyKind::RbParAll,
        StrategyKind::RbPrivateQueues,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::BwSerial => "bw_serial",
            Self::RbSerial => "rb_serial",
            Self::BwParErosion => "bw_par_erosion",
            Self::RbParErosion => "rb_par_erosion",
            Self::RbParAll => "rb_par_all",
            Self::RbPrivateQueues => "rb_private_queues",
        }
    }

    pub fn is_serial(self) -> bool {
        matches!(self, Self::BwSerial | Self::RbSerial)
    }

    fn uses_stack(self) -> bool {
        matches!(self, Self::BwSerial | Self::BwParErosion)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownStrategy(pub String);

impl fmt::Display for UnknownStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown strategy `{}`", self.0)
    }
}

impl std::error::Error for UnknownStrategy {}

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    /// Accepts the snake-case names and the short labels `B&W`, `B&W+P`,
    /// `RB`, `RB+P`, `RB+PI`, `RB+PQ`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.to_ascii_lowercase().as_str() {
            "bw_serial" | "b&w" | "bw" => Self::BwSerial,
            "rb_serial" | "rb" => Self::RbSerial,
            "bw_par_erosion" | "b&w+p" | "bw+p" => Self::BwParErosion,
            "rb_par_erosion" | "rb+p" => Self::RbParErosion,
            "rb_par_all" | "rb+pi" => Self::RbParAll,
            "rb_private_queues" | "rb+pq" => Self::RbPrivateQueues,
            _ => return Err(UnknownStrategy(s.to_owned())),
        };
        Ok(kind)
    }
}

/// Strategy kind plus requested parallelism. Serial kinds ignore `workers`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub workers: usize,
}

impl Strategy {
    pub fn new(kind: StrategyKind, workers: usize) -> Self {
        Self {
            kind,
            workers: workers.max(1),
        }
    }

    pub fn serial(kind: StrategyKind) -> Self {
        Self::new(kind, 1)
    }

    pub fn effective_workers(&self) -> usize {
        if self.kind.is_serial() {
            1
        } else {
            self.workers
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.kind, self.effective_workers())
    }
}

/// Splits the receiver-less cells, in ascending index order, into `workers`
/// contiguous runs whose sizes differ by at most one.
pub fn partition_sources(rec: &[usize], workers: usize) -> Vec<Vec<usize>> {
    let workers = workers.max(1);
    let sources: Vec<usize> = (0..rec.len()).filter(|&c| rec[c] == NO_FLOW).collect();
    let base = sources.len() / workers;
    let extra = sources.len() % workers;
    let mut out = Vec::with_capacity(workers);
    let mut start = 0;
    for w in 0..workers {
        let len = base + usize::from(w < extra);
        out.push(sources[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Breadth-first plan over the drainage forest rooted at `sources`, finding
/// donors by scanning neighbours. Donors land in `slots(c)` before `c` is
/// expanded.
fn private_plan<G: Topology>(
    topo: &G,
    rec: &[usize],
    sources: &[usize],
    plan: &mut TraversalPlan,
    mut record_donors: impl FnMut(usize, &[usize]),
) {
    plan.clear(PlanKind::LevelSets);
    let mut slots = vec![NO_FLOW; topo.max_degree()];
    expand_levels(&mut plan.order, &mut plan.levels, sources.iter().copied(), |c, out| {
        let k = donors_of(topo, rec, c, &mut slots) as usize;
        record_donors(c, &slots[..k]);
        out.extend_from_slice(&slots[..k]);
    });
}

/// Private plans for each worker's share of the sources, computed serially.
pub fn private_plans(graph: &FlowGraph, topo: &impl Topology, workers: usize) -> Vec<TraversalPlan> {
    partition_sources(graph.receivers(), workers)
        .iter()
        .map(|sources| {
            let mut plan = TraversalPlan::empty(PlanKind::LevelSets);
            private_plan(topo, graph.receivers(), sources, &mut plan, |_, _| {});
            plan
        })
        .collect()
}

/// Diagnostics of one timestep.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub timings: PhaseTimings,
    pub newton: NewtonStats,
    pub interior_sinks: usize,
    /// Levels (queue) or source trees (stack) in this step's plan.
    pub segments: usize,
    /// Cells processed by each private-queue worker.
    pub worker_cells: Vec<usize>,
}

/// A terrain plus everything needed to advance it under one strategy.
pub struct Simulation<T: Elevation> {
    grid: Grid,
    params: SimParams,
    coeffs: NewtonCoeffs<T>,
    uplift: UpliftField,
    strategy: Strategy,
    fill: FillOptions,
    routing: RoutingMode,
    mfd_exponent: f64,
    elev: Raster<T>,
    graph: FlowGraph,
    plan: TraversalPlan,
    private: Vec<TraversalPlan>,
    mfd: Option<(MfdFlowGraph, TraversalPlan)>,
    accum: Vec<f64>,
    scratch: Vec<usize>,
    pool: Option<ThreadPool>,
    trace: Option<ErosionTrace>,
}

#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub params: SimParams,
    pub strategy: Strategy,
    pub fill: FillOptions,
    pub neighborhood: Neighborhood,
    pub routing: RoutingMode,
    pub mfd_exponent: f64,
    pub check_order: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            params: SimParams::default(),
            strategy: Strategy::serial(StrategyKind::RbSerial),
            fill: FillOptions::OFF,
            neighborhood: Neighborhood::eight(),
            routing: RoutingMode::D8,
            mfd_exponent: 1.0,
            check_order: false,
        }
    }
}

impl SimulationOptions {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, LemError> {
        Ok(Self {
            params: cfg.params.clone(),
            strategy: cfg.strategy,
            fill: cfg.fill,
            neighborhood: Neighborhood::new(cfg.connectivity, cfg.params.dx, cfg.params.dy)?,
            routing: cfg.routing,
            mfd_exponent: cfg.mfd_exponent,
            check_order: cfg.check_order,
        })
    }
}

impl<T: Elevation> Simulation<T> {
    pub fn new(elev: Raster<T>, opts: SimulationOptions) -> Result<Self, LemError> {
        opts.params.validate()?;
        if let Some(cell) = elev.iter().position(|v| !v.is_finite()) {
            return Err(LemError::NonFinite { cell });
        }
        let kind = opts.strategy.kind;
        if opts.routing == RoutingMode::Mfd && (kind.uses_stack() || kind == StrategyKind::RbPrivateQueues) {
            return Err(LemError::Unsupported {
                strategy: kind.to_string(),
                what: "multiple-flow-direction routing".into(),
            });
        }
        let grid = Grid::for_raster(&elev, opts.neighborhood)?;
        let n = grid.num_cells();
        let pool = if kind.is_serial() {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(opts.strategy.workers)
                    .build()
                    .map_err(|e| LemError::Param {
                        name: "workers",
                        reason: e.to_string(),
                    })?,
            )
        };
        Ok(Self {
            coeffs: NewtonCoeffs::new(&opts.params),
            uplift: UpliftField::Uniform(opts.params.uplift),
            graph: FlowGraph::with_capacity(n, grid.max_degree()),
            plan: TraversalPlan::empty(PlanKind::LevelSets),
            private: Vec::new(),
            mfd: None,
            accum: vec![0.0; n],
            scratch: Vec::new(),
            trace: opts.check_order.then(|| ErosionTrace::new(n)),
            grid,
            params: opts.params,
            strategy: opts.strategy,
            fill: opts.fill,
            routing: opts.routing,
            mfd_exponent: opts.mfd_exponent,
            elev,
            pool,
        })
    }

    /// Replaces the uniform uplift rate with a per-cell field.
    pub fn set_uplift_field(&mut self, rates: Vec<f64>) -> Result<(), LemError> {
        if rates.len() != self.grid.num_cells() {
            return Err(LemError::DataLength {
                expected: self.grid.num_cells(),
                actual: rates.len(),
            });
        }
        self.uplift = UpliftField::PerCell(rates);
        Ok(())
    }

    pub fn elevation(&self) -> &Raster<T> {
        &self.elev
    }

    pub fn into_elevation(self) -> Raster<T> {
        self.elev
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Flow graph of the last step.
    pub fn flow_graph(&self) -> &FlowGraph {
        &self.graph
    }

    /// Global plan of the last step (empty for `rb_private_queues`).
    pub fn plan(&self) -> &TraversalPlan {
        &self.plan
    }

    /// Per-worker plans of the last `rb_private_queues` step.
    pub fn private_plans(&self) -> &[TraversalPlan] {
        &self.private
    }

    /// Accumulated area of the last step.
    pub fn accumulation(&self) -> &[f64] {
        &self.accum
    }

    pub fn erosion_trace(&self) -> Option<&ErosionTrace> {
        self.trace.as_ref()
    }

    pub fn step(&mut self) -> Result<StepReport, LemError> {
        let mut report = StepReport::default();
        if let Some(t) = &self.trace {
            t.reset();
        }
        if self.fill.mode != FillMode::Off {
            let (grid, fill) = (&self.grid, &self.fill);
            let elev = &mut self.elev;
            report.timings.time(Phase::Fill, || priority_flood_fill(grid, elev, fill));
        }
        match self.strategy.kind {
            StrategyKind::RbPrivateQueues => self.step_private(&mut report)?,
            _ => self.step_shared(&mut report)?,
        }
        report.interior_sinks = count_interior_sinks(&self.grid, &self.graph);
        if let Some(t) = &self.trace {
            if let Some(&cell) = t.violations(&self.graph).first() {
                return Err(LemError::OrderViolation { cell });
            }
        }
        Ok(report)
    }

    pub fn run(&mut self, steps: usize) -> Result<Vec<StepReport>, LemError> {
        (0..steps).map(|_| self.step()).collect()
    }

    fn step_shared(&mut self, report: &mut StepReport) -> Result<(), LemError> {
        let kind = self.strategy.kind;
        let all_parallel = kind == StrategyKind::RbParAll;
        let t = &mut report.timings;

        t.time(Phase::Receivers, || {
            if all_parallel {
                self.receivers_parallel()
            } else {
                let FlowGraph { rec, rec_dist, .. } = &mut self.graph;
                receivers_kernel(&self.grid, &self.elev, 0, rec, rec_dist);
            }
        });
        t.time(Phase::Donors, || {
            if all_parallel {
                self.donors_parallel()
            } else {
                let FlowGraph {
                    rec, donor, dnum, ..
                } = &mut self.graph;
                donors_kernel(&self.grid, rec, 0, donor, dnum);
            }
        });
        if self.routing == RoutingMode::Mfd {
            let mfd = t.time(Phase::Receivers, || compute_mfd(&self.grid, &self.elev, self.mfd_exponent));
            let order = t.time(Phase::Order, || generate_mfd_order(&mfd))?;
            self.mfd = Some((mfd, order));
        }
        t.time(Phase::Order, || {
            if kind.uses_stack() {
                generate_stack_into(&self.graph, &mut self.plan, &mut self.scratch)
            } else {
                generate_queue_into(&self.graph, &mut self.plan)
            }
        })?;
        report.segments = self.plan.nlevels();

        t.time(Phase::Accumulation, || self.accumulate(all_parallel));
        t.time(Phase::Uplift, || {
            if all_parallel {
                self.uplift_parallel()
            } else {
                uplift_kernel(&self.grid, &self.uplift, self.params.dt, 0, &mut self.elev)
            }
        });
        let start = Instant::now();
        report.newton = match kind {
            StrategyKind::BwSerial | StrategyKind::RbSerial => {
                let mut stats = NewtonStats::default();
                erode_sequence(
                    self.plan.order(),
                    &mut self.elev,
                    &self.graph,
                    &self.accum,
                    &self.coeffs,
                    self.trace.as_ref(),
                    &mut stats,
                )?;
                stats
            }
            StrategyKind::BwParErosion => self.erode_trees_parallel()?,
            _ => self.erode_levels_parallel()?,
        };
        t.add(Phase::Erosion, start.elapsed());
        Ok(())
    }

    fn weights(&self) -> SourceWeights<'static> {
        SourceWeights::Uniform(self.params.cell_area())
    }

    fn receivers_parallel(&mut self) {
        let grid = &self.grid;
        let elev: &[T] = &self.elev;
        let FlowGraph { rec, rec_dist, .. } = &mut self.graph;
        self.pool.as_ref().expect("pool").install(|| {
            rec.par_chunks_mut(CHUNK)
                .zip(rec_dist.par_chunks_mut(CHUNK))
                .enumerate()
                .for_each(|(i, (r, d))| receivers_kernel(grid, elev, i * CHUNK, r, d));
        });
    }

    fn donors_parallel(&mut self) {
        let grid = &self.grid;
        let dmax = grid.max_degree();
        let FlowGraph {
            rec, donor, dnum, ..
        } = &mut self.graph;
        let rec: &[usize] = rec;
        self.pool.as_ref().expect("pool").install(|| {
            donor
                .par_chunks_mut(CHUNK * dmax)
                .zip(dnum.par_chunks_mut(CHUNK))
                .enumerate()
                .for_each(|(i, (d, k))| donors_kernel(grid, rec, i * CHUNK, d, k));
        });
    }

    fn uplift_parallel(&mut self) {
        let grid = &self.grid;
        let (field, dt) = (&self.uplift, self.params.dt);
        let elev: &mut [T] = &mut self.elev;
        self.pool.as_ref().expect("pool").install(|| {
            elev.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(i, e)| uplift_kernel(grid, field, dt, i * CHUNK, e));
        });
    }

    fn accumulate(&mut self, parallel: bool) {
        let weights = self.weights();
        match (&self.mfd, parallel) {
            (Some((mfd, order)), false) => accumulate_mfd_into(order, mfd, weights, &mut self.accum),
            (None, false) => accumulate_into(&self.plan, &self.graph, weights, &mut self.accum),
            (Some((mfd, order)), true) => {
                let acc = SharedSlice::new(&mut self.accum);
                let pool = self.pool.as_ref().expect("pool");
                for_each_level_rev(pool, order, |c| {
                    // SAFETY: level cells are distinct; donors sit in finished levels
                    unsafe {
                        let a = mfd_value(weights.at(c), mfd.donors(c), mfd.donor_weights(c), |n| acc.read(n));
                        acc.write(c, a);
                    }
                });
            }
            (None, true) => {
                let graph = &self.graph;
                let acc = SharedSlice::new(&mut self.accum);
                let pool = self.pool.as_ref().expect("pool");
                for_each_level_rev(pool, &self.plan, |c| {
                    // SAFETY: level cells are distinct; donors sit in finished levels
                    unsafe {
                        let a = d8_value(weights.at(c), graph.donors(c), |n| acc.read(n));
                        acc.write(c, a);
                    }
                });
            }
        }
    }

    fn erode_levels_parallel(&mut self) -> Result<NewtonStats, LemError> {
        let pool = self.pool.as_ref().expect("pool");
        let (graph, accum, coeffs, trace) = (&self.graph, &self.accum[..], &self.coeffs, self.trace.as_ref());
        let plan = &self.plan;
        let elev = SharedSlice::new(&mut self.elev);
        let mut total = NewtonStats::default();
        pool.install(|| {
            for l in 1..plan.nlevels() {
                let level = plan.level(l);
                let run = |cells: &[usize]| -> Result<NewtonStats, LemError> {
                    let mut stats = NewtonStats::default();
                    for &c in cells {
                        // SAFETY: each level cell is written once; receivers are in
                        // earlier, finished levels
                        unsafe {
                            if let Some((h, it)) = erode_cell(c, elev.read(c), graph, accum, coeffs, |r| elev.read(r))? {
                                elev.write(c, h);
                                stats.record(it);
                                if let Some(t) = trace {
                                    t.record(c);
                                }
                            }
                        }
                    }
                    Ok(stats)
                };
                let stats = if level.len() < MIN_PARALLEL_LEVEL {
                    run(level)?
                } else {
                    level.par_chunks(CHUNK / 4).map(run).try_reduce(NewtonStats::default, |mut a, b| {
                        a.merge(&b);
                        Ok(a)
                    })?
                };
                total.merge(&stats);
            }
            Ok(total)
        })
    }

    fn erode_trees_parallel(&mut self) -> Result<NewtonStats, LemError> {
        let pool = self.pool.as_ref().expect("pool");
        let (graph, accum, coeffs, trace) = (&self.graph, &self.accum[..], &self.coeffs, self.trace.as_ref());
        let plan = &self.plan;
        let elev = SharedSlice::new(&mut self.elev);
        pool.install(|| {
            (0..plan.nlevels())
                .into_par_iter()
                .map(|tree| {
                    let mut stats = NewtonStats::default();
                    for &c in plan.level(tree) {
                        // SAFETY: source trees are disjoint and each is walked by one task
                        unsafe {
                            if let Some((h, it)) = erode_cell(c, elev.read(c), graph, accum, coeffs, |r| elev.read(r))? {
                                elev.write(c, h);
                                stats.record(it);
                                if let Some(t) = trace {
                                    t.record(c);
                                }
                            }
                        }
                    }
                    Ok(stats)
                })
                .try_reduce(NewtonStats::default, |mut a, b| {
                    a.merge(&b);
                    Ok(a)
                })
        })
    }

    fn step_private(&mut self, report: &mut StepReport) -> Result<(), LemError> {
        let workers = self.strategy.workers;
        report.timings.time(Phase::Receivers, || self.receivers_parallel());
        // barrier: private queues need every receiver

        let sync_start = Instant::now();
        let partitions = partition_sources(&self.graph.rec, workers);
        self.private.resize_with(workers, || TraversalPlan::empty(PlanKind::LevelSets));
        self.plan.clear(PlanKind::LevelSets);

        let grid = &self.grid;
        let dmax = grid.max_degree();
        let (coeffs, trace, field, dt) = (&self.coeffs, self.trace.as_ref(), &self.uplift, self.params.dt);
        let cell_area = self.params.cell_area();
        let FlowGraph {
            rec,
            rec_dist,
            donor,
            dnum,
            ..
        } = &mut self.graph;
        let rec: &[usize] = rec;
        let rec_dist: &[f64] = rec_dist;
        let donor = SharedSlice::new(donor);
        let dnum = SharedSlice::new(dnum);
        let accum = SharedSlice::new(&mut self.accum);
        let elev = SharedSlice::new(&mut self.elev);
        let pool = self.pool.as_ref().expect("pool");

        let outcomes: Vec<Result<(PhaseTimings, NewtonStats, usize), LemError>> = pool.install(|| {
            self.private
                .par_iter_mut()
                .zip(partitions.par_iter())
                .with_min_len(1)
                .with_max_len(1)
                .map(|(plan, sources)| {
                    let mut t = PhaseTimings::default();
                    // SAFETY (whole closure): drainage forests of distinct sources are
                    // disjoint, so every index written here belongs to this worker's
                    // forest alone, and every index read is either in the forest or
                    // an immutable receiver/distance entry.
                    t.time(Phase::Order, || {
                        private_plan(grid, rec, sources, plan, |c, ds| unsafe {
                            for (k, &d) in ds.iter().enumerate() {
                                donor.write(dmax * c + k, d);
                            }
                            dnum.write(c, ds.len() as u8);
                        })
                    });
                    t.time(Phase::Accumulation, || {
                        for &c in plan.order().iter().rev() {
                            unsafe {
                                let k = dnum.read(c) as usize;
                                let mut a = cell_area;
                                for i in 0..k {
                                    a += accum.read(donor.read(dmax * c + i));
                                }
                                accum.write(c, a);
                            }
                        }
                    });
                    t.time(Phase::Uplift, || {
                        for &c in plan.order() {
                            if !grid.is_boundary(c) {
                                unsafe {
                                    let h = elev.read(c) + cast::<T>(field.rate(c) * dt);
                                    elev.write(c, h);
                                }
                            }
                        }
                    });
                    let mut stats = NewtonStats::default();
                    let start = Instant::now();
                    for &c in plan.order() {
                        let r = rec[c];
                        if r == NO_FLOW {
                            continue;
                        }
                        unsafe {
                            let f = coeffs.forcing(accum.read(c), rec_dist[c]);
                            let (h, it) = crate::erosion::solve_implicit(elev.read(c), elev.read(r), f, coeffs)
                                .ok_or(LemError::NonConvergence {
                                    cell: c,
                                    iterations: coeffs.max_iters(),
                                })?;
                            elev.write(c, h);
                            stats.record(it);
                        }
                        if let Some(tr) = trace {
                            tr.record(c);
                        }
                    }
                    t.add(Phase::Erosion, start.elapsed());
                    Ok((t, stats, plan.order().len()))
                })
                .collect()
        });
        // barrier after erosion
        let wall = sync_start.elapsed();
        let mut merged = PhaseTimings::default();
        for outcome in outcomes {
            let (t, stats, cells) = outcome?;
            merged = merged.max(&t);
            report.newton.merge(&stats);
            report.worker_cells.push(cells);
        }
        let busy: Duration = merged.total();
        merged.add(Phase::Sync, wall.saturating_sub(busy));
        report.timings += &merged;
        report.segments = self.private.iter().map(TraversalPlan::nlevels).max().unwrap_or(0);
        Ok(())
    }
}

#[inline]
fn cast<T: Elevation>(v: f64) -> T {
    <T as num_traits::NumCast>::from(v).expect("finite value representable")
}

/// Visits the cells of `plan` from the last level to the first, fanning
/// large levels out over `pool`. Levels are separated by a barrier.
fn for_each_level_rev(pool: &ThreadPool, plan: &TraversalPlan, f: impl Fn(usize) + Sync) {
    pool.install(|| {
        for l in (0..plan.nlevels()).rev() {
            let level = plan.level(l);
            if level.len() < MIN_PARALLEL_LEVEL {
                level.iter().for_each(|&c| f(c));
            } else {
                level.par_chunks(CHUNK).for_each(|cells| cells.iter().for_each(|&c| f(c)));
            }
        }
    });
}

/// Output of [`run_simulation`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub elevation: Raster<f64>,
    pub steps: Vec<StepReport>,
}

impl RunOutput {
    pub fn total_timings(&self) -> PhaseTimings {
        let mut t = PhaseTimings::default();
        for s in &self.steps {
            t += &s.timings;
        }
        t
    }
}

/// Runs `config.timesteps` steps on the seeded terrain under `strategy`,
/// calling `on_step(step_index, elevation)` after every step.
pub fn run_simulation_with(
    config: &RunConfig,
    strategy: Strategy,
    mut on_step: impl FnMut(usize, &Raster<f64>) -> Result<(), LemError>,
) -> Result<RunOutput, LemError> {
    let terrain = generate_terrain(config.width, config.height, config.seed)?;
    let mut opts = SimulationOptions::from_config(config)?;
    opts.strategy = strategy;
    match config.precision {
        Precision::F64 => drive(Simulation::new(terrain, opts)?, config.timesteps, &mut on_step),
        Precision::F32 => drive(
            Simulation::new(terrain.map(|v| v as f32), opts)?,
            config.timesteps,
            &mut on_step,
        ),
    }
}

pub fn run_simulation(config: &RunConfig, strategy: Strategy) -> Result<RunOutput, LemError> {
    run_simulation_with(config, strategy, |_, _| Ok(()))
}

fn drive<T: Elevation>(
    mut sim: Simulation<T>,
    steps: usize,
    on_step: &mut impl FnMut(usize, &Raster<f64>) -> Result<(), LemError>,
) -> Result<RunOutput, LemError> {
    let widen = |r: &Raster<T>| r.map(|v| v.to_f64().unwrap_or(f64::NAN));
    let mut reports = Vec::with_capacity(steps);
    for i in 0..steps {
        reports.push(sim.step()?);
        on_step(i + 1, &widen(sim.elevation()))?;
    }
    Ok(RunOutput {
        elevation: widen(sim.elevation()),
        steps: reports,
    })
}
