//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use lem::accumulation::{accumulate, accumulate_mfd, SourceWeights};
use lem::depressions::{priority_flood_fill, FillOptions};
use lem::erosion::{count_interior_sinks, solve_implicit, NewtonCoeffs, SimParams};
use lem::fixtures::{cell, label, worked_example};
use lem::flow_graph::{
    build_flow_graph, compute_mfd, compute_receivers, generate_mfd_order, generate_queue, MfdFlowGraph, NO_FLOW,
};
use lem::grid::{Grid, Neighborhood, Topology};
use lem::scheduler::{run_simulation, Simulation, SimulationOptions, Strategy, StrategyKind};
use lem::terrain_io::{encode_raster, generate_terrain, parse_config};

// tolerances and budgets
const NEWTON_LINEAR_TOL: f64 = 1e-6;
const NEWTON_QUADRATIC_TOL: f64 = 1e-9;
const CONCAVITY_TARGET: f64 = -0.5;
const CONCAVITY_TOL: f64 = 0.075;
const CONCAVITY_MIN_AREA: f64 = 50.0;
const STEADY_FRACTION: f64 = 1e-4;
const STEADY_CAP: usize = 5000;
const MFD_REL_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labels(cells: &[usize]) -> Vec<usize> {
    cells.iter().map(|&c| label(c)).collect()
}

fn table_1_oracle() -> Outcome {
    let (topo, elev) = worked_example();
    let g = build_flow_graph(&topo, &elev);
    let rec: Vec<Option<usize>> = (0..10).map(|c| g.receiver(c).map(label)).collect();
    let want_rec = [2, 5, 2, 7, 0, 5, 6, 5, 7, 8].map(|l| (l > 0).then_some(l));
    ensure(rec == want_rec, || format!("Rec {rec:?}"))?;
    ensure(g.dnum() == [0, 2, 0, 0, 3, 1, 2, 1, 0, 0], || format!("Dnum {:?}", g.dnum()))?;
    let q = generate_queue(&g).map_err(|e| e.to_string())?;
    ensure(labels(q.order()) == [5, 2, 6, 8, 1, 3, 7, 10, 4, 9], || {
        format!("Queue {:?}", labels(q.order()))
    })?;
    ensure(q.levels() == [0, 1, 4, 8, 10], || format!("Levels {:?}", q.levels()))?;
    let a = accumulate(&q, &g, SourceWeights::Uniform(1.0), 1.0);
    ensure(a.values == [1.0, 3.0, 1.0, 1.0, 10.0, 4.0, 3.0, 2.0, 1.0, 1.0], || {
        format!("Accum {:?}", a.values)
    })?;
    Ok(format!("outlet label {}", label(cell(5))))
}

fn cross_strategy_identity() -> Outcome {
    let cfg = parse_config("width=100 height=100 seed=42 timesteps=120").unwrap();
    let reference = encode_raster(
        &run_simulation(&cfg, Strategy::serial(StrategyKind::BwSerial))
            .map_err(|e| e.to_string())?
            .elevation,
    );
    let mut runs = 0;
    for kind in StrategyKind::ALL {
        for workers in [1, 2, 4, 8] {
            let out = run_simulation(&cfg, Strategy::new(kind, workers)).map_err(|e| e.to_string())?;
            ensure(encode_raster(&out.elevation) == reference, || {
                format!("{kind} x{workers} differs from bw_serial")
            })?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs byte-identical"))
}

fn mass_conservation() -> Outcome {
    for seed in 0..50u64 {
        let r = generate_terrain(50, 50, 1000 + seed).unwrap();
        let grid = Grid::for_raster(&r, Neighborhood::eight()).unwrap();
        let g = build_flow_graph(&grid, &r);
        let q = generate_queue(&g).map_err(|e| e.to_string())?;
        let a = accumulate(&q, &g, SourceWeights::Uniform(grid.cell_area()), grid.cell_area());
        let outflow: f64 = (0..r.len()).filter(|&c| g.receivers()[c] == NO_FLOW).map(|c| a.values[c]).sum();
        let n = r.len() as f64 * grid.cell_area();
        ensure(outflow == n, || format!("seed {seed}: outflow {outflow} != {n}"))?;
    }
    Ok("50 rasters exact".into())
}

fn bisect(h0: f64, hn: f64, f: f64, n: f64) -> f64 {
    let g = |h: f64| h - h0 + f * (h - hn).powf(n);
    let (mut lo, mut hi) = (hn, h0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn newton_solver() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let linear = NewtonCoeffs::<f64>::new(&SimParams::default());
    let mut worst_lin: f64 = 0.0;
    for _ in 0..1000 {
        let hn = rng.gen_range(-100.0..100.0);
        let h0 = hn + rng.gen_range(0.0..50.0);
        let f = 10f64.powf(rng.gen_range(-6.0..3.0));
        let (h, _) = solve_implicit(h0, hn, f, &linear).ok_or("n=1 did not converge")?;
        let closed = (h0 + f * hn) / (1.0 + f);
        worst_lin = worst_lin.max((h - closed).abs());
    }
    ensure(worst_lin <= NEWTON_LINEAR_TOL, || format!("n=1 error {worst_lin:e}"))?;

    let quad = NewtonCoeffs::<f64>::new(&SimParams {
        n_exp: 2.0,
        ..SimParams::default()
    });
    let mut worst_quad: f64 = 0.0;
    for _ in 0..100 {
        let hn = rng.gen_range(-100.0..100.0);
        let h0 = hn + rng.gen_range(0.0..50.0);
        let f = 10f64.powf(rng.gen_range(-6.0..3.0));
        let (h, _) = solve_implicit(h0, hn, f, &quad).ok_or("n=2 did not converge")?;
        worst_quad = worst_quad.max((h - bisect(h0, hn, f, 2.0)).abs());
    }
    ensure(worst_quad <= NEWTON_QUADRATIC_TOL, || format!("n=2 error {worst_quad:e}"))?;
    Ok(format!("max error n=1 {worst_lin:.1e}, n=2 {worst_quad:.1e}"))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn steady_state_concavity() -> Outcome {
    let params = SimParams::default();
    let terrain = generate_terrain(200, 200, 42).unwrap();
    let mut sim = Simulation::new(
        terrain,
        SimulationOptions {
            params: params.clone(),
            ..SimulationOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let threshold = STEADY_FRACTION * params.uplift * params.dt;
    let mut steps = 0;
    let mut change = f64::INFINITY;
    while steps < STEADY_CAP && change >= threshold {
        let before = sim.elevation().clone();
        sim.step().map_err(|e| e.to_string())?;
        change = before
            .iter()
            .zip(sim.elevation().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        steps += 1;
    }
    let elev = sim.elevation();
    let grid = sim.grid();
    let g = build_flow_graph(grid, elev);
    let q = generate_queue(&g).map_err(|e| e.to_string())?;
    let a = accumulate(&q, &g, SourceWeights::Uniform(grid.cell_area()), grid.cell_area());
    let points: Vec<(f64, f64)> = (0..elev.len())
        .filter(|&c| !grid.is_boundary(c) && a.values[c] > CONCAVITY_MIN_AREA * grid.cell_area())
        .filter_map(|c| {
            let r = g.receiver(c)?;
            let s = (elev[c] - elev[r]) / g.receiver_distance(c);
            (s > 0.0).then(|| (a.values[c].ln(), s.ln()))
        })
        .collect();
    ensure(points.len() >= 10, || format!("only {} channel cells", points.len()))?;
    let slope = least_squares_slope(&points);
    let detail = format!(
        "slope {slope:.4} over {} cells after {steps} steps (last change {change:.2e})",
        points.len()
    );
    ensure((slope - CONCAVITY_TARGET).abs() <= CONCAVITY_TOL, || detail.clone())?;
    Ok(detail)
}

/// Lowest surface no lower than the input from which every interior cell
/// reaches the boundary without climbing, by relaxation to a fixpoint.
fn fill_fixpoint(grid: &Grid, elev: &[f64]) -> Vec<f64> {
    let n = elev.len();
    let mut w: Vec<f64> = (0..n)
        .map(|c| if grid.is_boundary(c) { elev[c] } else { f64::INFINITY })
        .collect();
    loop {
        let mut changed = false;
        for c in (0..n).filter(|&c| !grid.is_boundary(c)) {
            let mut lowest = f64::INFINITY;
            grid.for_each_neighbor(c, |nb, _| lowest = lowest.min(w[nb]));
            let v = elev[c].max(lowest);
            if v < w[c] {
                w[c] = v;
                changed = true;
            }
        }
        if !changed {
            return w;
        }
    }
}

fn priority_flood_drainage() -> Outcome {
    for seed in 0..20u64 {
        let r = generate_terrain(100, 100, 500 + seed).unwrap();
        let grid = Grid::for_raster(&r, Neighborhood::eight()).unwrap();
        let mut eps = r.clone();
        priority_flood_fill(&grid, &mut eps, &FillOptions::epsilon());
        let sinks = count_interior_sinks(&grid, &compute_receivers(&grid, &eps));
        ensure(sinks == 0, || format!("seed {seed}: {sinks} interior sinks after epsilon fill"))?;
        let mut exact = r.clone();
        priority_flood_fill(&grid, &mut exact, &FillOptions::exact());
        let oracle = fill_fixpoint(&grid, &r);
        if let Some(c) = (0..r.len()).find(|&c| exact[c].to_bits() != oracle[c].to_bits()) {
            return Err(format!("seed {seed}: cell {c} filled to {} vs oracle {}", exact[c], oracle[c]));
        }
    }
    Ok("20 rasters".into())
}

fn time_run(kind: StrategyKind, workers: usize) -> Result<Duration, String> {
    let cfg = parse_config("width=1000 height=1000 seed=42 timesteps=20").unwrap();
    let start = Instant::now();
    run_simulation(&cfg, Strategy::new(kind, workers)).map_err(|e| e.to_string())?;
    Ok(start.elapsed())
}

fn scaling_sanity() -> Outcome {
    // interleaved, best of two each, so neither side pays for cold allocations
    let (mut serial, mut parallel) = (Duration::MAX, Duration::MAX);
    for _ in 0..2 {
        serial = serial.min(time_run(StrategyKind::RbSerial, 1)?);
        parallel = parallel.min(time_run(StrategyKind::RbParAll, 8)?);
    }
    let speedup = serial.as_secs_f64() / parallel.as_secs_f64();
    let detail = format!(
        "rb_serial {:.2}s, rb_par_all x8 {:.2}s, speedup {speedup:.3}x on {} hardware threads",
        serial.as_secs_f64(),
        parallel.as_secs_f64(),
        std::thread::available_parallelism().map_or(1, |n| n.get())
    );
    ensure(speedup > 1.0, || detail.clone())?;
    Ok(detail)
}

fn mfd_ordering() -> Outcome {
    for seed in 0..20u64 {
        let r = generate_terrain(50, 50, 900 + seed).unwrap();
        let grid = Grid::for_raster(&r, Neighborhood::eight()).unwrap();
        let mfd = compute_mfd(&grid, &r, 1.1);
        let plan = generate_mfd_order(&mfd).map_err(|e| e.to_string())?;
        let level = plan.level_of_cells(r.len());
        for c in 0..r.len() {
            ensure(level[c] != usize::MAX, || format!("seed {seed}: cell {c} unordered"))?;
            if let Some(&worst) = mfd.receivers(c).iter().max_by_key(|&&rc| level[rc]) {
                ensure(level[c] > level[worst], || {
                    format!("seed {seed}: cell {c} level {} <= receiver {worst} level {}", level[c], level[worst])
                })?;
            }
        }

        let d8 = build_flow_graph(&grid, &r);
        let single = MfdFlowGraph::from_single(&d8);
        let single_order = generate_mfd_order(&single).map_err(|e| e.to_string())?;
        let a_mfd = accumulate_mfd(&single_order, &single, SourceWeights::Uniform(1.0), 1.0);
        let a_d8 = accumulate(
            &generate_queue(&d8).map_err(|e| e.to_string())?,
            &d8,
            SourceWeights::Uniform(1.0),
            1.0,
        );
        for c in 0..r.len() {
            let (x, y) = (a_mfd.values[c], a_d8.values[c]);
            ensure((x - y).abs() <= MFD_REL_TOL * y.abs(), || format!("seed {seed}: cell {c} {x} vs {y}"))?;
        }
    }
    Ok("20 rasters".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 table 1 oracle", Duration::from_secs(1), table_1_oracle),
        ("2 cross-strategy identity", Duration::from_secs(60), cross_strategy_identity),
        ("3 mass conservation", Duration::from_secs(5), mass_conservation),
        ("4 newton solver", Duration::from_secs(5), newton_solver),
        ("5 steady-state concavity", Duration::from_secs(300), steady_state_concavity),
        ("6 priority-flood drainage", Duration::from_secs(10), priority_flood_drainage),
        ("7 scaling sanity", Duration::from_secs(600), scaling_sanity),
        ("8 mfd ordering", Duration::from_secs(10), mfd_ordering),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = outcome.and_then(|d| {
            if took <= budget {
                Ok(d)
            } else {
                Err(format!("{d}; exceeded {}s budget", budget.as_secs()))
            }
        });
        match outcome {
            Ok(d) => println!("PASS criterion {name} ({:.2}s): {d}", took.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name} ({:.2}s): {d}", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
