//! `lem run | compare | bench`.
//!
//! Exit codes: 0 success or match, 1 usage or configuration error, 2 runtime
//! error, 3 comparison mismatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::LemError;
use crate::grid::Raster;
use crate::scheduler::{run_simulation, run_simulation_with, RunOutput, Strategy, StrategyKind};
use crate::terrain_io::{write_raster, write_raster_text, RunConfig};
use crate::timing::{Phase, PhaseTimings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

/// Column names of the timing table.
pub const BENCH_COLUMNS: [&str; 8] = ["strategy", "workers", "width", "height", "steps", "phase", "seconds", "share"];

#[derive(Debug, Parser)]
#[command(name = "lem", version, about = "Landscape evolution simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write the final raster.
    Run(RunArgs),
    /// Run several strategies on the same input and check the outputs are identical.
    Compare(CompareArgs),
    /// Time every phase for each strategy and size.
    Bench(BenchArgs),
}

/// Flags mirroring the configuration keys. Applied after `--config`.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// Configuration file of `key=value` lines.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<String>,
    #[arg(long)]
    pub height: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub timesteps: Option<String>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub m_exp: Option<String>,
    #[arg(long)]
    pub n_exp: Option<String>,
    #[arg(long)]
    pub uplift: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub dx: Option<String>,
    #[arg(long)]
    pub dy: Option<String>,
    #[arg(long)]
    pub max_newton_iters: Option<String>,
    /// off, exact or epsilon.
    #[arg(long)]
    pub fill: Option<String>,
    #[arg(long)]
    pub fill_epsilon: Option<String>,
    /// 4 or 8.
    #[arg(long)]
    pub connectivity: Option<String>,
    /// d8 or mfd.
    #[arg(long)]
    pub routing: Option<String>,
    #[arg(long)]
    pub mfd_exponent: Option<String>,
    /// f32 or f64.
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long, short)]
    pub output: Option<String>,
    #[arg(long)]
    pub snapshot_interval: Option<String>,
    #[arg(long)]
    pub check_order: bool,
}

impl ConfigArgs {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let fields: [(&'static str, &Option<String>); 23] = [
            ("width", &self.width),
            ("height", &self.height),
            ("seed", &self.seed),
            ("timesteps", &self.timesteps),
            ("strategy", &self.strategy),
            ("workers", &self.workers),
            ("k", &self.k),
            ("m_exp", &self.m_exp),
            ("n_exp", &self.n_exp),
            ("uplift", &self.uplift),
            ("dt", &self.dt),
            ("epsilon", &self.epsilon),
            ("dx", &self.dx),
            ("dy", &self.dy),
            ("max_newton_iters", &self.max_newton_iters),
            ("fill", &self.fill),
            ("fill_epsilon", &self.fill_epsilon),
            ("connectivity", &self.connectivity),
            ("routing", &self.routing),
            ("mfd_exponent", &self.mfd_exponent),
            ("precision", &self.precision),
            ("output", &self.output),
            ("snapshot_interval", &self.snapshot_interval),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        for (k, v) in self.pairs() {
            cfg.set(k, v).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if self.check_order {
            cfg.check_order = true;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Also write the final raster as plain text, one row per line.
    #[arg(long, value_name = "FILE")]
    pub text_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Comma-separated `kind[:workers]` entries, or `all` for the six kinds.
    #[arg(long, value_delimiter = ',', required = true)]
    pub strategies: Vec<String>,
    /// Worker counts applied to entries without an explicit `:workers`.
    #[arg(long, value_delimiter = ',')]
    pub workers_list: Vec<usize>,
    #[arg(long, hide = true)]
    pub perturb_cell: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Comma-separated `kind[:workers]` entries, or `all`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub strategies: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub workers_list: Vec<usize>,
    /// Comma-separated sizes, `N` for N x N or `WxH`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<String>,
    /// Write the timing table here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub tsv: Option<PathBuf>,
    /// Write the full report, including per-step timings, as JSON.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] LemError),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Runtime(LemError::Config(_)) => EXIT_USAGE,
            Self::Runtime(_) => EXIT_RUNTIME,
            Self::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => cmd_run(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Bench(a) => cmd_bench(a, out).map(|_| ()),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(crate::error::RasterIoError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
    .into())
}

/// `<base>.<step>.lem`, with the step zero-padded to the width of `total`.
pub fn snapshot_path(output: &Path, step: usize, total: usize) -> PathBuf {
    let base = match output.extension() {
        Some(ext) if ext == "lem" => output.with_extension(""),
        _ => output.to_owned(),
    };
    let width = total.max(1).to_string().len();
    let mut name = base.into_os_string();
    name.push(format!(".{step:0width$}.lem"));
    PathBuf::from(name)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn write_timing_summary(out: &mut dyn Write, t: &PhaseTimings) -> std::io::Result<()> {
    let total = secs(t.total());
    writeln!(out, "{:<14}{:>12}{:>9}", "phase", "seconds", "share")?;
    for (p, d) in t.iter() {
        let share = if total > 0.0 { 100.0 * secs(d) / total } else { 0.0 };
        writeln!(out, "{:<14}{:>12.6}{:>8.1}%", p.name(), secs(d), share)?;
    }
    writeln!(out, "{:<14}{:>12.6}", "total", total)
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.cfg.resolve()?;
    let interval = cfg.snapshot_interval;
    let result = run_simulation_with(&cfg, cfg.strategy, |step, r| {
        if interval > 0 && step % interval == 0 {
            write_raster(r, &snapshot_path(&cfg.output, step, cfg.timesteps))?;
        }
        Ok(())
    })?;
    write_raster(&result.elevation, &cfg.output).map_err(LemError::from)?;
    if let Some(p) = &args.text_output {
        write_raster_text(&result.elevation, p).map_err(LemError::from)?;
    }
    (|| {
        writeln!(
            out,
            "{}x{} {} steps, strategy {}, wrote {}",
            cfg.width,
            cfg.height,
            cfg.timesteps,
            cfg.strategy,
            cfg.output.display()
        )?;
        write_timing_summary(out, &result.total_timings())
    })()
    .map_err(io_err)
}

/// Expands `kind[:workers]` entries; `all` stands for every kind. Entries
/// without explicit workers take each of `workers_list` (or `default`).
pub fn parse_strategy_list(items: &[String], workers_list: &[usize], default: usize) -> Result<Vec<Strategy>, CliError> {
    let counts: Vec<usize> = if workers_list.is_empty() {
        vec![default]
    } else {
        workers_list.to_vec()
    };
    if counts.contains(&0) {
        return Err(CliError::Usage("worker counts must be >= 1".into()));
    }
    let mut out = Vec::new();
    for item in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let (name, workers) = match item.split_once(':') {
            Some((n, w)) => {
                let w: usize = w
                    .parse()
                    .ok()
                    .filter(|&w| w >= 1)
                    .ok_or_else(|| CliError::Usage(format!("bad worker count in `{item}`")))?;
                (n, Some(w))
            }
            None => (item, None),
        };
        let kinds: Vec<StrategyKind> = if name == "all" {
            StrategyKind::ALL.to_vec()
        } else {
            vec![name.parse().map_err(|e: crate::scheduler::UnknownStrategy| CliError::Usage(e.to_string()))?]
        };
        for kind in kinds {
            match workers {
                Some(w) => out.push(Strategy::new(kind, w)),
                None if kind.is_serial() => out.push(Strategy::serial(kind)),
                None => out.extend(counts.iter().map(|&w| Strategy::new(kind, w))),
            }
        }
    }
    Ok(out)
}

/// First cell whose bit pattern differs.
pub fn first_difference(a: &Raster<f64>, b: &Raster<f64>) -> Option<usize> {
    if a.dims() != b.dims() {
        return Some(0);
    }
    a.iter().zip(b.iter()).position(|(x, y)| x.to_bits() != y.to_bits())
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.cfg.resolve()?;
    let strategies = parse_strategy_list(&args.strategies, &args.workers_list, cfg.strategy.workers)?;
    if strategies.len() < 2 {
        return Err(CliError::Usage("compare needs at least two strategies".into()));
    }
    let mut reference: Option<(Strategy, Raster<f64>)> = None;
    for (i, &s) in strategies.iter().enumerate() {
        let mut r = run_simulation(&cfg, s)?.elevation;
        if let (Some(c), 1) = (args.perturb_cell, i) {
            if c >= r.len() {
                return Err(CliError::Usage(format!("perturbed cell {c} is outside the raster")));
            }
            r[c] += 1e-12;
        }
        match &reference {
            None => reference = Some((s, r)),
            Some((s0, r0)) => {
                if let Some(c) = first_difference(r0, &r) {
                    let (x, y) = r0.dims().coords(c);
                    return Err(CliError::Mismatch(format!(
                        "{s0} and {s} differ first at cell {c} (x={x}, y={y}): {:e} vs {:e}",
                        r0[c], r[c]
                    )));
                }
            }
        }
        writeln!(out, "{s}: ok").map_err(io_err)?;
    }
    writeln!(out, "{} strategies produced identical output", strategies.len()).map_err(io_err)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchEntry {
    pub strategy: StrategyKind,
    pub workers: usize,
    pub width: usize,
    pub height: usize,
    pub steps: usize,
    /// Seconds per phase for every timestep.
    pub per_step: Vec<Vec<(Phase, f64)>>,
    pub totals: Vec<(Phase, f64)>,
    pub total_seconds: f64,
    /// Cells handled by each worker in the last step (private queues only).
    pub worker_cells: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub entries: Vec<BenchEntry>,
}

fn phase_secs(t: &PhaseTimings) -> Vec<(Phase, f64)> {
    t.iter().map(|(p, d)| (p, secs(d))).collect()
}

fn bench_entry(strategy: Strategy, cfg: &RunConfig, run: &RunOutput) -> BenchEntry {
    let totals = run.total_timings();
    BenchEntry {
        strategy: strategy.kind,
        workers: strategy.effective_workers(),
        width: cfg.width,
        height: cfg.height,
        steps: cfg.timesteps,
        per_step: run.steps.iter().map(|s| phase_secs(&s.timings)).collect(),
        totals: phase_secs(&totals),
        total_seconds: secs(totals.total()),
        worker_cells: run.steps.last().map(|s| s.worker_cells.clone()).unwrap_or_default(),
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("bad size `{s}`"));
    let (w, h) = match s.split_once(['x', 'X']) {
        Some((w, h)) => (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?),
        None => {
            let n = s.parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if w < 3 || h < 3 {
        return Err(bad());
    }
    Ok((w, h))
}

pub fn write_bench_tsv(report: &BenchReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{}", BENCH_COLUMNS.join("\t"))?;
    for e in &report.entries {
        for &(phase, s) in &e.totals {
            let share = if e.total_seconds > 0.0 { s / e.total_seconds } else { 0.0 };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.9}\t{:.6}",
                e.strategy,
                e.workers,
                e.width,
                e.height,
                e.steps,
                phase.name(),
                s,
                share
            )?;
        }
    }
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<BenchReport, CliError> {
    let base = args.cfg.resolve()?;
    let strategies = parse_strategy_list(&args.strategies, &args.workers_list, base.strategy.workers)?;
    let sizes = args.sizes.iter().map(|s| parse_size(s)).collect::<Result<Vec<_>, _>>()?;
    let mut report = BenchReport {
        seed: base.seed,
        entries: Vec::new(),
    };
    for &(width, height) in &sizes {
        let cfg = RunConfig {
            width,
            height,
            ..base.clone()
        };
        for &s in &strategies {
            let run = run_simulation(&cfg, s)?;
            report.entries.push(bench_entry(s, &cfg, &run));
        }
    }
    match &args.tsv {
        Some(p) => {
            let mut f = fs::File::create(p).map_err(|e| io_path_err(p, e))?;
            write_bench_tsv(&report, &mut f).map_err(|e| io_path_err(p, e))?;
        }
        None => write_bench_tsv(&report, out).map_err(io_err)?,
    }
    if let Some(p) = &args.json {
        let text = serde_json::to_string_pretty(&report).expect("report serialises");
        fs::write(p, text).map_err(|e| io_path_err(p, e))?;
    }
    Ok(report)
}

fn io_path_err(p: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(
        crate::error::RasterIoError::Io {
            path: p.to_owned(),
            source: e,
        }
        .into(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_names_are_padded() {
        assert_eq!(snapshot_path(Path::new("out.lem"), 7, 120), PathBuf::from("out.007.lem"));
        assert_eq!(snapshot_path(Path::new("dir/run"), 12, 9), PathBuf::from("dir/run.12.lem"));
    }

    #[test]
    fn strategy_list_expansion() {
        let items = vec!["all".to_string()];
        let s = parse_strategy_list(&items, &[1, 2], 1).unwrap();
        // two serial kinds once each, four parallel kinds twice each
        assert_eq!(s.len(), 2 + 4 * 2);
        let s = parse_strategy_list(&["rb+pq:8".into()], &[], 1).unwrap();
        assert_eq!(s, vec![Strategy::new(StrategyKind::RbPrivateQueues, 8)]);
        assert!(parse_strategy_list(&["nope".into()], &[], 1).is_err());
        assert!(parse_strategy_list(&["rb_par_all:0".into()], &[], 1).is_err());
    }

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_size("100").unwrap(), (100, 100));
        assert_eq!(parse_size("30x20").unwrap(), (30, 20));
        assert!(parse_size("2").is_err());
    }
}
