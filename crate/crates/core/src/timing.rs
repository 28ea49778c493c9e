//! Per-phase wall-clock accounting.

use std::ops::AddAssign;
use std::time::{Duration, Instant};

use serde::Serialize;

/// Pipeline phases of one timestep, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Fill,
    Receivers,
    Donors,
    Order,
    Accumulation,
    Uplift,
    Erosion,
    /// Time spent waiting at barriers that no single phase owns.
    Sync,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::Fill,
        Phase::Receivers,
        Phase::Donors,
        Phase::Order,
        Phase::Accumulation,
        Phase::Uplift,
        Phase::Erosion,
        Phase::Sync,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Fill => "fill",
            Phase::Receivers => "receivers",
            Phase::Donors => "donors",
            Phase::Order => "order",
            Phase::Accumulation => "accumulation",
            Phase::Uplift => "uplift",
            Phase::Erosion => "erosion",
            Phase::Sync => "sync",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    durations: [Duration; 8],
}

impl PhaseTimings {
    pub fn get(&self, phase: Phase) -> Duration {
        self.durations[phase.slot()]
    }

    pub fn add(&mut self, phase: Phase, d: Duration) {
        self.durations[phase.slot()] += d;
    }

    /// Runs `f` and charges its wall time to `phase`.
    pub fn time<R>(&mut self, phase: Phase, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.add(phase, t.elapsed());
        r
    }

    pub fn total(&self) -> Duration {
        self.durations.iter().sum()
    }

    /// Element-wise maximum; merges per-worker timings of a parallel region.
    pub fn max(&self, other: &Self) -> Self {
        let mut out = *self;
        for (a, b) in out.durations.iter_mut().zip(&other.durations) {
            *a = (*a).max(*b);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phase, Duration)> + '_ {
        Phase::ALL.iter().map(|&p| (p, self.get(p)))
    }
}

impl AddAssign<&PhaseTimings> for PhaseTimings {
    fn add_assign(&mut self, rhs: &PhaseTimings) {
        for (a, b) in self.durations.iter_mut().zip(&rhs.durations) {
            *a += *b;
        }
    }
}
