//! Priority-Flood depression filling.
//!
//! Cells are expanded lowest-first from the boundary. A cell first reached
//! from a higher spill level is raised to that level (exact mode) or to just
//! above it (epsilon mode), so every cell ends up with a non-ascending
//! (respectively strictly descending) path to the boundary.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use num_traits::NumCast;

use crate::grid::{Elevation, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    Off,
    Exact,
    EpsilonAscending,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FillOptions {
    pub mode: FillMode,
    /// Increment used by `EpsilonAscending`; `None` picks
    /// [`default_epsilon_increment`] for the raster being filled.
    pub epsilon_increment: Option<f64>,
}

impl FillOptions {
    pub const OFF: Self = Self {
        mode: FillMode::Off,
        epsilon_increment: None,
    };

    pub fn exact() -> Self {
        Self {
            mode: FillMode::Exact,
            epsilon_increment: None,
        }
    }

    pub fn epsilon() -> Self {
        Self {
            mode: FillMode::EpsilonAscending,
            epsilon_increment: None,
        }
    }
}

impl Default for FillOptions {
    fn default() -> Self {
        Self::OFF
    }
}

/// Relative size of the default flat-resolution increment.
pub const DEFAULT_EPSILON_RELATIVE: f64 = 1e-8;

/// `1e-8` of the larger of the elevation range and the largest magnitude.
///
/// Each raised cell is additionally bumped to the next representable value
/// when the increment is lost to rounding.
pub fn default_epsilon_increment<T: Elevation>(elev: &[T]) -> f64 {
    let (lo, hi) = elev.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let v = v.to_f64().unwrap_or(0.0);
        (lo.min(v), hi.max(v))
    });
    let scale = (hi - lo).max(hi.abs()).max(lo.abs());
    if scale > 0.0 && scale.is_finite() {
        scale * DEFAULT_EPSILON_RELATIVE
    } else {
        DEFAULT_EPSILON_RELATIVE
    }
}

#[derive(Clone, Copy)]
struct Entry<T> {
    h: T,
    c: usize,
}

impl<T: Elevation> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Elevation> Eq for Entry<T> {}

impl<T: Elevation> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Elevation> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = self.h.to_f64().unwrap_or(f64::NAN);
        let b = other.h.to_f64().unwrap_or(f64::NAN);
        a.total_cmp(&b).then(self.c.cmp(&other.c))
    }
}

/// Fills depressions in place. Boundary cells never change.
pub fn priority_flood_fill<G: Topology, T: Elevation>(topo: &G, elev: &mut [T], opts: &FillOptions) {
    if opts.mode == FillMode::Off {
        return;
    }
    let eps: T = match opts.mode {
        FillMode::EpsilonAscending => {
            let e = opts
                .epsilon_increment
                .unwrap_or_else(|| default_epsilon_increment(elev));
            <T as NumCast>::from(e).unwrap_or_else(T::min_positive_value)
        }
        _ => T::zero(),
    };
    let n = topo.num_cells();
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    for c in (0..n).filter(|&c| topo.is_boundary(c)) {
        closed[c] = true;
        open.push(Reverse(Entry { h: elev[c], c }));
    }
    while let Some(Reverse(Entry { c, .. })) = open.pop() {
        let hc = elev[c];
        topo.for_each_neighbor(c, |nb, _| {
            if closed[nb] {
                return;
            }
            closed[nb] = true;
            match opts.mode {
                FillMode::Exact if elev[nb] < hc => elev[nb] = hc,
                FillMode::EpsilonAscending if elev[nb] <= hc => {
                    let raised = hc + eps;
                    elev[nb] = if raised > hc { raised } else { hc.next_up() };
                }
                _ => {}
            }
            open.push(Reverse(Entry { h: elev[nb], c: nb }));
        });
    }
}
