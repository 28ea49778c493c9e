use crate::error::LemError;
use crate::grid::Raster;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function (Steele, Lea & Flood, 2014).
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` for cell `i`: the `i+1`-th SplitMix64 state
/// after `seed`, mixed, top 53 bits scaled by `2^-53`.
///
/// Counter-based, so any cell can be drawn independently of the others and
/// the result does not depend on platform or traversal order.
#[inline]
pub fn uniform_at(seed: u64, i: u64) -> f64 {
    let state = seed.wrapping_add(i.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    (splitmix64(state) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Raster of i.i.d. uniform `[0, 1)` elevations.
pub fn generate_terrain(width: usize, height: usize, seed: u64) -> Result<Raster<f64>, LemError> {
    let mut r = Raster::filled(width, height, 0.0)?;
    for (i, v) in r.iter_mut().enumerate() {
        *v = uniform_at(seed, i as u64);
    }
    Ok(r)
}
