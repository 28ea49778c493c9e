//! Raster storage, cell addressing and neighbourhood enumeration.
//!
//! Cells are stored row-major: cell `(x, y)` lives at `y * width + x`.
//! Neighbour enumeration order is fixed per connectivity and is part of the
//! determinism contract: receiver tie-breaking and donor slot order both
//! follow it.

use std::fmt;

use num_traits::Float;

use crate::error::LemError;

/// Scalar type usable as an elevation.
pub trait Elevation:
    Float + Default + Send + Sync + fmt::Debug + fmt::Display + fmt::LowerExp + 'static
{
    /// Width of the type in bytes, used for reporting only.
    const BYTES: usize;

    /// Smallest representable value greater than `self`.
    fn next_up(self) -> Self;
}

impl Elevation for f32 {
    const BYTES: usize = 4;

    fn next_up(self) -> Self {
        f32::next_up(self)
    }
}

impl Elevation for f64 {
    const BYTES: usize = 8;

    fn next_up(self) -> Self {
        f64::next_up(self)
    }
}

/// Row-major 2-D scalar field.
#[derive(Clone, PartialEq)]
pub struct Raster<T = f64> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Raster<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Copy> Raster<T> {
    /// Smallest accepted edge length; anything smaller has no interior.
    pub const MIN_DIM: usize = 3;

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self, LemError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, LemError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(LemError::DataLength {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims {
            width: self.width,
            height: self.height,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[index_of(x, y, self.width)]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = index_of(x, y, self.width);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl<T> std::ops::Deref for Raster<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> std::ops::DerefMut for Raster<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), LemError> {
    if width < Raster::<f64>::MIN_DIM || height < Raster::<f64>::MIN_DIM {
        return Err(LemError::Dimensions { width, height });
    }
    if width.checked_mul(height).is_none() {
        return Err(LemError::Dimensions { width, height });
    }
    Ok(())
}

/// Raster extent without the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.width, c / self.width)
    }
}

/// Row-major cell index of column `x`, row `y`.
#[inline]
pub fn index_of(x: usize, y: usize, width: usize) -> usize {
    debug_assert!(x < width, "column {x} out of range for width {width}");
    y * width + x
}

/// True iff `c` lies on the outer ring of the raster.
#[inline]
pub fn is_perimeter(c: usize, dims: Dims) -> bool {
    let (x, y) = dims.coords(c);
    x == 0 || y == 0 || x == dims.width - 1 || y == dims.height - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    Four,
    Six,
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self, LemError> {
        match n {
            4 => Ok(Self::Four),
            6 => Ok(Self::Six),
            8 => Ok(Self::Eight),
            other => Err(LemError::Connectivity(other)),
        }
    }

    pub fn count(self) -> usize {
        match self {
            Self::Four => 4,
            Self::Six => 6,
            Self::Eight => 8,
        }
    }
}

const OFFSETS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

const OFFSETS_4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

/// Ordered stencil of neighbour offsets and their geometric distances.
///
/// 8-connectivity order: `(-1,-1) (0,-1) (1,-1) (-1,0) (1,0) (-1,1) (0,1) (1,1)`.
/// 4-connectivity keeps the same relative order restricted to the cardinals.
/// Hexagonal grids are not supported.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    connectivity: Connectivity,
    offsets: Vec<(isize, isize)>,
    distances: Vec<f64>,
}

impl Neighborhood {
    pub fn new(connectivity: Connectivity, dx: f64, dy: f64) -> Result<Self, LemError> {
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(LemError::CellSpacing { dx, dy });
        }
        let offsets: Vec<(isize, isize)> = match connectivity {
            Connectivity::Four => OFFSETS_4.to_vec(),
            Connectivity::Eight => OFFSETS_8.to_vec(),
            Connectivity::Six => return Err(LemError::Connectivity(6)),
        };
        let distances = offsets
            .iter()
            .map(|&(ox, oy)| match (ox, oy) {
                (0, _) => dy,
                (_, 0) => dx,
                _ => (dx * dx + dy * dy).sqrt(),
            })
            .collect();
        Ok(Self {
            connectivity,
            offsets,
            distances,
        })
    }

    pub fn eight() -> Self {
        Self::new(Connectivity::Eight, 1.0, 1.0).expect("unit spacing is valid")
    }

    pub fn four() -> Self {
        Self::new(Connectivity::Four, 1.0, 1.0).expect("unit spacing is valid")
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    /// Maximum number of potential donors of a cell.
    pub fn dmax(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }
}

/// In-bounds neighbours of `c` with their distances, in stencil order.
pub fn neighbors(c: usize, dims: Dims, nbh: &Neighborhood) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(nbh.dmax());
    Grid::for_each_in_bounds(dims, nbh, c, |n, d| out.push((n, d)));
    out
}

/// Graph view shared by grids and explicit fixtures.
///
/// `for_each_neighbor` must visit neighbours in a fixed order; flow routing
/// results depend on it.
pub trait Topology: Sync {
    fn num_cells(&self) -> usize;

    fn max_degree(&self) -> usize;

    /// Fixed base-level cells: never route, uplift or erode.
    fn is_boundary(&self, c: usize) -> bool;

    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, c: usize, f: F);
}

/// Regular raster topology.
#[derive(Debug, Clone)]
pub struct Grid {
    dims: Dims,
    nbh: Neighborhood,
    index_offsets: Vec<isize>,
}

impl Grid {
    pub fn new(width: usize, height: usize, nbh: Neighborhood) -> Result<Self, LemError> {
        check_dims(width, height)?;
        let index_offsets = nbh
            .offsets
            .iter()
            .map(|&(ox, oy)| oy * width as isize + ox)
            .collect();
        Ok(Self {
            dims: Dims { width, height },
            nbh,
            index_offsets,
        })
    }

    pub fn for_raster<T: Copy>(r: &Raster<T>, nbh: Neighborhood) -> Result<Self, LemError> {
        Self::new(r.width(), r.height(), nbh)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn neighborhood(&self) -> &Neighborhood {
        &self.nbh
    }

    pub fn cell_area(&self) -> f64 {
        let (dx, dy) = self.spacing();
        dx * dy
    }

    pub fn spacing(&self) -> (f64, f64) {
        let mut dx = 1.0;
        let mut dy = 1.0;
        for (&(ox, oy), &d) in self.nbh.offsets.iter().zip(&self.nbh.distances) {
            match (ox, oy) {
                (0, _) => dy = d,
                (_, 0) => dx = d,
                _ => {}
            }
        }
        (dx, dy)
    }

    fn for_each_in_bounds<F: FnMut(usize, f64)>(dims: Dims, nbh: &Neighborhood, c: usize, mut f: F) {
        let (x, y) = dims.coords(c);
        for (&(ox, oy), &d) in nbh.offsets.iter().zip(&nbh.distances) {
            let nx = x as isize + ox;
            let ny = y as isize + oy;
            if nx < 0 || ny < 0 || nx >= dims.width as isize || ny >= dims.height as isize {
                continue;
            }
            f(index_of(nx as usize, ny as usize, dims.width), d);
        }
    }
}

impl Topology for Grid {
    fn num_cells(&self) -> usize {
        self.dims.len()
    }

    fn max_degree(&self) -> usize {
        self.nbh.dmax()
    }

    #[inline]
    fn is_boundary(&self, c: usize) -> bool {
        is_perimeter(c, self.dims)
    }

    #[inline]
    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, c: usize, mut f: F) {
        if is_perimeter(c, self.dims) {
            Self::for_each_in_bounds(self.dims, &self.nbh, c, f);
        } else {
            // interior: every stencil entry is in bounds
            for (&off, &d) in self.index_offsets.iter().zip(&self.nbh.distances) {
                f((c as isize + off) as usize, d);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_of_examples() {
        assert_eq!(index_of(0, 0, 10), 0);
        assert_eq!(index_of(3, 2, 10), 23);
        assert_eq!(index_of(9, 9, 10), 99);
    }

    #[test]
    #[should_panic]
    #[cfg(debug_assertions)]
    fn index_of_out_of_range_is_checked() {
        index_of(10, 0, 10);
    }

    #[test]
    fn neighbors_center_corner_edge() {
        let dims = Dims {
            width: 3,
            height: 3,
        };
        let center = neighbors(4, dims, &Neighborhood::eight());
        let ids: Vec<usize> = center.iter().map(|p| p.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 5, 6, 7, 8]);
        assert_eq!(neighbors(0, dims, &Neighborhood::eight()).len(), 3);
        let edge = neighbors(1, dims, &Neighborhood::four());
        let ids: Vec<usize> = edge.iter().map(|p| p.0).collect();
        assert_eq!(ids, vec![0, 2, 4]);
    }

    #[test]
    fn perimeter_examples() {
        let dims = Dims {
            width: 10,
            height: 10,
        };
        assert!(is_perimeter(index_of(0, 5, 10), dims));
        assert!(!is_perimeter(index_of(5, 5, 10), dims));
        assert!(is_perimeter(index_of(9, 0, 10), dims));
    }

    #[test]
    fn perimeter_count() {
        for (w, h) in [(3, 3), (10, 7), (17, 4)] {
            let dims = Dims {
                width: w,
                height: h,
            };
            let count = (0..w * h).filter(|&c| is_perimeter(c, dims)).count();
            assert_eq!(count, 2 * w + 2 * h - 4);
        }
    }

    #[test]
    fn distances_follow_spacing() {
        let nbh = Neighborhood::new(Connectivity::Eight, 2.0, 3.0).unwrap();
        assert_eq!(nbh.distances()[0], 13f64.sqrt());
        assert_eq!(nbh.distances()[1], 3.0);
        assert_eq!(nbh.distances()[3], 2.0);
        let grid = Grid::new(4, 4, nbh).unwrap();
        assert_eq!(grid.spacing(), (2.0, 3.0));
        assert_eq!(grid.cell_area(), 6.0);
    }

    #[test]
    fn hex_is_rejected() {
        assert!(matches!(
            Neighborhood::new(Connectivity::Six, 1.0, 1.0),
            Err(LemError::Connectivity(6))
        ));
    }

    #[test]
    fn tiny_rasters_are_rejected() {
        assert!(Raster::filled(2, 5, 0.0).is_err());
        assert!(Raster::from_vec(3, 3, vec![0.0; 8]).is_err());
    }

    #[test]
    fn interior_fast_path_matches_bounds_checked_path() {
        let grid = Grid::new(6, 5, Neighborhood::eight()).unwrap();
        for c in 0..grid.num_cells() {
            let mut fast = Vec::new();
            grid.for_each_neighbor(c, |n, d| fast.push((n, d)));
            assert_eq!(fast, neighbors(c, grid.dims(), grid.neighborhood()));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn neighbors_round_trip(w in 3usize..20, h in 3usize..20, seed in 0usize..10_000, eight in any::<bool>()) {
                let dims = Dims { width: w, height: h };
                let nbh = if eight { Neighborhood::eight() } else { Neighborhood::four() };
                let c = seed % dims.len();
                let (cx, cy) = dims.coords(c);
                let ns = neighbors(c, dims, &nbh);
                if !is_perimeter(c, dims) {
                    prop_assert_eq!(ns.len(), nbh.dmax());
                }
                for (n, _) in ns {
                    let (nx, ny) = dims.coords(n);
                    let off = (nx as isize - cx as isize, ny as isize - cy as isize);
                    prop_assert!(nbh.offsets().contains(&off));
                }
            }
        }
    }
}
