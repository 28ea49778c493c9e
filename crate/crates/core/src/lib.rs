//! Landscape evolution on raster grids with the implicit stream power law.
//!
//! A timestep computes D8 receivers and donors, orders the cells so that
//! every receiver precedes its donors (breadth-first level sets or
//! depth-first source trees), accumulates drainage area downstream-last,
//! applies uplift and solves the erosion equation cell by cell along flow
//! paths. [`scheduler`] runs that pipeline under several serial and
//! parallel strategies that all produce bit-identical elevations.
//!
//! ```
//! use lem::scheduler::{run_simulation, Strategy, StrategyKind};
//! use lem::terrain_io::parse_config;
//!
//! let cfg = parse_config("width=20 height=20 timesteps=3 seed=1").unwrap();
//! let a = run_simulation(&cfg, Strategy::serial(StrategyKind::BwSerial)).unwrap();
//! let b = run_simulation(&cfg, Strategy::new(StrategyKind::RbPrivateQueues, 4)).unwrap();
//! assert_eq!(a.elevation, b.elevation);
//! ```

pub mod accumulation;
pub mod cli;
pub mod depressions;
pub mod erosion;
pub mod error;
pub mod fixtures;
pub mod flow_graph;
pub mod grid;
pub mod scheduler;
mod shared;
pub mod terrain_io;
pub mod timing;

pub use error::{ConfigError, LemError, RasterIoError};
pub use grid::{Connectivity, Elevation, Grid, Neighborhood, Raster, Topology};
pub use scheduler::{run_simulation, Simulation, Strategy, StrategyKind};
pub use terrain_io::RunConfig;
