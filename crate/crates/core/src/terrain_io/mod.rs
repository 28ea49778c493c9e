//! Seeded terrain generation, raster files and run configuration.

mod config;
mod generate;
mod raster_file;

pub use config::{parse_config, Precision, RoutingMode, RunConfig, CONFIG_KEYS};
pub use generate::{generate_terrain, splitmix64, uniform_at};
pub use raster_file::{decode_raster, encode_raster, read_raster, write_raster, write_raster_text, MAGIC};
