//! Command-line front end for `chebmap-core`: region files, map files,
//! SVG and CSV output, and the `project`, `optimize`, `net` and `compare`
//! subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod map_file;
pub mod region_file;
pub mod svg;

pub use config::{CliError, Command, RunConfig};
pub use map_file::{decode, encode, MapFile, MapFileError};
pub use region_file::{parse_region, read_region, serialize_region, RegionFileError};
