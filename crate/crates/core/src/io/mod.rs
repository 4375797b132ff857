//! Config files, binary snapshots and CSV tables.

pub mod config;
pub mod csv;
pub mod snapshot;

pub use config::{load_config, parse_config, InitialSpec, RawConfig, RunConfig};
pub use csv::Table;
pub use snapshot::{read_snapshot, read_snapshot_on, write_snapshot};
