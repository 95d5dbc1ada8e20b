//! Run configuration, on-disk formats and run manifests.

mod config;
mod files;
mod manifest;

pub use config::{parse_config, parse_config_str, DetuningSpec, OutputConfig, PulseConfig, RunConfig, SweepConfig};
pub use files::{
    grid_from_axis, read_array, read_spectrum_csv, read_table_csv, write_array, write_spectrum_csv, write_table_csv,
    ArrayData, ArrayFile, ArrayHeader, Axis, Table,
};
pub use manifest::{write_manifest, Manifest};
