//! Configuration, data ingestion and result files.

mod config;
mod output;
mod series;

pub use config::{
    ConfigError, DataBlock, ExperimentBlock, Format, ModelBlock, OutputBlock, RunConfig, SamplerBlock, SyntheticBlock,
};
pub use output::{
    create_dir, fmt_f64, read_chain_csv, sha256_file, write_bands_csv, write_chain_csv, write_grid_csv, write_json,
    write_manifest, write_outputs, write_ranks_csv, write_trajectory_csv, Manifest, OutputError,
};
pub use series::{load_series, write_series, HospitalizationSeries, SeriesError, SeriesQuery};

#[cfg(test)]
mod tests;
