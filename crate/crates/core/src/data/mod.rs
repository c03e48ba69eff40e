//! Synthetic crop seasons, CSV ingestion, windowing, normalisation and the
//! source/target dataset split.
//!
//! Feature order everywhere is (LAI, Tmax, Tmin, humidity, irradiation).

mod csv_io;
mod dataset;
mod normalize;
mod simulator;
mod window;

pub use csv_io::{load_seasons_csv, write_seasons_csv, write_windows_jsonl, CSV_HEADER};
pub use dataset::{make_domain_datasets, DataConfig, Dataset, DomainData, DomainWindows};
pub use normalize::NormalizationStats;
pub use simulator::{simulate_season, simulate_seasons, CropSeason, DailyRecord, ShiftDeltas, SimulatorConfig};
pub use window::{window_season, WindowedBatch};

pub const FEATURES: usize = 5;
pub const WINDOW_LEN: usize = 11;

#[cfg(test)]
mod tests;
