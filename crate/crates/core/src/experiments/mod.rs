//! Composition of source, chain, records and receivers into parameter
//! sweeps with seeded repetitions, tables and summaries.

mod config;
mod distance;
mod purity;
mod summary;
mod sweep;

pub use config::{SourceKind, SourceSection, SweepConfig, SweepSection, SweepVariable};
pub use distance::{distance_to_eta, distance_to_eta_db, DistanceModel, DistancePoint};
pub use purity::PurityModel;
pub use summary::{find_crossings, series_curves, summarize, write_plot_csv, Advantage, Crossing, SweepSummary, REFERENCE_SERIES};
pub use sweep::{
    batch_seed, resolve_point, run_point, run_sweep, source_moments, PointFailure, PointSpec, SweepResult, SweepRow,
    CSV_HEADER,
};
