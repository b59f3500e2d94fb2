//! Record sampling, IF synthesis and demodulation, and moment estimation.

mod ifproc;
mod moments;
mod records;

pub use ifproc::{
    demodulate_records, if_round_trip, synthesize_if, ChannelScale, Quantizer, RawRecordStream, RAW_MAGIC, RAW_VERSION,
};
pub use moments::{
    estimate_moments, moments_from_sums, sample_block_sums, sample_block_sums_mapped, Averages, BlockSums,
    BlockedSums, MomentEstimate, RecordMap,
};
pub use records::{sample_records, sample_records_with, HusimiSampler, RecordBatch, SampleSpec, Units, VacuumUnits};
