//! Pulse-by-pulse Monte Carlo of the chip, producing detector time tags.

mod pulse;
pub mod rng;
mod runner;
pub mod tags;

pub use pulse::{simulate_pulse, Emitter, PulseOutcome, PulseSimulator};
pub use runner::{
    add_dark_counts, dark_tags, run, run_into, run_single, run_to_file, RunOptions, RunPlan,
    RunStats, Sampling, Scan, ScanParameter, CHUNK_PULSES,
};
pub use tags::{
    first_unsorted, sort_tags, BinaryTagWriter, StreamMeta, TagSink, TagStream, Tee, TimeTag,
};
