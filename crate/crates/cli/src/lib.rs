//! Batch experiment runner library behind the `ttq` binary: configuration,
//! checkpoints, metric CSVs, pipeline orchestration, and report export.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod report;
pub mod runner;

/// Configure the global worker pool once per process. `threads = 0` keeps
/// the default. Later calls are no-ops (the pool can only be built once).
pub fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}
