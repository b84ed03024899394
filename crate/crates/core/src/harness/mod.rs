//! The experiment driver: config files, per-seed random streams, the
//! demonstrations → internal model → RL pipeline, per-episode CSV logs and
//! their aggregation.

mod commands;
mod config;
mod log;
mod run;
mod summary;

pub use commands::{demo_gen, ensure_model, eval, load_demos, train_model, DemoGenReport, EvalReport, EvalRequest};
pub use config::{AgentConfig, DemoConfig, ExperimentConfig, ModelSection};
pub use log::{read_run_log, write_run_log, RunLogRow, CSV_HEADER};
pub use run::{run_experiment, run_seed, RunManifest, SeedStatus, SeedSummary};
pub use summary::{summarize, summarize_logs, EpisodeStats, FinalWindow, Summary, VariantSummary, FINAL_WINDOW};

/// Independent random streams carved out of one master seed.
pub mod stream {
    pub const DEMOS: u64 = 1;
    pub const ENV: u64 = 2;
    pub const AGENT_INIT: u64 = 3;
    pub const EXPLORATION: u64 = 4;
    pub const REWARD: u64 = 5;
    pub const EVAL: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `stream` of run `seed`: chained splitmix64 finalizers over
/// `(master, seed, stream)`. Depends only on its own triple, so adding or
/// removing seeds never changes another run's streams.
pub fn derive_seed(master: u64, seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ seed) ^ stream)
}

/// Worker count for seed-level parallelism: `OBSREWARD_THREADS` when set to a
/// positive integer, otherwise the machine's parallelism.
pub fn worker_threads() -> usize {
    std::env::var("OBSREWARD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
