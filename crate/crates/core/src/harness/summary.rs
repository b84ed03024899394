use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::commands::mean_std;
use super::log::{read_run_log, RunLogRow};
use super::run::{RunManifest, MANIFEST};
use crate::error::{config_err, Error, Result};

/// Episodes in the final window of the aggregate.
pub const FINAL_WINDOW: usize = 50;

/// Across-seed statistics for one episode index. Standard deviations are
/// population (divide by the number of seeds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub env_return_mean: f64,
    pub env_return_std: f64,
    pub shaped_return_mean: f64,
    pub shaped_return_std: f64,
    pub final_distance_mean: f64,
    pub final_distance_std: f64,
    pub reached_rate: f64,
    pub steps_mean: f64,
    /// Environment steps up to and including this episode, averaged over seeds.
    pub cumulative_steps_mean: f64,
}

/// Per-seed means over the last `window` episodes, then their across-seed
/// mean and population std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalWindow {
    pub window: usize,
    pub per_seed_env_return: Vec<f64>,
    pub per_seed_final_distance: Vec<f64>,
    pub env_return_mean: f64,
    pub env_return_std: f64,
    pub final_distance_mean: f64,
    pub final_distance_std: f64,
    pub reached_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    pub dir: PathBuf,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub per_episode: Vec<EpisodeStats>,
    pub final_window: FinalWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variants: Vec<VariantSummary>,
}

/// Completed seeds' logs of one run directory, in seed order.
fn load_dir(dir: &Path) -> Result<(String, Vec<Vec<RunLogRow>>)> {
    let manifest_path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::format(0, format!("{}: {e}", manifest_path.display())))?;
    let mut logs = Vec::new();
    let mut seeds: Vec<_> = manifest.seeds.iter().filter_map(|s| s.csv.as_ref().map(|c| (s.seed, c))).collect();
    seeds.sort();
    for (_, csv) in seeds {
        logs.push(read_run_log(&dir.join(csv))?);
    }
    if logs.is_empty() {
        return Err(config_err!("{}: no completed seeds to summarize", dir.display()));
    }
    Ok((manifest.name, logs))
}

/// Aggregates the seeds of one variant, aligned by episode index.
pub fn summarize_logs(name: &str, dir: &Path, logs: &[Vec<RunLogRow>], window: usize) -> Result<VariantSummary> {
    let episodes = logs[0].len();
    if logs.iter().any(|l| l.len() != episodes) {
        let counts: Vec<String> = logs.iter().map(|l| format!("seed {} has {} episodes", l.first().map_or(0, |r| r.seed), l.len())).collect();
        return Err(config_err!("{name}: episode counts differ across seeds ({})", counts.join(", ")));
    }
    if episodes == 0 {
        return Err(config_err!("{name}: run logs are empty"));
    }
    let n = logs.len() as f64;
    let column = |e: usize, f: &dyn Fn(&RunLogRow) -> f64| mean_std(&logs.iter().map(|l| f(&l[e])).collect::<Vec<_>>());
    let mut cumulative = vec![0.0; logs.len()];
    let per_episode = (0..episodes)
        .map(|e| {
            for (c, l) in cumulative.iter_mut().zip(logs) {
                *c += l[e].steps as f64;
            }
            let (env_return_mean, env_return_std) = column(e, &|r| r.env_return);
            let (shaped_return_mean, shaped_return_std) = column(e, &|r| r.shaped_return);
            let (final_distance_mean, final_distance_std) = column(e, &|r| r.final_distance);
            EpisodeStats {
                episode: e,
                env_return_mean,
                env_return_std,
                shaped_return_mean,
                shaped_return_std,
                final_distance_mean,
                final_distance_std,
                reached_rate: column(e, &|r| r.reached as u8 as f64).0,
                steps_mean: column(e, &|r| r.steps as f64).0,
                cumulative_steps_mean: cumulative.iter().sum::<f64>() / n,
            }
        })
        .collect();

    let w = window.clamp(1, episodes);
    let tail = |l: &Vec<RunLogRow>, f: &dyn Fn(&RunLogRow) -> f64| l[episodes - w..].iter().map(f).sum::<f64>() / w as f64;
    let per_seed_env_return: Vec<f64> = logs.iter().map(|l| tail(l, &|r| r.env_return)).collect();
    let per_seed_final_distance: Vec<f64> = logs.iter().map(|l| tail(l, &|r| r.final_distance)).collect();
    let (env_return_mean, env_return_std) = mean_std(&per_seed_env_return);
    let (final_distance_mean, final_distance_std) = mean_std(&per_seed_final_distance);
    let reached_rate = logs.iter().map(|l| tail(l, &|r| r.reached as u8 as f64)).sum::<f64>() / n;
    Ok(VariantSummary {
        name: name.to_string(),
        dir: dir.to_path_buf(),
        seeds: logs.iter().map(|l| l[0].seed).collect(),
        episodes,
        per_episode,
        final_window: FinalWindow {
            window: w,
            per_seed_env_return,
            per_seed_final_distance,
            env_return_mean,
            env_return_std,
            final_distance_mean,
            final_distance_std,
            reached_rate,
        },
    })
}

/// One variant per run directory (named by its manifest), final window of
/// `window` episodes (clamped to the run length).
pub fn summarize(dirs: &[PathBuf], window: usize) -> Result<Summary> {
    if dirs.is_empty() {
        return Err(config_err!("summarize needs at least one run directory"));
    }
    let variants = dirs
        .iter()
        .map(|d| {
            let (name, logs) = load_dir(d)?;
            summarize_logs(&name, d, &logs, window)
        })
        .collect::<Result<_>>()?;
    Ok(Summary { variants })
}
