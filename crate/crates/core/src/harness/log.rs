use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CSV_HEADER: &str = "seed,episode,steps,env_return,shaped_return,final_distance,reached,collided,wall_ms";

/// One episode of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLogRow {
    pub seed: u64,
    /// 0-based, consecutive within a seed.
    pub episode: usize,
    pub steps: usize,
    /// Sum of the environment's hand-crafted dense reward, whatever the
    /// training reward was.
    pub env_return: f64,
    /// Sum of the reward the agent was trained on.
    pub shaped_return: f64,
    pub final_distance: f64,
    pub reached: bool,
    pub collided: bool,
    /// Wall-clock duration; 0 when timing is off.
    pub wall_ms: u64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    Error::format(offset, format!("{}: {e}", path.display()))
}

/// Writes the rows with the fixed header, atomically.
pub fn write_run_log(path: &Path, rows: &[RunLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(',')).map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Reads a run log, checking the header and that episodes count up from 0.
pub fn read_run_log(path: &Path) -> Result<Vec<RunLogRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::format(0, format!("{}: header {header:?} is not {CSV_HEADER:?}", path.display())));
    }
    let mut rows: Vec<RunLogRow> = Vec::new();
    for rec in r.deserialize() {
        let row: RunLogRow = rec.map_err(|e| csv_err(path, e))?;
        if row.episode != rows.len() || rows.first().is_some_and(|f| f.seed != row.seed) {
            return Err(Error::format(0, format!("{}: row {} is seed {} episode {}, out of sequence", path.display(), rows.len(), row.seed, row.episode)));
        }
        rows.push(row);
    }
    Ok(rows)
}
