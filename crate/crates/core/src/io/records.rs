use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dagger::{Dataset, Demonstration, EpisodeRecord, Pair, Provenance};
use crate::env::ExpertMode;
use crate::{Error, Result};

/// One dataset line: a single pair with its demonstration metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    episode: u64,
    provenance: Provenance,
    mode: Option<ExpertMode>,
    step: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
}

pub fn dataset_to_string(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for d in &dataset.demos {
        for (step, p) in d.pairs.iter().enumerate() {
            let line = PairLine {
                episode: d.episode,
                provenance: d.provenance,
                mode: d.mode,
                step,
                obs: p.obs.clone(),
                actions: p.actions.clone(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_string(dataset)?)?;
    Ok(())
}

/// Reads a line-delimited dataset. Consecutive lines with step 0 start a
/// new demonstration.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut ds = Dataset::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairLine = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        let pair = Pair {
            obs: rec.obs,
            actions: rec.actions,
        };
        match ds.demos.last_mut() {
            Some(d) if rec.step > 0 => {
                if d.episode != rec.episode || d.provenance != rec.provenance || d.pairs.len() != rec.step {
                    return Err(Error::format(
                        path,
                        format!("line {}: pair out of sequence for episode {}", i + 1, rec.episode),
                    ));
                }
                d.pairs.push(pair);
            }
            _ if rec.step == 0 => ds.push(Demonstration {
                episode: rec.episode,
                provenance: rec.provenance,
                mode: rec.mode,
                pairs: vec![pair],
            }),
            _ => {
                return Err(Error::format(path, format!("line {}: demonstration does not start at step 0", i + 1)))
            }
        }
    }
    Ok(ds)
}

/// Every step of every episode, one line each.
pub fn write_trajectories(episodes: &[EpisodeRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in episodes {
        for s in &e.trajectory {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes rows as a comma-separated table with a header from field names.
pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
