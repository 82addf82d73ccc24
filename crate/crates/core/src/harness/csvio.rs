//! CSV emission with metadata comment lines, and the trajectory JSON shape.
//!
//! Metadata (config hash, variant, wall time) travels in `#`-prefixed
//! comment lines so the data rows themselves stay byte-reproducible across
//! reruns of the same config and seed.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mdp::{EpisodeLog, SlotRecord};
use crate::world::EnvironmentMap;

/// Write a CSV file: comment lines, a header row, then data rows.
pub fn write_csv(
    path: &Path,
    comments: &[(&str, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    for (k, v) in comments {
        writeln!(file, "# {k}={v}")?;
    }
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Parse a CSV produced by [`write_csv`], returning (comments, header,
/// rows). Used by tests and the plotting CLI.
pub fn read_csv_skipping_comments(
    text: &str,
) -> (Vec<(String, String)>, Vec<String>, Vec<Vec<String>>) {
    let mut comments = Vec::new();
    let mut data_lines = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                comments.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        data_lines.push_str(line);
        data_lines.push('\n');
    }
    let mut reader = csv::Reader::from_reader(data_lines.as_bytes());
    let header = reader
        .headers()
        .map(|h| h.iter().map(str::to_string).collect())
        .unwrap_or_default();
    let rows = reader
        .records()
        .filter_map(Result::ok)
        .map(|r| r.iter().map(str::to_string).collect())
        .collect();
    (comments, header, rows)
}

/// Everything a trajectory plot needs, serialized per evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub env: EnvironmentMap,
    pub schedule: Vec<usize>,
    pub start: [f64; 3],
    pub slots: Vec<SlotRecord>,
    pub t_f: Option<usize>,
    pub delta_s: f64,
    pub max_flight_alt: f64,
}

impl TrajectoryLog {
    pub fn from_episode(
        env: &EnvironmentMap,
        schedule: &[usize],
        start: [f64; 3],
        log: &EpisodeLog,
        delta_s: f64,
        max_flight_alt: f64,
    ) -> Self {
        Self {
            env: env.clone(),
            schedule: schedule.to_vec(),
            start,
            slots: log.slots.clone(),
            t_f: log.t_f,
            delta_s,
            max_flight_alt,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
