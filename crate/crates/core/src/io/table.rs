//! CSV tables and ROM trajectories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rom::{RomTrajectory, RomVariant};
use crate::scalar::Real;

/// Scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header row and string records.
pub fn write_records(path: &Path, headers: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(headers)?;
    for r in rows {
        if r.len() != headers.len() {
            return Err(Error::dim(format!("row of {} fields under {} headers", r.len(), headers.len())));
        }
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a purely numeric table.
pub fn write_table(path: &Path, headers: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|&v| fmt_num(v)).collect()).collect();
    write_records(path, headers, &rows)
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("{}: row {}: '{s}' is not a number", path.display(), i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((headers, rows))
}

/// Facts about a trajectory that do not fit its CSV table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub variant: RomVariant,
    pub case_hash: String,
    pub rank: usize,
    pub pressure_rank: usize,
    pub n_steps: usize,
    pub diverged_at: Option<f64>,
    pub a1_extrapolated: bool,
}

/// Side file next to a trajectory CSV.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn labels(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// Writes `time, a1.., ap1.., rt1..` rows plus the side file. Wall-clock
/// step cost is not stored.
pub fn write_trajectory<T: Real>(path: &Path, traj: &RomTrajectory<T>, case_hash: &str) -> Result<()> {
    let r = traj.velocity.first().map_or(0, |v| v.len());
    let rp = traj.pressure.first().map_or(0, |v| v.len());
    let headers: Vec<String> = std::iter::once("time".to_string())
        .chain(labels("a", r))
        .chain(labels("ap", rp))
        .chain(labels("rt", r))
        .collect();
    let rows: Vec<Vec<f64>> = traj
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            std::iter::once(t)
                .chain(traj.velocity[k].iter().map(|v| v.as_f64()))
                .chain(traj.pressure[k].iter().map(|v| v.as_f64()))
                .chain(traj.closure[k].iter().map(|v| v.as_f64()))
                .collect()
        })
        .collect();
    write_table(path, &headers, &rows)?;
    let meta = TrajectoryMeta {
        variant: traj.variant,
        case_hash: case_hash.to_string(),
        rank: r,
        pressure_rank: rp,
        n_steps: traj.n_steps,
        diverged_at: traj.diverged_at,
        a1_extrapolated: traj.a1_extrapolated,
    };
    fs::write(meta_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn read_trajectory<T: Real>(path: &Path) -> Result<(RomTrajectory<T>, TrajectoryMeta)> {
    let meta: TrajectoryMeta = serde_json::from_str(&fs::read_to_string(meta_path(path))?)?;
    let (headers, rows) = read_table(path)?;
    let (r, rp) = (meta.rank, meta.pressure_rank);
    let expected: Vec<String> = std::iter::once("time".to_string())
        .chain(labels("a", r))
        .chain(labels("ap", rp))
        .chain(labels("rt", r))
        .collect();
    if headers != expected {
        return Err(Error::Format(format!(
            "{}: header does not match rank {r} and pressure rank {rp}",
            path.display()
        )));
    }
    let cast = |s: &[f64]| s.iter().map(|&v| T::lit(v)).collect::<Vec<T>>();
    let traj = RomTrajectory {
        variant: meta.variant,
        times: rows.iter().map(|row| row[0]).collect(),
        velocity: rows.iter().map(|row| cast(&row[1..1 + r])).collect(),
        pressure: rows.iter().map(|row| cast(&row[1 + r..1 + r + rp])).collect(),
        closure: rows.iter().map(|row| cast(&row[1 + r + rp..])).collect(),
        n_steps: meta.n_steps,
        step_cost: 0.0,
        diverged_at: meta.diverged_at,
        a1_extrapolated: meta.a1_extrapolated,
    };
    Ok((traj, meta))
}
