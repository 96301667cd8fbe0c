//! Snapshot ensemble directories: `manifest.json` plus one raw
//! little-endian `f64` file per variable, snapshot-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::Variable;
use crate::fom::{CaseKind, SnapshotEnsemble};
use crate::grid::{FlowBoundaries, FluidConstants, GridSpec};
use crate::scalar::Real;

pub const MANIFEST: &str = "manifest.json";
const TIMES_FILE: &str = "times.f64";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataFile {
    /// `None` for the time axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<Variable>,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: u32,
    pub case: CaseKind,
    pub grid: GridSpec,
    pub boundaries: FlowBoundaries<f64>,
    pub fluid: FluidConstants<f64>,
    pub snapshot_interval: f64,
    pub horizon: f64,
    pub n_snapshots: usize,
    pub n_cells: usize,
    pub n_velocity: usize,
    pub files: Vec<DataFile>,
    /// SHA-256 of the manifest serialized without this field.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub case_hash: String,
}

impl EnsembleManifest {
    pub fn compute_hash(&self) -> Result<String> {
        let mut m = self.clone();
        m.case_hash.clear();
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&m)?)))
    }
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode<T: Real>(rows: &[Vec<T>]) -> Vec<u8> {
    rows.iter()
        .flatten()
        .flat_map(|v| v.as_f64().to_le_bytes())
        .collect()
}

fn decode(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Writes the ensemble into `dir` (created if needed) and returns the case
/// hash.
pub fn write_ensemble<T: Real>(dir: &Path, ens: &SnapshotEnsemble<T>) -> Result<String> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let times: Vec<u8> = ens.times().iter().flat_map(|t| t.to_le_bytes()).collect();
    fs::write(dir.join(TIMES_FILE), &times)?;
    files.push(DataFile {
        variable: None,
        file: TIMES_FILE.into(),
        sha256: digest(&times),
    });
    for var in ens.variables() {
        let bytes = encode(ens.snapshots(var)?);
        let file = format!("{}.f64", var.as_str());
        fs::write(dir.join(&file), &bytes)?;
        files.push(DataFile {
            variable: Some(var),
            file,
            sha256: digest(&bytes),
        });
    }
    let mut manifest = EnsembleManifest {
        format: 1,
        case: ens.case(),
        grid: ens.grid_spec().clone(),
        boundaries: ens.boundaries().cast(),
        fluid: ens.fluid(),
        snapshot_interval: ens.snapshot_interval(),
        horizon: ens.horizon(),
        n_snapshots: ens.n_snapshots(),
        n_cells: ens.n_cells(),
        n_velocity: ens.n_velocity(),
        files,
        case_hash: String::new(),
    };
    manifest.case_hash = manifest.compute_hash()?;
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest.case_hash)
}

pub fn read_manifest(dir: &Path) -> Result<EnsembleManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let m: EnsembleManifest = serde_json::from_str(&text)?;
    if m.format != 1 {
        return Err(Error::Format(format!("unsupported ensemble format {}", m.format)));
    }
    if m.case_hash != m.compute_hash()? {
        return Err(Error::Format(format!(
            "{} does not match its case hash",
            dir.join(MANIFEST).display()
        )));
    }
    Ok(m)
}

/// Reads and verifies an ensemble directory; returns it with its case hash.
pub fn read_ensemble<T: Real>(dir: &Path) -> Result<(SnapshotEnsemble<T>, String)> {
    let m = read_manifest(dir)?;
    let mut times = None;
    let mut data = BTreeMap::new();
    for f in &m.files {
        let bytes = fs::read(dir.join(&f.file))?;
        if digest(&bytes) != f.sha256 {
            return Err(Error::Format(format!("{} is corrupted (digest mismatch)", f.file)));
        }
        if bytes.len() % 8 != 0 {
            return Err(Error::Format(format!("{} is not a whole number of f64 values", f.file)));
        }
        let values = decode(&bytes);
        match f.variable {
            None => times = Some(values),
            Some(var) => {
                if values.len() != m.n_snapshots * m.n_cells {
                    return Err(Error::Format(format!(
                        "{} holds {} values, expected {} snapshots of {} cells",
                        f.file,
                        values.len(),
                        m.n_snapshots,
                        m.n_cells
                    )));
                }
                let snaps = values
                    .chunks(m.n_cells.max(1))
                    .map(|c| c.iter().map(|&v| T::lit(v)).collect())
                    .collect();
                data.insert(var, snaps);
            }
        }
    }
    let times = times.ok_or_else(|| Error::Format("manifest lists no time axis".into()))?;
    if times.len() != m.n_snapshots {
        return Err(Error::Format("time axis length differs from the snapshot count".into()));
    }
    let ens = SnapshotEnsemble::new(
        m.case,
        m.grid.clone(),
        m.boundaries.clone(),
        m.fluid,
        m.snapshot_interval,
        times,
        m.n_velocity,
        data,
    )?;
    Ok((ens, m.case_hash))
}
