use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::field::Variable;
use crate::grid::{FlowBoundaries, FluidConstants, GridSpec, StructuredGrid};
use crate::scalar::Real;

use super::CaseKind;

/// Time-stamped snapshots of every recorded variable.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotEnsemble<T> {
    case: CaseKind,
    grid: GridSpec,
    boundaries: FlowBoundaries<f64>,
    fluid: FluidConstants<f64>,
    snapshot_interval: f64,
    times: Vec<f64>,
    n_velocity: usize,
    data: BTreeMap<Variable, Vec<Vec<T>>>,
}

impl<T: Real> SnapshotEnsemble<T> {
    /// Checks uniform spacing, the count formula and shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        case: CaseKind,
        grid: GridSpec,
        boundaries: FlowBoundaries<f64>,
        fluid: FluidConstants<f64>,
        snapshot_interval: f64,
        times: Vec<f64>,
        n_velocity: usize,
        data: BTreeMap<Variable, Vec<Vec<T>>>,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Degenerate("ensemble without snapshots".into()));
        }
        if !(snapshot_interval > 0.0) {
            return Err(Error::config("snapshot interval must be positive"));
        }
        for (j, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - snapshot_interval).abs() > 1e-9 * snapshot_interval.max(w[1].abs()) {
                return Err(Error::config(format!(
                    "snapshot times not uniformly spaced at index {}",
                    j + 1
                )));
            }
        }
        let span = times[times.len() - 1] - times[0];
        let expected = (span / snapshot_interval).round() as usize + 1;
        if expected != times.len() {
            return Err(Error::config(format!(
                "{} snapshots for a horizon of {span}",
                times.len()
            )));
        }
        let g: StructuredGrid<f64> = grid.build()?;
        let n = g.n_fluid();
        if n_velocity == 0 || n_velocity > 2 {
            return Err(Error::dim(format!("{n_velocity} velocity components")));
        }
        for a in 0..n_velocity {
            if !data.contains_key(&Variable::velocity(a)) {
                return Err(Error::dim(format!("missing velocity component {}", Variable::velocity(a))));
            }
        }
        for (var, snaps) in &data {
            if snaps.len() != times.len() {
                return Err(Error::dim(format!(
                    "variable {var} has {} snapshots, expected {}",
                    snaps.len(),
                    times.len()
                )));
            }
            if let Some(s) = snaps.iter().find(|s| s.len() != n) {
                return Err(Error::dim(format!("variable {var}: snapshot of {} values, grid has {n}", s.len())));
            }
        }
        Ok(SnapshotEnsemble {
            case,
            grid,
            boundaries,
            fluid,
            snapshot_interval,
            times,
            n_velocity,
            data,
        })
    }

    pub fn case(&self) -> CaseKind {
        self.case
    }

    pub fn grid_spec(&self) -> &GridSpec {
        &self.grid
    }

    pub fn grid(&self) -> Result<StructuredGrid<T>> {
        self.grid.build()
    }

    pub fn boundaries(&self) -> FlowBoundaries<T> {
        self.boundaries.cast()
    }

    pub fn fluid(&self) -> FluidConstants<f64> {
        self.fluid
    }

    pub fn snapshot_interval(&self) -> f64 {
        self.snapshot_interval
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }

    pub fn n_velocity(&self) -> usize {
        self.n_velocity
    }

    pub fn n_cells(&self) -> usize {
        self.data.values().next().map_or(0, |s| s[0].len())
    }

    pub fn variables(&self) -> Vec<Variable> {
        self.data.keys().copied().collect()
    }

    pub fn snapshots(&self, var: Variable) -> Result<&[Vec<T>]> {
        self.data
            .get(&var)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::dim(format!("ensemble has no variable {var}")))
    }

    /// Velocity snapshot `j` with components stacked in axis order.
    pub fn velocity_stacked(&self, j: usize) -> Vec<T> {
        (0..self.n_velocity)
            .flat_map(|a| self.data[&Variable::velocity(a)][j].iter().copied())
            .collect()
    }

    /// Copy restricted to snapshots `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > self.times.len() {
            return Err(Error::dim(format!("snapshot range {range:?} out of bounds")));
        }
        Self::new(
            self.case,
            self.grid.clone(),
            self.boundaries.clone(),
            self.fluid,
            self.snapshot_interval,
            self.times[range.clone()].to_vec(),
            self.n_velocity,
            self.data
                .iter()
                .map(|(k, v)| (*k, v[range.clone()].to_vec()))
                .collect(),
        )
    }
}
