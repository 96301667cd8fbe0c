//! Accuracy metrics, body forces and speedup measurement.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Variable, VectorField};
use crate::fom::{time_fom, FomConfig, SnapshotEnsemble};
use crate::grid::{BoundaryCondition, BoundaryLabel, FlowBoundaries, StructuredGrid};
use crate::pod::{ModalTrajectory, PodVariable};
use crate::rom::{integrate, IntegrationSettings, RomModel};
use crate::scalar::Real;

/// Per-mode root mean square error of a predicted coefficient history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub variable: PodVariable,
    pub variant: Option<String>,
    pub per_mode: Vec<f64>,
    pub n_samples: usize,
}

impl RmseReport {
    pub fn total(&self) -> f64 {
        self.per_mode.iter().sum()
    }
}

/// `RMSE_i = sqrt(1/n Σ_j (a_ij,pred − a_ij,exact)²)` over the predicted
/// times, each matched to the nearest exact sample.
pub fn rmse_per_mode<T: Real>(predicted: &ModalTrajectory<T>, exact: &ModalTrajectory<T>) -> Result<RmseReport> {
    if predicted.rank() != exact.rank() {
        return Err(Error::dim(format!(
            "predicted rank {} vs exact rank {}",
            predicted.rank(),
            exact.rank()
        )));
    }
    if predicted.is_empty() || exact.is_empty() {
        return Err(Error::Degenerate("empty trajectory".into()));
    }
    let spacing = if exact.len() > 1 {
        exact.times[1] - exact.times[0]
    } else {
        0.0
    };
    let tol = (0.5 * spacing).max(1e-9);
    let r = predicted.rank();
    let mut sums = vec![0.0; r];
    for (t, a) in predicted.times.iter().zip(&predicted.coefficients) {
        let j = nearest(&exact.times, *t);
        if (exact.times[j] - t).abs() > tol {
            return Err(Error::Incompatible(format!(
                "prediction time {t} has no exact sample within {tol}"
            )));
        }
        for i in 0..r {
            let d = a[i].as_f64() - exact.coefficients[j][i].as_f64();
            sums[i] += d * d;
        }
    }
    let n = predicted.len();
    Ok(RmseReport {
        variable: predicted.variable,
        variant: None,
        per_mode: sums.into_iter().map(|s| (s / n as f64).sqrt()).collect(),
        n_samples: n,
    })
}

fn nearest(times: &[f64], t: f64) -> usize {
    let k = times.partition_point(|&x| x < t);
    if k == 0 {
        0
    } else if k == times.len() || (t - times[k - 1]) <= (times[k] - t) {
        k - 1
    } else {
        k
    }
}

/// Pressure and viscous force on a body at one instant [N per unit depth].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    pub pressure: [f64; 2],
    pub viscous: [f64; 2],
}

impl ForceSample {
    pub fn total(&self) -> [f64; 2] {
        [self.pressure[0] + self.viscous[0], self.pressure[1] + self.viscous[1]]
    }
}

/// Forces over a snapshot sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSeries {
    pub times: Vec<f64>,
    pub samples: Vec<ForceSample>,
    pub p_ref: f64,
}

/// Force on the faces labelled `body`:
/// `F_p = ρ Σ s_f (p − p_ref)` and `F_v = −ρ Σ ν_E dev(∇u + ∇uᵀ) s_f`,
/// with `s_f` pointing out of the fluid and the velocity gradient taken
/// one-sided between the adjacent cell and the face value. Pressure is
/// kinematic.
#[allow(clippy::too_many_arguments)]
pub fn compute_forces<T: Real>(
    grid: &StructuredGrid<T>,
    bcs: &FlowBoundaries<T>,
    pressure: &Field<T>,
    velocity: &VectorField<T>,
    nu_e: &Field<T>,
    body: BoundaryLabel,
    rho: f64,
    p_ref: f64,
) -> Result<ForceSample> {
    pressure.check_grid(grid)?;
    nu_e.check_grid(grid)?;
    if velocity.dim() != 2 || velocity.n_cells() != grid.n_fluid() || bcs.velocity.len() != 2 {
        return Err(Error::dim("forces need a two-component velocity on the grid"));
    }
    let mut faces = grid.faces_with_label(body).peekable();
    if faces.peek().is_none() {
        return Err(Error::config(format!("no faces labelled {body}")));
    }
    let mut out = ForceSample {
        pressure: [0.0; 2],
        viscous: [0.0; 2],
    };
    for f in faces {
        let c = f.cell;
        let s = [f.area[0].as_f64(), f.area[1].as_f64()];
        let (axis, sign) = f.direction.axis_sign();
        let dn = grid.spacing(axis).as_f64();
        let dp = pressure.values[c].as_f64() - p_ref;
        out.pressure[0] += rho * s[0] * dp;
        out.pressure[1] += rho * s[1] * dp;

        // only the normal derivative survives at the face
        let mut grad = [[0.0; 2]; 2];
        for (k, comp) in velocity.components.iter().enumerate() {
            let inner = comp.values[c];
            let bc = bcs.velocity[k].get(body).copied().unwrap_or(BoundaryCondition::ZeroGradient);
            let face = (inner + bc.ghost(inner)).as_f64() * 0.5;
            grad[k][axis] = sign as f64 * (face - inner.as_f64()) / (0.5 * dn);
        }
        let two_s = [
            [2.0 * grad[0][0], grad[0][1] + grad[1][0]],
            [grad[1][0] + grad[0][1], 2.0 * grad[1][1]],
        ];
        let tr = (two_s[0][0] + two_s[1][1]) / 3.0;
        let dev = [[two_s[0][0] - tr, two_s[0][1]], [two_s[1][0], two_s[1][1] - tr]];
        let nu = nu_e.values[c].as_f64();
        for i in 0..2 {
            out.viscous[i] -= rho * nu * (dev[i][0] * s[0] + dev[i][1] * s[1]);
        }
    }
    Ok(out)
}

/// Forces for every snapshot with `ν_E = ν_M + ν_T`.
pub fn force_series<T: Real>(ensemble: &SnapshotEnsemble<T>, body: BoundaryLabel, p_ref: f64) -> Result<ForceSeries> {
    let grid = ensemble.grid()?;
    let bcs = ensemble.boundaries();
    let fluid = ensemble.fluid();
    let p = ensemble.snapshots(Variable::P)?;
    let zeros = vec![vec![T::zero(); grid.n_fluid()]; ensemble.n_snapshots()];
    let nu_t = ensemble.snapshots(Variable::NuT).unwrap_or(&zeros);
    let nu_m = T::lit(fluid.nu_m);
    let mut samples = Vec::with_capacity(ensemble.n_snapshots());
    for j in 0..ensemble.n_snapshots() {
        let vel = VectorField::from_stacked(ensemble.n_velocity(), &ensemble.velocity_stacked(j))?;
        let nu = Field::new(Variable::NuT, nu_t[j].iter().map(|&v| v + nu_m).collect());
        let pf = Field::new(Variable::P, p[j].clone());
        samples.push(compute_forces(&grid, &bcs, &pf, &vel, &nu, body, fluid.rho, p_ref)?);
    }
    Ok(ForceSeries {
        times: ensemble.times().to_vec(),
        samples,
        p_ref,
    })
}

/// Normalized difference field and its statistics over the fluid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDeviation<T> {
    pub values: Vec<T>,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// Volume-weighted root mean square.
    pub weighted_rms: f64,
}

pub fn field_deviation<T: Real>(
    reconstructed: &Field<T>,
    exact: &Field<T>,
    scale: T,
    grid: &StructuredGrid<T>,
) -> Result<FieldDeviation<T>> {
    reconstructed.check_grid(grid)?;
    exact.check_grid(grid)?;
    if !(scale > T::zero()) {
        return Err(Error::config("normalization scale must be positive"));
    }
    let values: Vec<T> = reconstructed
        .values
        .iter()
        .zip(&exact.values)
        .map(|(&a, &b)| (a - b) / scale)
        .collect();
    let n = values.len().max(1) as f64;
    let max_abs = values.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max);
    let mean_abs = values.iter().map(|v| v.as_f64().abs()).sum::<f64>() / n;
    let w = grid.cell_volumes();
    let ws: f64 = w.iter().map(|x| x.as_f64()).sum();
    let weighted_rms = (values
        .iter()
        .zip(w)
        .map(|(v, x)| x.as_f64() * v.as_f64().powi(2))
        .sum::<f64>()
        / ws)
        .sqrt();
    Ok(FieldDeviation {
        values,
        max_abs,
        mean_abs,
        weighted_rms,
    })
}

/// Wall-clock cost of full and reduced models per simulated second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub fom_seconds_per_second: f64,
    pub rom_seconds_per_second: f64,
    pub ratio: f64,
    pub n_cells: usize,
    pub n_modes: usize,
    /// Simulated span actually run by the full model.
    pub fom_duration: f64,
    pub rom_duration: f64,
    /// Whether the full-model cost was extrapolated from a shorter run.
    pub fom_scaled: bool,
}

impl SpeedupReport {
    pub fn from_costs(fom_seconds_per_second: f64, rom_seconds_per_second: f64) -> Result<Self> {
        if !(fom_seconds_per_second > 0.0) || !(rom_seconds_per_second > 0.0) {
            return Err(Error::config("timings must be positive"));
        }
        Ok(SpeedupReport {
            fom_seconds_per_second,
            rom_seconds_per_second,
            ratio: fom_seconds_per_second / rom_seconds_per_second,
            n_cells: 0,
            n_modes: 0,
            fom_duration: 1.0,
            rom_duration: 1.0,
            fom_scaled: false,
        })
    }
}

/// Minimum accumulated wall-clock for a reduced-model timing.
const MIN_ROM_WALL: f64 = 0.2;

/// Times the full model over `fom_duration` (scaled to `duration` when
/// shorter) and the reduced model over `duration`, repeating the reduced
/// run until the measurement is long enough to trust.
pub fn benchmark_speedup<T: Real>(
    fom: &FomConfig,
    model: &RomModel<T>,
    a0: &[T],
    duration: f64,
    fom_duration: Option<f64>,
    settings: IntegrationSettings,
) -> Result<SpeedupReport> {
    if !(duration > 0.0) {
        return Err(Error::config("benchmark duration must be positive"));
    }
    let fd = fom_duration.unwrap_or(duration).min(duration);
    let (fom_wall, steps) = time_fom::<T>(fom, fd)?;
    let fom_span = steps as f64 * fom.dt;
    let (rom_wall, runs) = time_rom(model, a0, duration, settings)?;
    let mut report = SpeedupReport::from_costs(fom_wall / fom_span, rom_wall / runs as f64 / duration)?;
    report.n_cells = fom.grid.build::<f64>()?.n_fluid();
    report.n_modes = model.rank();
    report.fom_duration = fom_span;
    report.rom_duration = duration;
    report.fom_scaled = fom_span < duration;
    Ok(report)
}

/// Total wall-clock and repetitions of reduced-model runs over `duration`.
pub fn time_rom<T: Real>(model: &RomModel<T>, a0: &[T], duration: f64, settings: IntegrationSettings) -> Result<(f64, usize)> {
    let mut runs = 0;
    let start = Instant::now();
    loop {
        let traj = integrate(model, a0, 0.0, duration, settings)?;
        runs += 1;
        if let Some(t) = traj.diverged_at {
            return Err(Error::Stability(format!("reduced model diverged at t = {t}")));
        }
        let wall = start.elapsed().as_secs_f64();
        if wall >= MIN_ROM_WALL {
            return Ok((wall, runs));
        }
    }
}
