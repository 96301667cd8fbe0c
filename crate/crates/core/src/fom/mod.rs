//! Desk-scale full-order solvers producing snapshot ensembles.

mod burgers;
mod ensemble;
mod ns2d;
mod projection;
mod smagorinsky;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Variable, VectorField};
use crate::grid::{BoundaryCondition, BoundaryLabel, BoundarySpec, FlowBoundaries, FluidConstants, GridSpec, StructuredGrid};
use crate::ops::ConvectionScheme;
use crate::scalar::Real;

pub use burgers::step_burgers;
pub use ensemble::SnapshotEnsemble;
pub use ns2d::{step_ns2d, Ns2dSolver};
pub use projection::{PoissonSettings, PressureSolver, SolveReport};
pub use smagorinsky::smagorinsky_nu_t;

/// Bundled full-order problem families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Periodic viscous Burgers equation in 1D.
    Burgers1d,
    /// Channel with inflow, outflow, slip side walls and an optional square
    /// obstacle.
    Ns2dObstacle,
    /// Doubly periodic box.
    Ns2dPeriodic,
}

/// One Fourier component `amplitude · cos(k·2πx/L + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub k: u32,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Initial velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// 1D sum of cosines.
    Fourier {
        #[serde(default)]
        mean: f64,
        modes: Vec<FourierMode>,
    },
    /// 1D spectrum `amplitude · k^(-slope)` for `k = 1..=k_max` with seeded
    /// random phases.
    RandomSpectrum {
        #[serde(default)]
        mean: f64,
        k_max: u32,
        amplitude: f64,
        #[serde(default)]
        slope: f64,
    },
    /// `u = A sin(x) cos(y)`, `v = -A cos(x) sin(y)` scaled to the box.
    TaylorGreen { amplitude: f64 },
    /// Inflow velocity everywhere plus a seeded large-scale cross-flow
    /// perturbation, projected to be divergence-free.
    Uniform {
        #[serde(default)]
        perturbation: f64,
    },
}

/// Full-order run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FomConfig {
    pub case: CaseKind,
    pub grid: GridSpec,
    #[serde(default = "one")]
    pub rho: f64,
    pub nu_m: f64,
    #[serde(default = "one")]
    pub u_in: f64,
    #[serde(default = "default_cs")]
    pub smagorinsky_cs: f64,
    pub dt: f64,
    pub snapshot_interval: f64,
    pub horizon: f64,
    #[serde(default)]
    pub spin_up: f64,
    pub initial_condition: InitialCondition,
    #[serde(default)]
    pub convection: ConvectionScheme,
    #[serde(default)]
    pub poisson: PoissonSettings,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_cs() -> f64 {
    0.17
}

impl Default for FomConfig {
    fn default() -> Self {
        FomConfig {
            case: CaseKind::Burgers1d,
            grid: GridSpec {
                nx: 64,
                ny: 1,
                dx: 2.0 * PI / 64.0,
                dy: 1.0,
                periodic_x: true,
                periodic_y: true,
                obstacle: None,
            },
            rho: 1.0,
            nu_m: 0.1,
            u_in: 1.0,
            smagorinsky_cs: default_cs(),
            dt: 1e-3,
            snapshot_interval: 1e-2,
            horizon: 1.0,
            spin_up: 0.0,
            initial_condition: InitialCondition::Fourier {
                mean: 0.0,
                modes: vec![FourierMode {
                    k: 1,
                    amplitude: 1.0,
                    phase: 0.0,
                }],
            },
            convection: ConvectionScheme::default(),
            poisson: PoissonSettings::default(),
            seed: 0,
        }
    }
}

/// Number of whole `dt` steps in `span`, or `None` if `span` is not an
/// integer multiple of `dt`.
fn whole_steps(span: f64, dt: f64) -> Option<usize> {
    let r = span / dt;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * r.max(1.0) && k >= 0.0).then_some(k as usize)
}

impl FomConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("snapshot_interval", self.snapshot_interval)?;
        positive("nu_m", self.nu_m)?;
        positive("rho", self.rho)?;
        if !(self.smagorinsky_cs >= 0.0) || !(self.spin_up >= 0.0) {
            return Err(Error::config("smagorinsky_cs and spin_up must be non-negative"));
        }
        if whole_steps(self.snapshot_interval, self.dt).is_none_or(|k| k == 0) {
            return Err(Error::config(format!(
                "snapshot interval {} is not an integer multiple of dt {}",
                self.snapshot_interval, self.dt
            )));
        }
        if whole_steps(self.spin_up, self.dt).is_none() {
            return Err(Error::config("spin_up is not an integer multiple of dt"));
        }
        if self.horizon < self.snapshot_interval * (1.0 - 1e-12) {
            return Err(Error::config(format!(
                "horizon {} shorter than the snapshot interval {}",
                self.horizon, self.snapshot_interval
            )));
        }
        if whole_steps(self.horizon, self.snapshot_interval).is_none() {
            return Err(Error::config("horizon is not an integer multiple of the snapshot interval"));
        }
        let g = &self.grid;
        match self.case {
            CaseKind::Burgers1d => {
                if g.ny != 1 || !g.periodic_x || !g.periodic_y || g.obstacle.is_some() {
                    return Err(Error::config("burgers1d needs a periodic 1-row grid"));
                }
            }
            CaseKind::Ns2dPeriodic => {
                if g.ny < 2 || !g.periodic_x || !g.periodic_y || g.obstacle.is_some() {
                    return Err(Error::config("ns2d_periodic needs a doubly periodic 2D grid"));
                }
            }
            CaseKind::Ns2dObstacle => {
                if g.ny < 2 || g.periodic_x || g.periodic_y {
                    return Err(Error::config("ns2d_obstacle needs a bounded 2D grid"));
                }
            }
        }
        Ok(())
    }

    /// Number of snapshots `T_E/δt_E + 1`.
    pub fn snapshot_count(&self) -> usize {
        whole_steps(self.horizon, self.snapshot_interval).unwrap_or(0) + 1
    }

    pub fn fluid(&self) -> Result<FluidConstants<f64>> {
        FluidConstants::new(self.rho, self.nu_m)
    }

    /// Velocity and pressure boundary conditions of the case.
    pub fn boundaries<T: Real>(&self) -> Result<FlowBoundaries<T>> {
        use BoundaryCondition::{FixedValue, ZeroGradient};
        use BoundaryLabel::*;
        match self.case {
            CaseKind::Burgers1d => Ok(FlowBoundaries::periodic(1)),
            CaseKind::Ns2dPeriodic => Ok(FlowBoundaries::periodic(2)),
            CaseKind::Ns2dObstacle => {
                let u = BoundarySpec::new()
                    .with(West, FixedValue(T::lit(self.u_in)))
                    .with(East, ZeroGradient)
                    .with(South, ZeroGradient)
                    .with(North, ZeroGradient)
                    .with(Body, FixedValue(T::zero()));
                let v = BoundarySpec::new()
                    .with(West, FixedValue(T::zero()))
                    .with(East, ZeroGradient)
                    .with(South, FixedValue(T::zero()))
                    .with(North, FixedValue(T::zero()))
                    .with(Body, FixedValue(T::zero()));
                FlowBoundaries::with_dual_pressure(vec![u, v])
            }
        }
    }

    fn n_components(&self) -> usize {
        match self.case {
            CaseKind::Burgers1d => 1,
            _ => 2,
        }
    }

    /// Initial state before any projection.
    pub fn initial_state<T: Real>(&self, grid: &StructuredGrid<T>) -> Result<FomState<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let lx = self.grid.dx * self.grid.nx as f64;
        let ly = self.grid.dy * self.grid.ny as f64;
        let n = grid.n_fluid();
        let centers: Vec<(f64, f64)> = (0..n)
            .map(|c| {
                let (x, y) = grid.cell_center(c);
                (x.as_f64(), y.as_f64())
            })
            .collect();
        let sample = |f: &dyn Fn(f64, f64) -> f64| -> Vec<T> { centers.iter().map(|&(x, y)| T::lit(f(x, y))).collect() };
        let comps: Vec<Vec<T>> = match (&self.initial_condition, self.case) {
            (InitialCondition::Fourier { mean, modes }, CaseKind::Burgers1d) => {
                vec![sample(&|x, _| {
                    mean + modes
                        .iter()
                        .map(|m| m.amplitude * (m.k as f64 * 2.0 * PI * x / lx + m.phase).cos())
                        .sum::<f64>()
                })]
            }
            (
                InitialCondition::RandomSpectrum {
                    mean,
                    k_max,
                    amplitude,
                    slope,
                },
                CaseKind::Burgers1d,
            ) => {
                let modes: Vec<(f64, f64, f64)> = (1..=*k_max)
                    .map(|k| {
                        let phase = 2.0 * PI * rng.random::<f64>();
                        (k as f64, amplitude * (k as f64).powf(-slope), phase)
                    })
                    .collect();
                vec![sample(&|x, _| {
                    mean + modes
                        .iter()
                        .map(|&(k, a, ph)| a * (k * 2.0 * PI * x / lx + ph).cos())
                        .sum::<f64>()
                })]
            }
            (InitialCondition::TaylorGreen { amplitude }, CaseKind::Ns2dPeriodic) => {
                let (kx, ky) = (2.0 * PI / lx, 2.0 * PI / ly);
                vec![
                    sample(&|x, y| amplitude * (kx * x).sin() * (ky * y).cos()),
                    sample(&|x, y| -amplitude * (kx * x).cos() * (ky * y).sin()),
                ]
            }
            (InitialCondition::Uniform { perturbation }, CaseKind::Ns2dObstacle) => {
                let modes: Vec<(f64, f64)> = (1..=3)
                    .map(|_| (2.0 * rng.random::<f64>() - 1.0, 2.0 * PI * rng.random::<f64>()))
                    .collect();
                let u_in = self.u_in;
                vec![
                    sample(&|_, _| u_in),
                    sample(&|x, y| {
                        perturbation
                            * (PI * y / ly).sin()
                            * modes
                                .iter()
                                .enumerate()
                                .map(|(m, &(a, ph))| a * ((m + 1) as f64 * PI * x / lx + ph).sin())
                                .sum::<f64>()
                    }),
                ]
            }
            (ic, case) => {
                return Err(Error::config(format!("initial condition {ic:?} does not apply to {case:?}")));
            }
        };
        let velocity = VectorField::new(
            comps
                .into_iter()
                .enumerate()
                .map(|(a, v)| Field::new(Variable::velocity(a), v))
                .collect(),
        );
        Ok(FomState::new(0.0, velocity, n))
    }
}

/// Solution state of a full-order solver.
#[derive(Clone, Debug, PartialEq)]
pub struct FomState<T> {
    /// Simulation time [s].
    pub time: f64,
    pub velocity: VectorField<T>,
    /// Kinematic pressure `p/ρ`.
    pub pressure: Field<T>,
    pub nu_t: Field<T>,
}

impl<T: Real> FomState<T> {
    /// State with zero pressure and eddy viscosity.
    pub fn new(time: f64, velocity: VectorField<T>, n: usize) -> Self {
        FomState {
            time,
            velocity,
            pressure: Field::zeros(Variable::P, n),
            nu_t: Field::zeros(Variable::NuT, n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.velocity.is_finite() && self.pressure.is_finite() && self.nu_t.is_finite()
    }
}

enum Stepper<T: Real> {
    Burgers { grid: StructuredGrid<T>, nu: T },
    Ns2d(Box<Ns2dSolver<T>>),
}

impl<T: Real> Stepper<T> {
    fn new(config: &FomConfig, grid: &StructuredGrid<T>, bcs: FlowBoundaries<T>) -> Result<Self> {
        Ok(match config.case {
            CaseKind::Burgers1d => Stepper::Burgers {
                grid: grid.clone(),
                nu: T::lit(config.nu_m),
            },
            _ => Stepper::Ns2d(Box::new(Ns2dSolver::new(
                grid.clone(),
                bcs,
                T::lit(config.nu_m),
                T::lit(config.smagorinsky_cs),
                config.convection,
                config.poisson,
            )?)),
        })
    }

    fn initial_state(&self, config: &FomConfig, grid: &StructuredGrid<T>) -> Result<FomState<T>> {
        let mut state = config.initial_state(grid)?;
        if let Stepper::Ns2d(s) = self {
            state.velocity = s.project(&state.velocity)?;
        }
        Ok(state)
    }

    fn step(&self, state: &FomState<T>, dt: T) -> Result<FomState<T>> {
        match self {
            Stepper::Burgers { grid, nu } => step_burgers(grid, state, dt, *nu),
            Stepper::Ns2d(s) => s.step(state, dt),
        }
    }

    /// Snapshot variables at the current state.
    fn record(&self, state: &FomState<T>) -> Result<Vec<(Variable, Vec<T>)>> {
        let mut out: Vec<(Variable, Vec<T>)> = state
            .velocity
            .components
            .iter()
            .map(|c| (c.label, c.values.clone()))
            .collect();
        if let Stepper::Ns2d(s) = self {
            let nu_t = s.nu_t(&state.velocity);
            let p = s.instantaneous_pressure(&state.velocity, &nu_t, &state.pressure.values)?;
            out.push((Variable::P, p));
            out.push((Variable::NuT, nu_t));
        }
        Ok(out)
    }
}

/// Runs the configured case, discards the spin-up interval and records
/// every variable each snapshot interval.
///
/// Snapshot pressure is the instantaneous pressure of the recorded
/// velocity, which keeps it consistent with the projected equations.
pub fn run_and_collect<T: Real>(config: &FomConfig) -> Result<SnapshotEnsemble<T>> {
    config.validate()?;
    let grid: StructuredGrid<T> = config.grid.build()?;
    let bcs = config.boundaries::<T>()?;
    bcs.validate(&grid)?;
    let dt = T::lit(config.dt);
    let stepper = Stepper::new(config, &grid, bcs)?;
    let mut state = stepper.initial_state(config, &grid)?;
    let n_spin = whole_steps(config.spin_up, config.dt).unwrap_or(0);
    let per_snapshot = whole_steps(config.snapshot_interval, config.dt).unwrap_or(1);
    let n_snap = config.snapshot_count();

    let advance = |state: FomState<T>, k: usize| -> Result<FomState<T>> {
        let mut s = state;
        for _ in 0..k {
            let t = s.time;
            s = stepper.step(&s, dt).map_err(|e| e.at_time(t))?;
        }
        Ok(s)
    };
    state = advance(state, n_spin)?;
    let t0 = config.spin_up;
    let mut times = Vec::with_capacity(n_snap);
    let mut records: Vec<Vec<(Variable, Vec<T>)>> = Vec::with_capacity(n_snap);
    for j in 0..n_snap {
        if j > 0 {
            state = advance(state, per_snapshot)?;
        }
        let t = t0 + j as f64 * config.snapshot_interval;
        records.push(stepper.record(&state).map_err(|e| e.at_time(t))?);
        times.push(t);
    }
    let mut data = std::collections::BTreeMap::new();
    for rec in records {
        for (var, values) in rec {
            data.entry(var).or_insert_with(Vec::new).push(values);
        }
    }
    SnapshotEnsemble::new(
        config.case,
        config.grid.clone(),
        config.boundaries::<f64>()?,
        config.fluid()?,
        config.snapshot_interval,
        times,
        config.n_components(),
        data,
    )
}

/// Wall-clock seconds spent stepping the configured case over `duration`
/// (setup excluded), and the number of steps taken.
pub fn time_fom<T: Real>(config: &FomConfig, duration: f64) -> Result<(f64, usize)> {
    config.validate()?;
    let grid: StructuredGrid<T> = config.grid.build()?;
    let stepper = Stepper::new(config, &grid, config.boundaries::<T>()?)?;
    let mut state = stepper.initial_state(config, &grid)?;
    let n = whole_steps(duration, config.dt).unwrap_or((duration / config.dt).ceil() as usize).max(1);
    let dt = T::lit(config.dt);
    let start = std::time::Instant::now();
    for _ in 0..n {
        let t = state.time;
        state = stepper.step(&state, dt).map_err(|e| e.at_time(t))?;
    }
    Ok((start.elapsed().as_secs_f64(), n))
}
