use crate::error::{Error, Result};
use crate::field::{Field, Variable, VectorField};
use crate::grid::{FlowBoundaries, StructuredGrid};
use crate::ops::{convection_into, diffusion_into, divergence_into, ConvectionScheme};
use crate::scalar::{lit, Real};

use super::projection::{project, PoissonSettings, PressureSolver};
use super::smagorinsky::smagorinsky_into;
use super::{FomConfig, FomState};

/// Fractional-step solver for the 2D incompressible Navier–Stokes
/// equations with Smagorinsky eddy viscosity.
///
/// Each SSP-RK3 stage is an explicit predictor followed by an exact
/// projection, so every stage velocity is discretely divergence-free.
#[derive(Clone, Debug)]
pub struct Ns2dSolver<T> {
    grid: StructuredGrid<T>,
    bcs: FlowBoundaries<T>,
    nu_m: T,
    cs: T,
    scheme: ConvectionScheme,
    pressure: PressureSolver<T>,
}

impl<T: Real> Ns2dSolver<T> {
    pub fn new(
        grid: StructuredGrid<T>,
        bcs: FlowBoundaries<T>,
        nu_m: T,
        cs: T,
        scheme: ConvectionScheme,
        settings: PoissonSettings,
    ) -> Result<Self> {
        if grid.dimension() != 2 || bcs.velocity.len() != 2 {
            return Err(Error::config("Navier–Stokes solver needs a 2D grid and two velocity components"));
        }
        let pressure = PressureSolver::new(&grid, &bcs, settings)?;
        Ok(Ns2dSolver {
            grid,
            bcs,
            nu_m,
            cs,
            scheme,
            pressure,
        })
    }

    pub fn from_config(config: &FomConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid.build()?;
        let bcs = config.boundaries()?;
        Self::new(
            grid,
            bcs,
            T::lit(config.nu_m),
            T::lit(config.smagorinsky_cs),
            config.convection,
            config.poisson,
        )
    }

    pub fn grid(&self) -> &StructuredGrid<T> {
        &self.grid
    }

    pub fn boundaries(&self) -> &FlowBoundaries<T> {
        &self.bcs
    }

    /// Eddy viscosity of `velocity` (zero when the constant is zero).
    pub fn nu_t(&self, velocity: &VectorField<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.grid.n_fluid()];
        if self.cs > T::zero() {
            smagorinsky_into(&self.grid, velocity, &self.bcs.velocity, self.cs, &mut out);
        }
        out
    }

    /// `-(u·∇)u + ∇·(ν_E ∇u)` per component.
    pub(crate) fn rhs(&self, vel: &[Vec<T>], nu_e: &[T], out: &mut [Vec<T>]) {
        let n = self.grid.n_fluid();
        let comps: Vec<&[T]> = vel.iter().map(|c| c.as_slice()).collect();
        let mut diff = vec![T::zero(); n];
        for (a, oa) in out.iter_mut().enumerate() {
            let bc = &self.bcs.velocity[a];
            convection_into(&self.grid, &comps, &self.bcs.velocity, &vel[a], bc, self.scheme, oa);
            diffusion_into(&self.grid, nu_e, &vel[a], bc, &mut diff);
            for (o, d) in oa.iter_mut().zip(&diff) {
                *o = *d - *o;
            }
        }
    }

    /// Maximum absolute discrete divergence.
    pub fn max_divergence(&self, velocity: &VectorField<T>) -> T {
        let comps: Vec<&[T]> = velocity.components.iter().map(|c| c.values.as_slice()).collect();
        let mut div = vec![T::zero(); self.grid.n_fluid()];
        divergence_into(&self.grid, &comps, &self.bcs.velocity, &mut div);
        div.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Projects an arbitrary velocity onto the discretely divergence-free
    /// set compatible with the boundary conditions.
    pub fn project(&self, velocity: &VectorField<T>) -> Result<VectorField<T>> {
        let mut w: Vec<Vec<T>> = velocity.components.iter().map(|c| c.values.clone()).collect();
        let mut phi = vec![T::zero(); self.grid.n_fluid()];
        project(&self.grid, &self.bcs, &self.pressure, &mut w, &mut phi)?;
        Ok(to_vector_field(w))
    }

    /// Kinematic pressure consistent with the instantaneous velocity:
    /// solves `D G p = D F(u)` with the current eddy viscosity.
    pub fn instantaneous_pressure(&self, velocity: &VectorField<T>, nu_t: &[T], guess: &[T]) -> Result<Vec<T>> {
        let n = self.grid.n_fluid();
        let vel: Vec<Vec<T>> = velocity.components.iter().map(|c| c.values.clone()).collect();
        let nu_e: Vec<T> = nu_t.iter().map(|&v| self.nu_m + v).collect();
        let mut f = vec![vec![T::zero(); n]; 2];
        self.rhs(&vel, &nu_e, &mut f);
        let hom = self.bcs.homogeneous_velocity();
        let comps: Vec<&[T]> = f.iter().map(|c| c.as_slice()).collect();
        let mut b = vec![T::zero(); n];
        divergence_into(&self.grid, &comps, &hom, &mut b);
        b.iter_mut().for_each(|v| *v = -*v);
        let mut p = guess.to_vec();
        self.pressure.solve(&b, &mut p)?;
        Ok(p)
    }

    /// One SSP-RK3 step with a projection after every stage; ν_T is
    /// evaluated once from the incoming velocity.
    pub fn step(&self, state: &FomState<T>, dt: T) -> Result<FomState<T>> {
        let n = self.grid.n_fluid();
        if state.velocity.dim() != 2 {
            return Err(Error::dim("Navier–Stokes state carries two velocity components"));
        }
        for c in &state.velocity.components {
            c.check_grid(&self.grid)?;
        }
        let h = self.grid.dx().min(self.grid.dy());
        let courant = dt * state.velocity.max_abs() / h;
        if courant > T::one() {
            return Err(Error::Stability(format!("CFL number {courant} exceeds 1")));
        }
        let nu_t = self.nu_t(&state.velocity);
        let nu_e: Vec<T> = nu_t.iter().map(|&v| self.nu_m + v).collect();
        let u0: Vec<Vec<T>> = state.velocity.components.iter().map(|c| c.values.clone()).collect();
        let mut f = vec![vec![T::zero(); n]; 2];
        let p0 = &state.pressure.values;
        let mut phi = vec![T::zero(); n];

        let stages: [(T, T); 3] = [
            (T::zero(), T::one()),
            (lit(0.75), lit(0.25)),
            (lit(1.0 / 3.0), lit(2.0 / 3.0)),
        ];
        let mut u = u0.clone();
        for &(keep, weight) in &stages {
            self.rhs(&u, &nu_e, &mut f);
            for a in 0..2 {
                for c in 0..n {
                    u[a][c] = keep * u0[a][c] + weight * (u[a][c] + dt * f[a][c]);
                }
            }
            let scale = weight * dt;
            for (x, &p) in phi.iter_mut().zip(p0) {
                *x = p * scale;
            }
            project(&self.grid, &self.bcs, &self.pressure, &mut u, &mut phi)?;
        }
        let scale = lit::<T>(2.0 / 3.0) * dt;
        let pressure: Vec<T> = phi.iter().map(|&x| x / scale).collect();
        let velocity = to_vector_field(u);
        if !velocity.is_finite() {
            return Err(Error::NonFinite("Navier–Stokes velocity".into()));
        }
        Ok(FomState {
            time: state.time + dt.as_f64(),
            velocity,
            pressure: Field::new(Variable::P, pressure),
            nu_t: Field::new(Variable::NuT, nu_t),
        })
    }
}

fn to_vector_field<T: Real>(w: Vec<Vec<T>>) -> VectorField<T> {
    VectorField::new(
        w.into_iter()
            .enumerate()
            .map(|(a, v)| Field::new(Variable::velocity(a), v))
            .collect(),
    )
}

/// One step of the configured 2D case; builds the solver on every call,
/// so repeated stepping should hold an [`Ns2dSolver`] instead.
pub fn step_ns2d<T: Real>(state: &FomState<T>, dt: T, config: &FomConfig) -> Result<FomState<T>> {
    Ns2dSolver::from_config(config)?.step(state, dt)
}
