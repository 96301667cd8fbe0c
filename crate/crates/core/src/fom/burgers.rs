use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{BoundarySpec, StructuredGrid};
use crate::ops::{convection_into, laplacian_into, ConvectionScheme};
use crate::scalar::{lit, Real};

use super::FomState;

/// Right-hand side `-u u_x + ν u_xx` of the periodic viscous Burgers
/// equation in skew-symmetric (conservative) form.
pub(crate) fn burgers_rhs<T: Real>(grid: &StructuredGrid<T>, u: &[T], nu: T, out: &mut [T]) {
    let bc = BoundarySpec::periodic();
    let mut lap = vec![T::zero(); u.len()];
    convection_into(grid, &[u], std::slice::from_ref(&bc), u, &bc, ConvectionScheme::SkewCentral, out);
    laplacian_into(grid, u, &bc, &mut lap);
    for (o, l) in out.iter_mut().zip(lap) {
        *o = nu * l - *o;
    }
}

/// One classical RK4 step of the periodic Burgers equation.
pub fn step_burgers<T: Real>(
    grid: &StructuredGrid<T>,
    state: &FomState<T>,
    dt: T,
    nu_e: T,
) -> Result<FomState<T>> {
    if grid.dimension() != 1 || !grid.is_fully_periodic() {
        return Err(Error::config("Burgers solver needs a 1D periodic grid"));
    }
    if state.velocity.dim() != 1 {
        return Err(Error::dim("Burgers state carries one velocity component"));
    }
    let u = &state.velocity.components[0];
    u.check_grid(grid)?;
    let courant = dt * u.max_abs() / grid.dx();
    if courant > T::one() {
        return Err(Error::Stability(format!("CFL number {courant} exceeds 1")));
    }
    let n = u.len();
    let u0 = &u.values;
    let mut k = vec![vec![T::zero(); n]; 4];
    let mut tmp = vec![T::zero(); n];
    let half = lit::<T>(0.5);
    burgers_rhs(grid, u0, nu_e, &mut k[0]);
    for s in 1..4 {
        let w = if s == 3 { dt } else { half * dt };
        for c in 0..n {
            tmp[c] = u0[c] + w * k[s - 1][c];
        }
        let (_, rest) = k.split_at_mut(s);
        burgers_rhs(grid, &tmp, nu_e, &mut rest[0]);
    }
    let sixth = dt / lit::<T>(6.0);
    let two = lit::<T>(2.0);
    let values: Vec<T> = (0..n)
        .map(|c| u0[c] + sixth * (k[0][c] + two * k[1][c] + two * k[2][c] + k[3][c]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Burgers velocity".into()));
    }
    let mut next = state.clone();
    next.time = state.time + dt.as_f64();
    next.velocity.components[0] = Field::new(u.label, values);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Variable, VectorField};

    fn state(grid: &StructuredGrid<f64>, f: impl Fn(f64) -> f64) -> FomState<f64> {
        let u = Field::from_fn(Variable::U, grid, |x, _| f(x));
        FomState::new(0.0, VectorField::new(vec![u]), grid.n_fluid())
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let g = StructuredGrid::periodic_line(32, 2.0 * std::f64::consts::PI).unwrap();
        let s = state(&g, |_| 0.0);
        let next = step_burgers(&g, &s, 0.01, 0.1).unwrap();
        assert!(next.velocity.max_abs() == 0.0);
    }

    #[test]
    fn linear_regime_decays_like_heat_equation() {
        let g = StructuredGrid::periodic_line(128, 2.0 * std::f64::consts::PI).unwrap();
        let eps = 1e-6;
        let nu = 0.1;
        let dt = 1e-3;
        let steps = 1000;
        let mut s = state(&g, |x| eps * x.sin());
        for _ in 0..steps {
            s = step_burgers(&g, &s, dt, nu).unwrap();
        }
        let t = dt * steps as f64;
        // amplitude from projection onto the initial profile
        let sinx: Vec<f64> = (0..g.n_fluid()).map(|c| g.cell_center(c).0.sin()).collect();
        let num: f64 = s.velocity.components[0].values.iter().zip(&sinx).map(|(a, b)| a * b).sum();
        let den: f64 = sinx.iter().map(|b| b * b).sum();
        let ratio = num / den / eps;
        let expect = (-nu * t).exp();
        assert!((ratio - expect).abs() <= 1e-4 * expect, "{ratio} vs {expect}");
    }

    #[test]
    fn conserves_mass() {
        let g = StructuredGrid::periodic_line(64, 2.0 * std::f64::consts::PI).unwrap();
        let mut s = state(&g, |x| 1.0 + 0.5 * x.sin() + 0.3 * (3.0 * x).cos());
        let mass = |s: &FomState<f64>| s.velocity.components[0].values.iter().sum::<f64>() * g.dx();
        let m0 = mass(&s);
        for _ in 0..1000 {
            s = step_burgers(&g, &s, 1e-3, 0.05).unwrap();
        }
        assert!((mass(&s) - m0).abs() <= 1e-10 * m0.abs());
    }

    #[test]
    fn cfl_violation_is_stability_error() {
        let g = StructuredGrid::periodic_line(16, 1.0).unwrap();
        let s = state(&g, |_| 10.0);
        assert!(matches!(step_burgers(&g, &s, 0.1, 0.0), Err(Error::Stability(_))));
    }
}
