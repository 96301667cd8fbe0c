use crate::error::{Error, Result};
use crate::field::{Field, Variable, VectorField};
use crate::grid::{BoundarySpec, StructuredGrid};
use crate::ops::gradient_into;
use crate::scalar::{lit, Real};

/// Smagorinsky eddy viscosity `(cs Δ)² |S|` with `Δ = sqrt(dx dy)` and
/// `|S| = sqrt(2 S_ij S_ij)` from central-difference velocity gradients.
pub fn smagorinsky_nu_t<T: Real>(
    grid: &StructuredGrid<T>,
    velocity: &VectorField<T>,
    bcs: &[BoundarySpec<T>],
    cs: T,
) -> Result<Field<T>> {
    if velocity.dim() != 2 || bcs.len() != 2 {
        return Err(Error::dim("Smagorinsky model needs a two-component velocity"));
    }
    for (c, bc) in velocity.components.iter().zip(bcs) {
        c.check_grid(grid)?;
        bc.validate(grid)?;
    }
    let mut out = vec![T::zero(); grid.n_fluid()];
    smagorinsky_into(grid, velocity, bcs, cs, &mut out);
    Ok(Field::new(Variable::NuT, out))
}

pub(crate) fn smagorinsky_into<T: Real>(
    grid: &StructuredGrid<T>,
    velocity: &VectorField<T>,
    bcs: &[BoundarySpec<T>],
    cs: T,
    out: &mut [T],
) {
    let n = grid.n_fluid();
    let mut du = vec![vec![T::zero(); n]; 2];
    let mut dv = vec![vec![T::zero(); n]; 2];
    gradient_into(grid, &velocity.components[0].values, &bcs[0], &mut du);
    gradient_into(grid, &velocity.components[1].values, &bcs[1], &mut dv);
    let delta2 = grid.dx() * grid.dy();
    let coef = cs * cs * delta2;
    let half = lit::<T>(0.5);
    let two = lit::<T>(2.0);
    for c in 0..n {
        let sxx = du[0][c];
        let syy = dv[1][c];
        let sxy = half * (du[1][c] + dv[0][c]);
        let mag = (two * (sxx * sxx + syy * syy + two * sxy * sxy)).sqrt();
        out[c] = coef * mag;
    }
}
