//! Second-order discrete differential operators on cell-centred fields.
//!
//! Boundary values enter through mirrored ghost cells, which makes every
//! operator affine in each field argument: linear for homogeneous boundary
//! specs, with a constant offset for prescribed values. The Galerkin
//! projection relies on that to split mean and fluctuation contributions
//! exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, VectorField};
use crate::grid::{BoundarySpec, Direction, Neighbor, StructuredGrid};
use crate::scalar::{lit, Real};

/// Discretization of the convective term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvectionScheme {
    /// `½[(u·∇)f + ∇·(u f)]` with central differences; energy-neutral on
    /// periodic grids.
    #[default]
    SkewCentral,
    /// First-order upwind `(u·∇)f`.
    Upwind,
}

const PLUS: [Direction; 2] = [Direction::East, Direction::North];
const MINUS: [Direction; 2] = [Direction::West, Direction::South];

/// Value of `f` across the face of cell `c` in direction `dir`.
#[inline]
pub fn value_across<T: Real>(
    grid: &StructuredGrid<T>,
    f: &[T],
    c: usize,
    dir: Direction,
    bc: &BoundarySpec<T>,
) -> T {
    match grid.neighbor(c, dir) {
        Neighbor::Cell(k) => f[k],
        Neighbor::Boundary(label) => bc.condition(label).ghost(f[c]),
    }
}

fn check_len<T: Real>(grid: &StructuredGrid<T>, f: &[T], what: &str) -> Result<()> {
    if f.len() != grid.n_fluid() {
        return Err(Error::dim(format!(
            "{what}: {} values for {} fluid cells",
            f.len(),
            grid.n_fluid()
        )));
    }
    Ok(())
}

/// Compact 5-point (3-point in 1D) Laplacian.
pub fn laplacian<T: Real>(
    grid: &StructuredGrid<T>,
    f: &Field<T>,
    bc: &BoundarySpec<T>,
) -> Result<Field<T>> {
    f.check_grid(grid)?;
    bc.validate(grid)?;
    let mut out = vec![T::zero(); f.len()];
    laplacian_into(grid, &f.values, bc, &mut out);
    Ok(Field::new(f.label, out))
}

pub(crate) fn laplacian_into<T: Real>(
    grid: &StructuredGrid<T>,
    f: &[T],
    bc: &BoundarySpec<T>,
    out: &mut [T],
) {
    let inv = [T::one() / (grid.dx() * grid.dx()), T::one() / (grid.dy() * grid.dy())];
    for c in 0..grid.n_fluid() {
        let mut s = T::zero();
        for dir in Direction::ALL {
            let (axis, _) = dir.axis_sign();
            s += (value_across(grid, f, c, dir, bc) - f[c]) * inv[axis];
        }
        out[c] = s;
    }
}

/// Conservative variable-coefficient diffusion `∇·(ν ∇f)`; face
/// coefficients are arithmetic means, boundary faces take the cell value.
pub fn diffusion<T: Real>(
    grid: &StructuredGrid<T>,
    nu: &[T],
    f: &Field<T>,
    bc: &BoundarySpec<T>,
) -> Result<Field<T>> {
    f.check_grid(grid)?;
    check_len(grid, nu, "viscosity")?;
    bc.validate(grid)?;
    let mut out = vec![T::zero(); f.len()];
    diffusion_into(grid, nu, &f.values, bc, &mut out);
    Ok(Field::new(f.label, out))
}

pub(crate) fn diffusion_into<T: Real>(
    grid: &StructuredGrid<T>,
    nu: &[T],
    f: &[T],
    bc: &BoundarySpec<T>,
    out: &mut [T],
) {
    let half = lit::<T>(0.5);
    let inv = [T::one() / (grid.dx() * grid.dx()), T::one() / (grid.dy() * grid.dy())];
    for c in 0..grid.n_fluid() {
        let mut s = T::zero();
        for dir in Direction::ALL {
            let (axis, _) = dir.axis_sign();
            let (nu_face, across) = match grid.neighbor(c, dir) {
                Neighbor::Cell(k) => (half * (nu[c] + nu[k]), f[k]),
                Neighbor::Boundary(label) => (nu[c], bc.condition(label).ghost(f[c])),
            };
            s += nu_face * (across - f[c]) * inv[axis];
        }
        out[c] = s;
    }
}

/// Central cell-centred gradient, one component per grid dimension.
pub fn gradient<T: Real>(
    grid: &StructuredGrid<T>,
    f: &Field<T>,
    bc: &BoundarySpec<T>,
) -> Result<VectorField<T>> {
    f.check_grid(grid)?;
    bc.validate(grid)?;
    let d = grid.dimension();
    let mut comps = vec![vec![T::zero(); f.len()]; d];
    gradient_into(grid, &f.values, bc, &mut comps);
    Ok(VectorField::new(
        comps
            .into_iter()
            .map(|v| Field::new(f.label, v))
            .collect(),
    ))
}

pub(crate) fn gradient_into<T: Real>(
    grid: &StructuredGrid<T>,
    f: &[T],
    bc: &BoundarySpec<T>,
    out: &mut [Vec<T>],
) {
    for (axis, comp) in out.iter_mut().enumerate() {
        let inv2h = T::one() / (grid.spacing(axis) + grid.spacing(axis));
        for c in 0..grid.n_fluid() {
            comp[c] = (value_across(grid, f, c, PLUS[axis], bc)
                - value_across(grid, f, c, MINUS[axis], bc))
                * inv2h;
        }
    }
}

/// Central cell-centred divergence of a vector field whose component `a`
/// obeys `bcs[a]`.
pub fn divergence<T: Real>(
    grid: &StructuredGrid<T>,
    vel: &VectorField<T>,
    bcs: &[BoundarySpec<T>],
) -> Result<Field<T>> {
    if bcs.len() != vel.dim() {
        return Err(Error::dim("one boundary spec per velocity component"));
    }
    for (c, bc) in vel.components.iter().zip(bcs) {
        c.check_grid(grid)?;
        bc.validate(grid)?;
    }
    let comps: Vec<&[T]> = vel.components.iter().map(|c| c.values.as_slice()).collect();
    let mut out = vec![T::zero(); grid.n_fluid()];
    divergence_into(grid, &comps, bcs, &mut out);
    Ok(Field::new(crate::field::Variable::P, out))
}

pub(crate) fn divergence_into<T: Real>(
    grid: &StructuredGrid<T>,
    vel: &[&[T]],
    bcs: &[BoundarySpec<T>],
    out: &mut [T],
) {
    out.iter_mut().for_each(|o| *o = T::zero());
    for (axis, comp) in vel.iter().enumerate() {
        let inv2h = T::one() / (grid.spacing(axis) + grid.spacing(axis));
        for c in 0..grid.n_fluid() {
            out[c] += (value_across(grid, comp, c, PLUS[axis], &bcs[axis])
                - value_across(grid, comp, c, MINUS[axis], &bcs[axis]))
                * inv2h;
        }
    }
}

/// Convective derivative `(vel·∇)f`.
pub fn convection<T: Real>(
    grid: &StructuredGrid<T>,
    vel: &VectorField<T>,
    vel_bcs: &[BoundarySpec<T>],
    f: &Field<T>,
    f_bc: &BoundarySpec<T>,
    scheme: ConvectionScheme,
) -> Result<Field<T>> {
    if vel_bcs.len() != vel.dim() {
        return Err(Error::dim("one boundary spec per velocity component"));
    }
    if vel.dim() > 2 || vel.dim() < grid.dimension() {
        return Err(Error::dim(format!(
            "{}-component velocity on a {}-D grid",
            vel.dim(),
            grid.dimension()
        )));
    }
    f.check_grid(grid)?;
    f_bc.validate(grid)?;
    for (c, bc) in vel.components.iter().zip(vel_bcs) {
        c.check_grid(grid)?;
        bc.validate(grid)?;
    }
    let comps: Vec<&[T]> = vel.components.iter().map(|c| c.values.as_slice()).collect();
    let mut out = vec![T::zero(); f.len()];
    convection_into(grid, &comps, vel_bcs, &f.values, f_bc, scheme, &mut out);
    Ok(Field::new(f.label, out))
}

pub(crate) fn convection_into<T: Real>(
    grid: &StructuredGrid<T>,
    vel: &[&[T]],
    vel_bcs: &[BoundarySpec<T>],
    f: &[T],
    f_bc: &BoundarySpec<T>,
    scheme: ConvectionScheme,
    out: &mut [T],
) {
    let half = lit::<T>(0.5);
    out.iter_mut().for_each(|o| *o = T::zero());
    for (axis, va) in vel.iter().enumerate() {
        let h = grid.spacing(axis);
        let inv2h = T::one() / (h + h);
        let vbc = &vel_bcs[axis];
        for c in 0..grid.n_fluid() {
            let fp = value_across(grid, f, c, PLUS[axis], f_bc);
            let fm = value_across(grid, f, c, MINUS[axis], f_bc);
            out[c] += match scheme {
                ConvectionScheme::SkewCentral => {
                    let vp = value_across(grid, va, c, PLUS[axis], vbc);
                    let vm = value_across(grid, va, c, MINUS[axis], vbc);
                    half * (va[c] * (fp - fm) + (vp * fp - vm * fm)) * inv2h
                }
                ConvectionScheme::Upwind => {
                    if va[c] > T::zero() {
                        va[c] * (f[c] - fm) / h
                    } else {
                        va[c] * (fp - f[c]) / h
                    }
                }
            };
        }
    }
}

/// Normal derivatives on cell faces: every cell owns its east and north
/// faces; `west`/`south` hold values only where the neighbour across that
/// face is a boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceGradient<T> {
    pub east: Vec<T>,
    pub north: Vec<T>,
    pub west: Vec<T>,
    pub south: Vec<T>,
}

/// Two-point normal gradient on every face (second-order at the face).
pub fn face_gradient<T: Real>(
    grid: &StructuredGrid<T>,
    f: &Field<T>,
    bc: &BoundarySpec<T>,
) -> Result<FaceGradient<T>> {
    f.check_grid(grid)?;
    bc.validate(grid)?;
    let n = f.len();
    let v = &f.values;
    let mut g = FaceGradient {
        east: vec![T::zero(); n],
        north: vec![T::zero(); n],
        west: vec![T::zero(); n],
        south: vec![T::zero(); n],
    };
    let (dx, dy) = (grid.dx(), grid.dy());
    for c in 0..n {
        g.east[c] = (value_across(grid, v, c, Direction::East, bc) - v[c]) / dx;
        g.north[c] = (value_across(grid, v, c, Direction::North, bc) - v[c]) / dy;
        if let Neighbor::Boundary(_) = grid.neighbor(c, Direction::West) {
            g.west[c] = (v[c] - value_across(grid, v, c, Direction::West, bc)) / dx;
        }
        if let Neighbor::Boundary(_) = grid.neighbor(c, Direction::South) {
            g.south[c] = (v[c] - value_across(grid, v, c, Direction::South, bc)) / dy;
        }
    }
    Ok(g)
}

/// Cell divergence of face-normal fluxes; composed with
/// [`face_gradient`] it reproduces [`laplacian`].
pub fn face_divergence<T: Real>(grid: &StructuredGrid<T>, g: &FaceGradient<T>) -> Result<Field<T>> {
    let n = grid.n_fluid();
    if g.east.len() != n || g.north.len() != n || g.west.len() != n || g.south.len() != n {
        return Err(Error::dim("face data does not match grid"));
    }
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut out = vec![T::zero(); n];
    for c in 0..n {
        let west = match grid.neighbor(c, Direction::West) {
            Neighbor::Cell(k) => g.east[k],
            Neighbor::Boundary(_) => g.west[c],
        };
        let south = match grid.neighbor(c, Direction::South) {
            Neighbor::Cell(k) => g.north[k],
            Neighbor::Boundary(_) => g.south[c],
        };
        out[c] = (g.east[c] - west) / dx + (g.north[c] - south) / dy;
    }
    Ok(Field::new(crate::field::Variable::P, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inner_product, Variable};
    use crate::grid::{BoundaryCondition, BoundaryLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(n: usize, rng: &mut ChaCha8Rng) -> Field<f64> {
        Field::new(Variable::U, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn bounded_zero_gradient() -> BoundarySpec<f64> {
        BoundarySpec::new()
            .with(BoundaryLabel::West, BoundaryCondition::ZeroGradient)
            .with(BoundaryLabel::East, BoundaryCondition::ZeroGradient)
            .with(BoundaryLabel::South, BoundaryCondition::ZeroGradient)
            .with(BoundaryLabel::North, BoundaryCondition::ZeroGradient)
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = StructuredGrid::<f64>::new(7, 5, 0.1, 0.2, false, false).unwrap();
        let f = Field::constant(Variable::P, g.n_fluid(), 3.5);
        let l = laplacian(&g, &f, &bounded_zero_gradient()).unwrap();
        assert!(l.max_abs() < 1e-10);
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        let g = StructuredGrid::<f64>::new(20, 1, 0.05, 1.0, false, true).unwrap();
        let bc = BoundarySpec::new()
            .with(BoundaryLabel::West, BoundaryCondition::ZeroGradient)
            .with(BoundaryLabel::East, BoundaryCondition::ZeroGradient);
        let f = Field::from_fn(Variable::U, &g, |x, _| x * x);
        let l = laplacian(&g, &f, &bc).unwrap();
        for c in 1..19 {
            assert!((l.values[c] - 2.0).abs() < 1e-9, "{}", l.values[c]);
        }
    }

    #[test]
    fn laplacian_discrete_fourier_eigenvalue() {
        let n = 32;
        let g = StructuredGrid::<f64>::periodic_line(n, 2.0 * PI).unwrap();
        let k = 3.0;
        let dx = g.dx();
        let f = Field::from_fn(Variable::U, &g, |x, _| (k * x).sin());
        let l = laplacian(&g, &f, &BoundarySpec::periodic()).unwrap();
        let lambda = -(2.0 / (dx * dx)) * (1.0 - (k * dx).cos());
        for c in 0..n {
            assert!((l.values[c] - lambda * f.values[c]).abs() < 1e-11);
        }
    }

    #[test]
    fn convection_trivial_cases() {
        let g = StructuredGrid::<f64>::new(8, 6, 0.1, 0.1, true, true).unwrap();
        let bcs = [BoundarySpec::periodic(), BoundarySpec::periodic()];
        let f = Field::from_fn(Variable::U, &g, |x, y| (x * 3.0).sin() + y);
        let zero = VectorField::zeros(2, g.n_fluid());
        let c = convection(&g, &zero, &bcs, &f, &BoundarySpec::periodic(), ConvectionScheme::SkewCentral)
            .unwrap();
        assert_eq!(c.max_abs(), 0.0);
        let uni = VectorField::new(vec![
            Field::constant(Variable::U, g.n_fluid(), 0.7),
            Field::constant(Variable::V, g.n_fluid(), -0.2),
        ]);
        let k = Field::constant(Variable::U, g.n_fluid(), 2.0);
        for scheme in [ConvectionScheme::SkewCentral, ConvectionScheme::Upwind] {
            let c = convection(&g, &uni, &bcs, &k, &BoundarySpec::periodic(), scheme).unwrap();
            assert!(c.max_abs() < 1e-12);
        }
    }

    #[test]
    fn convection_of_linear_function() {
        let g = StructuredGrid::<f64>::new(10, 4, 0.1, 0.1, false, true).unwrap();
        let zg = BoundarySpec::new()
            .with(BoundaryLabel::West, BoundaryCondition::ZeroGradient)
            .with(BoundaryLabel::East, BoundaryCondition::ZeroGradient);
        let vel = VectorField::new(vec![
            Field::constant(Variable::U, g.n_fluid(), 1.0),
            Field::zeros(Variable::V, g.n_fluid()),
        ]);
        let f = Field::from_fn(Variable::U, &g, |x, _| x);
        let c = convection(&g, &vel, &[zg.clone(), zg.clone()], &f, &zg, ConvectionScheme::SkewCentral)
            .unwrap();
        for cell in 0..g.n_fluid() {
            let (i, _) = g.cell_ij(cell);
            if i > 0 && i < 9 {
                assert!((c.values[cell] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_and_divergence_of_constants() {
        let g = StructuredGrid::<f64>::new(6, 5, 0.1, 0.3, false, false).unwrap();
        let bc = bounded_zero_gradient();
        let f = Field::constant(Variable::P, g.n_fluid(), -1.25);
        let gr = gradient(&g, &f, &bc).unwrap();
        assert!(gr.max_abs() < 1e-12);
        let vel = VectorField::new(vec![
            Field::constant(Variable::U, g.n_fluid(), 1.5),
            Field::constant(Variable::V, g.n_fluid(), 0.5),
        ]);
        let d = divergence(&g, &vel, &[bc.clone(), bc]).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn face_pair_composes_to_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = StructuredGrid::<f64>::new(9, 7, 0.13, 0.21, true, true).unwrap();
        let f = random_field(g.n_fluid(), &mut rng);
        let bc = BoundarySpec::periodic();
        let dg = face_divergence(&g, &face_gradient(&g, &f, &bc).unwrap()).unwrap();
        let l = laplacian(&g, &f, &bc).unwrap();
        let scale = l.max_abs();
        for c in 0..g.n_fluid() {
            assert!((dg.values[c] - l.values[c]).abs() <= 1e-12 * scale);
        }
        // also with an obstacle and mixed conditions
        let spec = crate::grid::GridSpec {
            nx: 10,
            ny: 8,
            dx: 0.1,
            dy: 0.1,
            periodic_x: false,
            periodic_y: false,
            obstacle: Some(crate::grid::CellRect { i0: 3, i1: 5, j0: 3, j1: 5 }),
        };
        let g: StructuredGrid<f64> = spec.build().unwrap();
        let bc = bounded_zero_gradient()
            .with(BoundaryLabel::West, BoundaryCondition::FixedValue(1.0))
            .with(BoundaryLabel::Body, BoundaryCondition::FixedValue(0.0));
        let f = random_field(g.n_fluid(), &mut rng);
        let dg = face_divergence(&g, &face_gradient(&g, &f, &bc).unwrap()).unwrap();
        let l = laplacian(&g, &f, &bc).unwrap();
        let scale = l.max_abs();
        for c in 0..g.n_fluid() {
            assert!((dg.values[c] - l.values[c]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn laplacian_is_self_adjoint_on_periodic_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = StructuredGrid::<f64>::new(12, 9, 0.1, 0.15, true, true).unwrap();
        let bc = BoundarySpec::periodic();
        for _ in 0..5 {
            let f = random_field(g.n_fluid(), &mut rng);
            let h = random_field(g.n_fluid(), &mut rng);
            let a = inner_product(&laplacian(&g, &f, &bc).unwrap(), &h, &g).unwrap();
            let b = inner_product(&f, &laplacian(&g, &h, &bc).unwrap(), &g).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
        }
    }

    #[test]
    fn periodic_convection_is_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = StructuredGrid::<f64>::new(16, 12, 0.1, 0.1, true, true).unwrap();
        let bc = BoundarySpec::periodic();
        // divergence-free velocity from a random stream function
        let psi = random_field(g.n_fluid(), &mut rng);
        let grad = gradient(&g, &psi, &bc).unwrap();
        let vel = VectorField::new(vec![
            Field::new(Variable::U, grad.components[1].values.clone()),
            Field::new(Variable::V, grad.components[0].values.iter().map(|v| -v).collect()),
        ]);
        let f = random_field(g.n_fluid(), &mut rng);
        let c = convection(&g, &vel, &[bc.clone(), bc.clone()], &f, &bc, ConvectionScheme::SkewCentral)
            .unwrap();
        let e = inner_product(&c, &f, &g).unwrap();
        let scale = inner_product(&c, &c, &g).unwrap().sqrt() * inner_product(&f, &f, &g).unwrap().sqrt();
        assert!(e.abs() <= 1e-10 * scale);
    }

    #[test]
    fn unknown_or_missing_label_is_config_error() {
        let g = StructuredGrid::<f64>::new(4, 4, 0.1, 0.1, false, true).unwrap();
        let f = Field::zeros(Variable::U, g.n_fluid());
        let bc = BoundarySpec::new().with(BoundaryLabel::West, BoundaryCondition::ZeroGradient);
        assert!(matches!(laplacian(&g, &f, &bc), Err(Error::Config(_))));
    }
}
